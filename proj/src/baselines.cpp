#include "drsn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "drsn/rng.hpp"

namespace drsn {

FeatureVector extract_features(const GestureSample& sample, FeatureMode mode) {
  const std::size_t channels = sample.window.dim(0), w = sample.window.dim(1);
  FeatureVector fv;
  fv.label = sample.label;
  if (mode == FeatureMode::flatten_decim) {
    fv.values.reserve(channels * ((w + kDecimationFactor - 1) / kDecimationFactor));
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t t = 0; t < w; t += kDecimationFactor) fv.values.push_back(sample.window[c * w + t]);
    return fv;
  }
  fv.values.reserve(4 * channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const double* x = sample.window.data() + c * w;
    double mav = 0.0, sq = 0.0, wl = 0.0, zc = 0.0;
    for (std::size_t t = 0; t < w; ++t) {
      mav += std::abs(x[t]);
      sq += x[t] * x[t];
      if (t + 1 < w) {
        wl += std::abs(x[t + 1] - x[t]);
        if (x[t] * x[t + 1] < 0.0) zc += 1.0;
      }
    }
    fv.values.push_back(mav / static_cast<double>(w));
    fv.values.push_back(std::sqrt(sq / static_cast<double>(w)));
    fv.values.push_back(wl);
    fv.values.push_back(zc);
  }
  return fv;
}

std::vector<FeatureVector> extract_features(std::span<const GestureSample> samples,
                                            FeatureMode mode) {
  std::vector<FeatureVector> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(extract_features(s, mode));
  return out;
}

namespace {

void check_dim(std::size_t expected, std::size_t got) {
  if (expected != got) {
    throw ContractError(fmt::format("feature dimension {} does not match model dimension {}", got,
                                    expected));
  }
}

int argmax_low(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < v.size(); ++k)
    if (v[k] > v[best]) best = k;
  return static_cast<int>(best);
}

}  // namespace

std::vector<double> LogisticRegressionModel::logits(std::span<const double> features) const {
  check_dim(dim(), features.size());
  const std::size_t K = num_classes(), D = dim();
  std::vector<double> z(K);
  for (std::size_t k = 0; k < K; ++k) {
    double acc = bias[k];
    for (std::size_t d = 0; d < D; ++d) {
      const double m = feature_mean.empty() ? 0.0 : feature_mean[d];
      const double s = feature_std.empty() ? 1.0 : feature_std[d];
      acc += weights[k * D + d] * (features[d] - m) / s;
    }
    z[k] = acc;
  }
  return z;
}

double lr_objective(const LogisticRegressionModel& model, std::span<const FeatureVector> data,
                    double l2, Tensor* grad_weights, Tensor* grad_bias) {
  const std::size_t K = model.num_classes(), D = model.dim();
  if (grad_weights) *grad_weights = Tensor(Shape{K, D}, 0.0);
  if (grad_bias) *grad_bias = Tensor(Shape{K}, 0.0);
  const double inv_n = 1.0 / static_cast<double>(data.size());
  double loss = 0.0;
  std::vector<double> x(D), p(K);
  for (const auto& fv : data) {
    for (std::size_t d = 0; d < D; ++d) {
      const double m = model.feature_mean.empty() ? 0.0 : model.feature_mean[d];
      const double s = model.feature_std.empty() ? 1.0 : model.feature_std[d];
      x[d] = (fv.values[d] - m) / s;
    }
    const auto z = model.logits(fv.values);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(z[k] - zmax);
    const double lse = zmax + std::log(sum);
    loss += (lse - z[static_cast<std::size_t>(fv.label)]) * inv_n;
    for (std::size_t k = 0; k < K; ++k) {
      p[k] = std::exp(z[k] - lse) - (static_cast<int>(k) == fv.label ? 1.0 : 0.0);
      if (grad_bias) (*grad_bias)[k] += p[k] * inv_n;
      if (grad_weights)
        for (std::size_t d = 0; d < D; ++d) (*grad_weights)[k * D + d] += p[k] * x[d] * inv_n;
    }
  }
  if (l2 > 0.0) {
    for (std::size_t i = 0; i < model.weights.size(); ++i) {
      loss += 0.5 * l2 * model.weights[i] * model.weights[i];
      if (grad_weights) (*grad_weights)[i] += l2 * model.weights[i];
    }
  }
  return loss;
}

LogisticRegressionModel lr_train(std::span<const FeatureVector> data,
                                 const LogisticRegressionConfig& config) {
  if (data.empty()) throw ContractError("logistic regression needs training data");
  if (config.epochs < 1) throw ConfigError("logistic regression epochs must be at least 1");
  const std::size_t D = data.front().values.size();
  const std::size_t K = static_cast<std::size_t>(config.num_classes);
  std::vector<bool> seen(K, false);
  for (const auto& fv : data) {
    check_dim(D, fv.values.size());
    if (fv.label < 0 || fv.label >= config.num_classes) {
      throw ContractError("label " + std::to_string(fv.label) + " out of range");
    }
    seen[static_cast<std::size_t>(fv.label)] = true;
  }
  if (std::count(seen.begin(), seen.end(), true) < 2) {
    throw ContractError("logistic regression needs at least 2 classes present");
  }

  LogisticRegressionModel model;
  model.feature_mean.assign(D, 0.0);
  model.feature_std.assign(D, 0.0);
  for (const auto& fv : data)
    for (std::size_t d = 0; d < D; ++d) model.feature_mean[d] += fv.values[d];
  for (auto& m : model.feature_mean) m /= static_cast<double>(data.size());
  for (const auto& fv : data)
    for (std::size_t d = 0; d < D; ++d) {
      const double dv = fv.values[d] - model.feature_mean[d];
      model.feature_std[d] += dv * dv;
    }
  for (auto& s : model.feature_std) s = std::max(std::sqrt(s / static_cast<double>(data.size())), 1e-8);
  model.weights = Tensor(Shape{K, D}, 0.0);
  model.bias = Tensor(Shape{K}, 0.0);

  Tensor gw, gb;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double loss = lr_objective(model, data, config.l2, &gw, &gb);
    if (!std::isfinite(loss)) {
      throw DivergenceError(fmt::format("logistic regression loss became non-finite at epoch {}; "
                                        "try a smaller learning rate than {}",
                                        epoch, config.learning_rate),
                            epoch - 1);
    }
    model.loss_history.push_back(loss);
    for (std::size_t i = 0; i < gw.size(); ++i) model.weights[i] -= config.learning_rate * gw[i];
    for (std::size_t i = 0; i < gb.size(); ++i) model.bias[i] -= config.learning_rate * gb[i];
  }
  return model;
}

double gini(std::span<const std::size_t> class_counts) {
  const double n = static_cast<double>(
      std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0}));
  if (n == 0.0) return 0.0;
  double g = 1.0;
  for (auto c : class_counts) {
    const double p = static_cast<double>(c) / n;
    g -= p * p;
  }
  return g;
}

int majority_vote(std::span<const int> labels, int num_classes) {
  std::vector<double> votes(static_cast<std::size_t>(num_classes), 0.0);
  for (int l : labels) votes[static_cast<std::size_t>(l)] += 1.0;
  return argmax_low(votes);
}

int DecisionTree::predict(std::span<const double> features) const {
  int i = 0;
  while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
    const Node& n = nodes[static_cast<std::size_t>(i)];
    i = features[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)].label;
}

std::size_t DecisionTree::depth() const {
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

namespace {

class TreeBuilder {
 public:
  TreeBuilder(std::span<const FeatureVector> data, const RandomForestConfig& config, Rng& rng)
      : data_(data),
        config_(config),
        rng_(rng),
        dim_(data.front().values.size()),
        classes_(static_cast<std::size_t>(config.num_classes)) {
    mtry_ = config.max_features > 0
                ? std::min(config.max_features, dim_)
                : std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(dim_))));
  }

  DecisionTree build(std::vector<std::size_t> rows) {
    tree_.nodes.clear();
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;
  };

  std::vector<std::size_t> counts(std::span<const std::size_t> rows) const {
    std::vector<std::size_t> c(classes_, 0);
    for (auto r : rows) ++c[static_cast<std::size_t>(data_[r].label)];
    return c;
  }

  int grow(std::vector<std::size_t>& rows, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    const auto c = counts(rows);
    std::vector<double> votes(c.begin(), c.end());
    tree_.nodes[static_cast<std::size_t>(id)].label = argmax_low(votes);

    const bool pure = std::count_if(c.begin(), c.end(), [](std::size_t v) { return v > 0; }) <= 1;
    const bool depth_cap = config_.max_depth > 0 && depth >= config_.max_depth;
    if (pure || depth_cap || rows.size() < 2) return id;

    const Split best = find_split(rows);
    if (best.feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (auto r : rows) {
      (data_[r].values[static_cast<std::size_t>(best.feature)] <= best.threshold ? left : right)
          .push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    auto& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  // Scans mtry random features; when none of them separates the rows, keeps
  // drawing from the remaining features until one does.
  Split find_split(std::span<const std::size_t> rows) {
    std::vector<std::size_t> order(dim_);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng_);

    Split best;
    best.impurity = std::numeric_limits<double>::infinity();
    const auto parent = counts(rows);
    std::vector<std::pair<double, int>> column(rows.size());
    for (std::size_t k = 0; k < dim_; ++k) {
      if (k >= mtry_ && best.feature >= 0) break;
      const std::size_t f = order[k];
      for (std::size_t i = 0; i < rows.size(); ++i) {
        column[i] = {data_[rows[i]].values[f], data_[rows[i]].label};
      }
      std::sort(column.begin(), column.end());
      std::vector<std::size_t> left(classes_, 0), right = parent;
      const double n = static_cast<double>(rows.size());
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        const auto lab = static_cast<std::size_t>(column[i].second);
        ++left[lab];
        --right[lab];
        if (column[i].first == column[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1), nr = n - nl;
        const double imp = (nl * gini(left) + nr * gini(right)) / n;
        if (imp < best.impurity) {
          best.impurity = imp;
          best.feature = static_cast<int>(f);
          best.threshold = 0.5 * (column[i].first + column[i + 1].first);
        }
      }
    }
    return best;
  }

  std::span<const FeatureVector> data_;
  const RandomForestConfig& config_;
  Rng& rng_;
  std::size_t dim_;
  std::size_t classes_;
  std::size_t mtry_ = 1;
  DecisionTree tree_;
};

}  // namespace

DecisionTree grow_tree(std::span<const FeatureVector> data, const RandomForestConfig& config,
                       std::uint64_t tree_seed) {
  Rng rng(tree_seed);
  std::vector<std::size_t> rows(data.size());
  if (config.bootstrap) {
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    for (auto& r : rows) r = pick(rng);
  } else {
    std::iota(rows.begin(), rows.end(), std::size_t{0});
  }
  return TreeBuilder(data, config, rng).build(std::move(rows));
}

RandomForestModel rf_train(std::span<const FeatureVector> data, const RandomForestConfig& config) {
  if (data.empty()) throw ContractError("random forest needs training data");
  if (config.num_trees < 1) throw ConfigError("random forest needs at least one tree");
  const std::size_t D = data.front().values.size();
  for (const auto& fv : data) {
    check_dim(D, fv.values.size());
    if (fv.label < 0 || fv.label >= config.num_classes) {
      throw ContractError("label " + std::to_string(fv.label) + " out of range");
    }
  }
  RandomForestModel model;
  model.dim = D;
  model.num_classes = config.num_classes;
  model.trees.resize(static_cast<std::size_t>(config.num_trees));
  const std::uint64_t forest_seed = derive_seed(config.seed, stream::forest);
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < config.num_trees; ++t) {
    model.trees[static_cast<std::size_t>(t)] =
        grow_tree(data, config, derive_seed(forest_seed, static_cast<std::uint64_t>(t)));
  }
  return model;
}

int predict(const LogisticRegressionModel& model, std::span<const double> features) {
  const auto z = model.logits(features);
  return argmax_low(z);
}

int predict(const RandomForestModel& model, std::span<const double> features) {
  check_dim(model.dim, features.size());
  std::vector<int> votes;
  votes.reserve(model.trees.size());
  for (const auto& t : model.trees) votes.push_back(t.predict(features));
  return majority_vote(votes, model.num_classes);
}

}  // namespace drsn
