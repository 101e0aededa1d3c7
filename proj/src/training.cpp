#include "drsn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace drsn {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
}

double accuracy_of(const ConfusionMatrix& confusion) {
  std::size_t total = 0, hit = 0;
  for (std::size_t i = 0; i < confusion.size(); ++i)
    for (std::size_t j = 0; j < confusion[i].size(); ++j) {
      total += confusion[i][j];
      if (i == j) hit += confusion[i][j];
    }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

Evaluation evaluate_predictions(std::span<const int> truth, std::span<const int> predicted,
                                int num_classes) {
  if (truth.size() != predicted.size()) throw DimensionError("truth/prediction length mismatch");
  Evaluation ev;
  const auto k = static_cast<std::size_t>(num_classes);
  ev.confusion.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++ev.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  ev.accuracy = accuracy_of(ev.confusion);
  return ev;
}

Tensor stack_windows(std::span<const GestureSample> samples, std::span<const std::size_t> rows) {
  if (rows.empty()) throw ContractError("cannot stack an empty batch");
  const Shape& ws = samples[rows[0]].window.shape();
  const std::size_t per = samples[rows[0]].window.size();
  Tensor out(Shape{rows.size(), ws[0], ws[1]});
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const Tensor& w = samples[rows[b]].window;
    if (w.shape() != ws) throw DimensionError("windows in a batch differ in shape");
    std::copy(w.values().begin(), w.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(b * per));
  }
  return out;
}

Evaluation evaluate(Network& model, std::span<const GestureSample> samples,
                    std::size_t batch_size) {
  if (samples.empty()) throw ContractError("evaluate needs at least one sample");
  const int classes = static_cast<int>(model.config().num_classes);
  std::vector<int> truth, predicted;
  truth.reserve(samples.size());
  predicted.reserve(samples.size());
  double loss_sum = 0.0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    std::vector<int> labels;
    for (auto r : rows) labels.push_back(samples[r].label);

    Tape tape(TapeOptions{.record = false});
    Var logits = model.forward(tape, tape.constant(stack_windows(samples, rows)), Phase::eval);
    Var loss = ops::softmax_cross_entropy(logits, labels);
    loss_sum += loss.value().item() * static_cast<double>(rows.size());
    const auto z = logits.value().values();
    const std::size_t k = static_cast<std::size_t>(classes);
    for (std::size_t b = 0; b < rows.size(); ++b) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < k; ++j)
        if (z[b * k + j] > z[b * k + best]) best = j;
      predicted.push_back(static_cast<int>(best));
      truth.push_back(labels[b]);
    }
  }
  Evaluation ev = evaluate_predictions(truth, predicted, classes);
  ev.loss = loss_sum / static_cast<double>(samples.size());
  return ev;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   Rng& rng) {
  if (batch_size == 0) throw ContractError("batch size must be positive");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t count = (n + batch_size - 1) / batch_size;
  std::vector<std::vector<std::size_t>> batches(count);
  const std::size_t base = count ? n / count : 0, extra = count ? n % count : 0;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t size = base + (b < extra ? 1 : 0);
    batches[b].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                      perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return batches;
}

Metrics train_loop(Network& model, const DatasetSplit& split, const TrainConfig& config,
                   const EpochCallback& on_epoch) {
  config.validate();
  if (split.train.size() < 2) throw ContractError("training needs at least 2 samples");
  if (split.test.empty()) throw ContractError("training needs a non-empty held-out set");
  const Shape& ws = split.train.front().window.shape();
  if (ws[0] != model.config().input_channels || ws[1] != model.config().input_width) {
    throw DimensionError(fmt::format("samples are {}, model expects [{},{}]", shape_string(ws),
                                     model.config().input_channels, model.config().input_width));
  }

  const auto started = std::chrono::steady_clock::now();
  Optimizer optimizer(config.optimizer, config.learning_rate);
  const auto params = model.parameters();
  Network last_good = model;
  Metrics metrics;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng(derive_seed(derive_seed(config.seed, stream::shuffle), static_cast<std::uint64_t>(epoch)));
    const auto batches = make_batches(split.train.size(), config.batch_size, rng);
    for (const auto& rows : batches) {
      std::vector<int> labels;
      labels.reserve(rows.size());
      for (auto r : rows) labels.push_back(split.train[r].label);
      try {
        Tape tape;
        Var x = tape.constant(stack_windows(split.train, rows));
        Var loss = ops::softmax_cross_entropy(model.forward(tape, x, Phase::train), labels);
        if (!std::isfinite(loss.value().item())) {
          throw DivergenceError(fmt::format("training loss became non-finite in epoch {}", epoch));
        }
        model.zero_grad();
        tape.backward(loss);
        optimizer.step(params);
      } catch (const DivergenceError& e) {
        model = last_good;
        throw DivergenceError(e.what(), epoch - 1);
      }
      ++metrics.steps;
    }

    const Evaluation tr = evaluate(model, split.train);
    const Evaluation va = evaluate(model, split.test);
    EpochMetrics em{epoch, tr.loss, tr.accuracy, va.loss, va.accuracy};
    metrics.epochs.push_back(em);
    metrics.confusion = va.confusion;
    last_good = model;
    if (on_epoch) on_epoch(em);
  }
  metrics.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return metrics;
}

}  // namespace drsn
