#include <doctest.h>

#include <cmath>
#include <random>

#include "drsn/baselines.hpp"

using namespace drsn;

namespace {

std::vector<FeatureVector> blobs(int classes, int per_class, std::size_t dim, double spread,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, spread);
  std::vector<FeatureVector> out;
  for (int k = 0; k < classes; ++k)
    for (int i = 0; i < per_class; ++i) {
      FeatureVector f;
      f.label = k;
      for (std::size_t d = 0; d < dim; ++d)
        f.values.push_back((d == static_cast<std::size_t>(k) % dim ? 3.0 : 0.0) + n(rng));
      out.push_back(std::move(f));
    }
  return out;
}

double accuracy(const auto& model, const std::vector<FeatureVector>& data) {
  std::size_t hit = 0;
  for (const auto& f : data) hit += predict(model, f.values) == f.label;
  return static_cast<double>(hit) / static_cast<double>(data.size());
}

}  // namespace

TEST_CASE("time-domain features of a known window") {
  GestureSample s{Tensor(Shape{kChannels, 4}), 2, 0};
  const double row[4] = {1.0, -2.0, 3.0, 0.0};
  for (std::size_t t = 0; t < 4; ++t) s.window[t] = row[t];
  const FeatureVector f = extract_features(s, FeatureMode::timedomain);
  REQUIRE(f.values.size() == 4 * kChannels);
  CHECK(f.label == 2);
  CHECK(f.values[0] == doctest::Approx(1.5));                    // MAV
  CHECK(f.values[1] == doctest::Approx(std::sqrt(14.0 / 4.0)));  // RMS
  CHECK(f.values[2] == doctest::Approx(3.0 + 5.0 + 3.0));        // waveform length
  CHECK(f.values[3] == doctest::Approx(2.0));                    // sign changes
  for (std::size_t k = 4; k < 8; ++k) CHECK(f.values[k] == 0.0);

  GestureSample wide{Tensor(Shape{kChannels, 64}, 1.0), 0, 0};
  CHECK(extract_features(wide, FeatureMode::flatten_decim).values.size() ==
        kChannels * 64 / kDecimationFactor);
}

TEST_CASE("gini impurity and majority vote") {
  const std::size_t pure[] = {5, 0, 0};
  const std::size_t even[] = {2, 2};
  const std::size_t empty[] = {0, 0};
  CHECK(gini(pure) == 0.0);
  CHECK(gini(even) == doctest::Approx(0.5));
  CHECK(gini(empty) == 0.0);
  const int votes[] = {3, 1, 1, 3, 2};
  CHECK(majority_vote(votes, 4) == 1);
  const int one[] = {2};
  CHECK(majority_vote(one, 4) == 2);
}

TEST_CASE("logistic regression gradient matches finite differences") {
  auto data = blobs(3, 10, 4, 1.0, 1);
  LogisticRegressionConfig cfg{.num_classes = 3, .learning_rate = 0.1, .epochs = 5, .l2 = 0.01};
  LogisticRegressionModel m = lr_train(data, cfg);
  Tensor gw, gb;
  lr_objective(m, data, cfg.l2, &gw, &gb);
  const double eps = 1e-6;
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    const double keep = m.weights[i];
    m.weights[i] = keep + eps;
    const double up = lr_objective(m, data, cfg.l2, nullptr, nullptr);
    m.weights[i] = keep - eps;
    const double down = lr_objective(m, data, cfg.l2, nullptr, nullptr);
    m.weights[i] = keep;
    CHECK(gw[i] == doctest::Approx((up - down) / (2 * eps)).epsilon(1e-6));
  }
  for (std::size_t i = 0; i < m.bias.size(); ++i) {
    const double keep = m.bias[i];
    m.bias[i] = keep + eps;
    const double up = lr_objective(m, data, cfg.l2, nullptr, nullptr);
    m.bias[i] = keep - eps;
    const double down = lr_objective(m, data, cfg.l2, nullptr, nullptr);
    m.bias[i] = keep;
    CHECK(gb[i] == doctest::Approx((up - down) / (2 * eps)).epsilon(1e-6));
  }
}

TEST_CASE("logistic regression learns separable blobs with a falling loss") {
  const auto data = blobs(4, 30, 4, 0.5, 2);
  LogisticRegressionConfig cfg{.num_classes = 4, .learning_rate = 0.5, .epochs = 200};
  const auto m = lr_train(data, cfg);
  CHECK(accuracy(m, data) > 0.97);
  CHECK(m.loss_history.back() < m.loss_history.front());
  const double wrong_dim[] = {1.0};
  CHECK_THROWS_AS(predict(m, wrong_dim), ContractError);
  auto single = blobs(1, 5, 4, 0.5, 3);
  CHECK_THROWS_AS(lr_train(single, cfg), ContractError);
}

TEST_CASE("an unlimited tree memorizes distinct points") {
  const auto data = blobs(5, 12, 3, 2.0, 4);
  RandomForestConfig cfg{.num_classes = 5, .max_depth = 0, .max_features = 3, .bootstrap = false};
  const DecisionTree tree = grow_tree(data, cfg, 1);
  std::size_t hit = 0;
  for (const auto& f : data) hit += tree.predict(f.values) == f.label;
  CHECK(hit == data.size());
  cfg.max_depth = 2;
  CHECK(grow_tree(data, cfg, 1).depth() <= 2);
}

TEST_CASE("a forest is at least as accurate as one of its trees on held-out data") {
  const auto train = blobs(4, 40, 6, 1.6, 5);
  const auto test = blobs(4, 40, 6, 1.6, 6);
  RandomForestConfig cfg{.num_classes = 4, .num_trees = 60, .seed = 3};
  const RandomForestModel forest = rf_train(train, cfg);
  REQUIRE(forest.trees.size() == 60);
  RandomForestModel lone = forest;
  lone.trees.resize(1);
  CHECK(accuracy(forest, test) >= accuracy(lone, test));
  CHECK(accuracy(forest, train) > 0.95);

  const RandomForestModel again = rf_train(train, cfg);
  for (const auto& f : test) CHECK(predict(again, f.values) == predict(forest, f.values));
  const double wrong_dim[] = {1.0, 2.0};
  CHECK_THROWS_AS(predict(forest, wrong_dim), ContractError);
}
