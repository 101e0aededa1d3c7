#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "drsn/experiments.hpp"
#include "drsn/report.hpp"

using namespace drsn;
namespace fs = std::filesystem;

namespace {

ModelConfig toy_model(std::size_t width) {
  ModelConfig c;
  c.input_width = width;
  c.stage_channels = {4, 8};
  c.blocks_per_stage = {1, 1};
  c.seed = 3;
  return c;
}

DatasetSplit toy_split(int per_class, std::size_t width) {
  return prepare_split(gen_synthetic(8, per_class, width, 9), 0.75, 1);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("adam leaves parameters alone for a zero gradient") {
  Parameter p("p", Tensor::from({1.0, -2.0}));
  Parameter* ps[] = {&p};
  AdamState st;
  adam_step(ps, st, AdamConfig{});
  CHECK(p.value == Tensor::from({1.0, -2.0}));
  CHECK(st.step == 1);
}

TEST_CASE("adam steps approach lr * sign(g) for a constant gradient") {
  Parameter p("p", Tensor::from({0.0, 0.0}));
  Parameter* ps[] = {&p};
  AdamState st;
  AdamConfig cfg{.learning_rate = 0.01};
  double prev = 0.0;
  for (int i = 0; i < 200; ++i) {
    p.grad = Tensor::from({3.0, -0.5});
    prev = p.value[0];
    adam_step(ps, st, cfg);
  }
  CHECK(p.value[0] - prev == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p.value[1] == doctest::Approx(200 * 0.01).epsilon(1e-6));
}

TEST_CASE("optimizers reject non-finite gradients before touching anything") {
  Parameter a("a", Tensor::from({1.0}));
  Parameter b("b", Tensor::from({2.0}));
  b.grad[0] = NAN;
  a.grad[0] = 1.0;
  Parameter* ps[] = {&a, &b};
  AdamState st;
  try {
    adam_step(ps, st, AdamConfig{});
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("b") != std::string::npos);
  }
  CHECK(a.value[0] == 1.0);
  CHECK_THROWS_AS(sgd_step(ps, 0.1), DivergenceError);
  CHECK(parse_optimizer("sgd") == OptimizerKind::sgd);
  CHECK_THROWS_AS(parse_optimizer("rmsprop"), ConfigError);
}

TEST_CASE("evaluation bookkeeping") {
  const std::vector<int> truth{0, 1, 2, 3, 0, 1, 2, 3};
  const Evaluation perfect = evaluate_predictions(truth, truth, 4);
  CHECK(perfect.accuracy == 1.0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(perfect.confusion[i][i] == 2);
  const std::vector<int> constant(8, 1);
  const Evaluation chance = evaluate_predictions(truth, constant, 4);
  CHECK(chance.accuracy == 0.25);
  CHECK(chance.accuracy == accuracy_of(chance.confusion));
}

TEST_CASE("balanced batches cover every index once") {
  Rng rng(1);
  const auto batches = make_batches(65, 32, rng);
  REQUIRE(batches.size() == 3);
  std::vector<int> seen(65, 0);
  for (const auto& b : batches) {
    CHECK(b.size() >= 21);
    for (auto i : b) ++seen[i];
  }
  for (int s : seen) CHECK(s == 1);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("one epoch performs ceil(N / batch) steps and training is reproducible") {
  const DatasetSplit data = toy_split(6, 64);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 10;
  Network net(toy_model(64));
  const Metrics m = train_loop(net, data, tc);
  CHECK(m.steps == (data.train.size() + 9) / 10);
  REQUIRE(m.epochs.size() == 1);
  CHECK(m.epochs[0].val_accuracy == accuracy_of(m.confusion));

  tc.epochs = 2;
  Network a(toy_model(64)), b(toy_model(64));
  const Metrics ma = train_loop(a, data, tc), mb = train_loop(b, data, tc);
  for (std::size_t e = 0; e < 2; ++e) {
    CHECK(ma.epochs[e].train_loss == mb.epochs[e].train_loss);
    CHECK(ma.epochs[e].val_accuracy == mb.epochs[e].val_accuracy);
  }
  CHECK(a.parameters()[0]->value == b.parameters()[0]->value);
}

TEST_CASE("training reduces the loss on a small synthetic set") {
  const DatasetSplit data = toy_split(12, 96);
  TrainConfig tc;
  tc.epochs = 12;
  tc.batch_size = 16;
  tc.learning_rate = 3e-3;
  Network net(toy_model(96));
  const Metrics m = train_loop(net, data, tc);
  for (std::size_t e = 1; e < m.epochs.size(); ++e)
    CHECK(m.epochs[e].train_loss < m.epochs[e - 1].train_loss);
  CHECK(m.epochs.back().train_accuracy > 2.0 / 8.0);
}

TEST_CASE("a non-finite loss rolls back to the last good epoch") {
  DatasetSplit data = toy_split(4, 64);
  data.train[0].window[0] = NAN;
  TrainConfig tc;
  tc.epochs = 3;
  Network net(toy_model(64));
  const Network initial = net;
  try {
    train_loop(net, data, tc);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.last_good_epoch() == 0);
  }
  Network init_copy = initial;
  const auto now = net.parameters(), before = init_copy.parameters();
  for (std::size_t i = 0; i < now.size(); ++i) CHECK(now[i]->value == before[i]->value);
}

TEST_CASE("training rejects mismatched inputs") {
  const DatasetSplit data = toy_split(4, 64);
  Network net(toy_model(80));
  CHECK_THROWS_AS(train_loop(net, data, TrainConfig{}), DimensionError);
}

TEST_CASE("mean and sample spread") {
  const auto [m, s] = mean_and_spread({0.5, 0.7, 0.9});
  CHECK(m == doctest::Approx(0.7));
  CHECK(s == doctest::Approx(0.2));
  CHECK(mean_and_spread({0.4}).second == 0.0);
}

TEST_CASE("load_samples without a dataset explains the expected layout") {
  ExperimentConfig c;
  try {
    load_samples(c);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("<root>/<subject>/<label>.txt") != std::string::npos);
  }
}

TEST_CASE("report emission writes every artifact deterministically") {
  ExperimentReport r;
  r.id = "demo";
  r.title = "Demo table";
  r.table.header = {"Model", "Accuracy"};
  r.table.rows = {{"A", "50.0%"}, {"Longer name", "75.0% ± 1.0%"}};
  RunRecord run;
  run.label = "A";
  run.seed = 4;
  for (int e = 1; e <= 5; ++e)
    run.metrics.epochs.push_back({e, 2.0 / e, 0.1 * e, 2.5 / e, 0.09 * e});
  run.confusion.assign(8, std::vector<std::size_t>(8, 1));
  r.runs.push_back(run);
  r.curve_run = "A";

  const fs::path dir = fs::temp_directory_path() / "drsn_test_report";
  fs::remove_all(dir);
  const auto files = emit_report(r, dir);
  CHECK(files.size() == 7);
  const std::string metrics = slurp(dir / "metrics.csv");
  CHECK(count_of(metrics, "\n") == 5 + 1);
  const std::string svg = slurp(dir / "curve_accuracy.svg");
  CHECK(count_of(svg, "<polyline") == 2);
  CHECK(count_of(slurp(dir / "curve_loss.svg"), "<polyline") == 2);
  CHECK(count_of(slurp(dir / "confusion.csv"), "\n") == 8 + 1);
  const std::string text = slurp(dir / "table.txt");
  CHECK(text.find("Longer name  75.0% ± 1.0%") != std::string::npos);
  CHECK(slurp(dir / "table.csv").find("Longer name,75.0% ± 1.0%") != std::string::npos);
  CHECK(slurp(dir / "manifest.json").find("\"experiment\": \"demo\"") != std::string::npos);

  std::vector<std::string> before;
  for (const auto& f : files) before.push_back(slurp(f));
  emit_report(r, dir);
  for (std::size_t i = 0; i < files.size(); ++i) CHECK(slurp(files[i]) == before[i]);

  CHECK_THROWS_AS(emit_report(r, dir / "table.txt" / "nested"), IoError);
  fs::remove_all(dir);
}
