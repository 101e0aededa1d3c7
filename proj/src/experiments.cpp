#include "drsn/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <fmt/format.h>

namespace drsn {
namespace {

std::string pct(double v) { return fmt::format("{:.1f}%", 100.0 * v); }

void record_common(ExperimentReport& report, const ExperimentConfig& c) {
  auto& s = report.settings;
  s["data"] = c.data.synthetic ? "synthetic" : (c.data.root ? c.data.root->string() : "");
  if (c.data.synthetic) s["synthetic_seed"] = std::to_string(c.data.synthetic_seed);
  s["subjects"] = std::to_string(c.train.subjects);
  s["split_ratio"] = fmt::format("{}", c.split_ratio);
  s["seed"] = std::to_string(c.train.seed);
  s["optimizer"] = to_string(c.train.optimizer);
  s["learning_rate"] = fmt::format("{}", c.train.learning_rate);
  s["batch_size"] = std::to_string(c.train.batch_size);
  s["epochs"] = std::to_string(c.train.epochs);
  s["mode"] = to_string(c.model.mode);
  std::string model_text = c.model.to_text();
  std::replace(model_text.begin(), model_text.end(), '\n', ';');
  s["model"] = model_text;
  report.notes.push_back(
      "validation accuracy is measured on the held-out 20% test split; the two terms are "
      "used interchangeably");
}

RunRecord train_network(const std::string& label, Architecture arch, const DatasetSplit& split,
                        const ExperimentConfig& c, std::uint64_t seed, int epochs) {
  ModelConfig mc = c.model;
  mc.arch = arch;
  mc.seed = seed;
  mc.input_width = split.train.front().window.dim(1);
  mc.input_channels = split.train.front().window.dim(0);
  Network net(mc);
  TrainConfig tc = c.train;
  tc.seed = seed;
  tc.epochs = epochs;
  RunRecord run;
  run.label = label;
  run.seed = seed;
  run.metrics = train_loop(net, split, tc);
  run.confusion = run.metrics.confusion;
  run.train_accuracy = run.metrics.epochs.back().train_accuracy;
  run.test_accuracy = run.metrics.epochs.back().val_accuracy;
  return run;
}

}  // namespace

std::pair<double, double> mean_and_spread(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

std::vector<GestureSample> load_samples(const ExperimentConfig& config) {
  const std::size_t subjects = config.train.subjects;
  if (config.data.synthetic) {
    const int n = subjects == 0 ? 9 : static_cast<int>(subjects);
    return gen_synthetic(kNumGestures, n * static_cast<int>(kSamplesPerRecording), kWindowWidth,
                         config.data.synthetic_seed);
  }
  if (!config.data.root) {
    throw DataError(
        "no dataset given: pass --data-root (or set DRSN_DATA_ROOT) pointing at "
        "<root>/<subject>/<label>.txt recordings, or use --synthetic");
  }
  CorpusOptions opts = config.data.corpus;
  opts.max_subjects = subjects;
  return load_corpus(*config.data.root, opts).samples;
}

DatasetSplit prepare_split(const std::vector<GestureSample>& samples, double ratio,
                           std::uint64_t seed) {
  DatasetSplit s = split(samples, ratio, seed);
  normalize_in_place(s.train, s.stats);
  normalize_in_place(s.test, s.stats);
  return s;
}

ExperimentReport run_table1(const ExperimentConfig& c) {
  const auto started = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.id = "table1";
  report.title = "Accuracy of logistic regression, random forest, CNN and DRSN";
  record_common(report, c);
  report.settings["features"] = c.features == FeatureMode::timedomain ? "timedomain" : "flatten_decim";
  report.settings["lr"] = fmt::format("learning_rate={} epochs={} l2={}", c.lr.learning_rate,
                                      c.lr.epochs, c.lr.l2);
  report.settings["rf"] = fmt::format("trees={} max_depth={} bootstrap={}", c.rf.num_trees,
                                      c.rf.max_depth, c.rf.bootstrap);

  const auto samples = load_samples(c);
  const std::uint64_t seed = c.train.seed;
  // One split shared by all four models.
  const DatasetSplit data = prepare_split(samples, c.split_ratio, seed);
  const auto train_f = extract_features(data.train, c.features);
  const auto test_f = extract_features(data.test, c.features);

  auto score = [](const auto& model, const std::vector<FeatureVector>& fs) {
    std::vector<int> truth, pred;
    for (const auto& f : fs) {
      truth.push_back(f.label);
      pred.push_back(predict(model, f.values));
    }
    return evaluate_predictions(truth, pred, kNumGestures);
  };

  {
    LogisticRegressionConfig lc = c.lr;
    lc.seed = seed;
    const auto lr = lr_train(train_f, lc);
    RunRecord run;
    run.label = "Logistic regression";
    run.seed = seed;
    run.train_accuracy = score(lr, train_f).accuracy;
    const auto te = score(lr, test_f);
    run.test_accuracy = te.accuracy;
    run.confusion = te.confusion;
    report.runs.push_back(std::move(run));
  }
  {
    RandomForestConfig rc = c.rf;
    rc.seed = seed;
    const auto rf = rf_train(train_f, rc);
    RunRecord run;
    run.label = "Random Forest";
    run.seed = seed;
    run.train_accuracy = score(rf, train_f).accuracy;
    const auto te = score(rf, test_f);
    run.test_accuracy = te.accuracy;
    run.confusion = te.confusion;
    report.runs.push_back(std::move(run));
  }
  report.runs.push_back(train_network("CNN", Architecture::cnn, data, c, seed, c.train.epochs));
  report.runs.push_back(train_network("DRSN", Architecture::drsn, data, c, seed, c.train.epochs));
  report.curve_run = "DRSN";

  report.table.header = {"Model", "Train accuracy", "Test accuracy"};
  for (const auto& r : report.runs) {
    report.table.rows.push_back({r.label, pct(r.train_accuracy), pct(r.test_accuracy)});
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

ExperimentReport run_table2(const ExperimentConfig& c) {
  const auto started = std::chrono::steady_clock::now();
  if (c.epoch_list.empty()) throw ConfigError("epoch list must not be empty");
  for (int e : c.epoch_list)
    if (e < 1) throw ConfigError("epoch counts must be at least 1");
  ExperimentReport report;
  report.id = "table2";
  report.title = "DRSN accuracy after different numbers of epochs";
  record_common(report, c);
  std::string list;
  for (int e : c.epoch_list) list += (list.empty() ? "" : ",") + std::to_string(e);
  report.settings["epoch_list"] = list;

  const auto samples = load_samples(c);
  const std::uint64_t seed = c.train.seed;
  const DatasetSplit data = prepare_split(samples, c.split_ratio, seed);
  // Training is deterministic in (seed, epoch), so the state after e epochs of
  // a longer run is exactly the state a separate e-epoch run would end in.
  const int longest = *std::max_element(c.epoch_list.begin(), c.epoch_list.end());
  RunRecord run = train_network("DRSN", Architecture::drsn, data, c, seed, longest);
  report.curve_run = "DRSN";

  report.table.header = {"Epochs", "Train accuracy", "Test accuracy"};
  for (int e : c.epoch_list) {
    const auto& m = run.metrics.epochs[static_cast<std::size_t>(e - 1)];
    report.table.rows.push_back({std::to_string(e), pct(m.train_accuracy), pct(m.val_accuracy)});
  }
  report.runs.push_back(std::move(run));
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

ExperimentReport run_table3(const ExperimentConfig& c) {
  const auto started = std::chrono::steady_clock::now();
  if (c.seeds < 1) throw ConfigError("table3 needs at least one seed");
  ExperimentReport report;
  report.id = "table3";
  report.title = "DRSN on clean vs noise-injected recordings";
  record_common(report, c);
  report.settings["noise"] = fmt::format("gaussian snr_db={}", c.noise.snr_db);
  report.settings["seeds"] = std::to_string(c.seeds);

  const auto clean = load_samples(c);
  std::vector<double> clean_train, clean_val, noisy_train, noisy_val;
  for (int k = 0; k < c.seeds; ++k) {
    const std::uint64_t seed = c.train.seed + static_cast<std::uint64_t>(k);
    NoiseSpec spec = c.noise;
    spec.seed = seed;
    // Noise goes onto the raw windows, before splitting and normalization;
    // the split depends only on labels and seed, so both runs share it.
    const auto noisy = add_noise(clean, spec);
    RunRecord a = train_network("DRSN clean", Architecture::drsn,
                                prepare_split(clean, c.split_ratio, seed), c, seed, c.train.epochs);
    RunRecord b = train_network("DRSN noisy", Architecture::drsn,
                                prepare_split(noisy, c.split_ratio, seed), c, seed, c.train.epochs);
    clean_train.push_back(a.train_accuracy);
    clean_val.push_back(a.test_accuracy);
    noisy_train.push_back(b.train_accuracy);
    noisy_val.push_back(b.test_accuracy);
    report.runs.push_back(std::move(a));
    report.runs.push_back(std::move(b));
  }
  report.curve_run = "DRSN clean";

  auto cell = [](const std::vector<double>& v) {
    const auto [m, s] = mean_and_spread(v);
    return fmt::format("{:.1f}% ± {:.1f}%", 100.0 * m, 100.0 * s);
  };
  report.table.header = {"", "No noise", "With noise"};
  report.table.rows.push_back({"Training accuracy", cell(clean_train), cell(noisy_train)});
  report.table.rows.push_back({"Validation accuracy", cell(clean_val), cell(noisy_val)});
  report.notes.push_back("spread is the sample standard deviation over seeds");
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace drsn
