#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "drsn/checkpoint.hpp"
#include "drsn/experiments.hpp"
#include "drsn/gradcheck.hpp"
#include "drsn/kernels.hpp"
#include "drsn/report.hpp"

namespace fs = std::filesystem;
using namespace drsn;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string data_root;
  std::string out = "out";
  std::string mode = "cw";
  bool synthetic = false;
  std::uint64_t synthetic_seed = 2021;
  double snr_db = 5.0;
  std::size_t subjects = 9;
  std::string file_pattern = "{label}.txt";
  bool energy_segmenter = false;
  bool allow_truncation = false;

  int epochs = 18;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::string optimizer = "adam";
  double split_ratio = 0.8;
};

ExperimentConfig make_config(const GlobalOptions& g) {
  ExperimentConfig c;
  c.data.synthetic = g.synthetic;
  c.data.synthetic_seed = g.synthetic_seed;
  if (!g.data_root.empty()) {
    c.data.root = g.data_root;
  } else if (const char* env = std::getenv("DRSN_DATA_ROOT"); env && *env) {
    c.data.root = env;
  }
  c.data.corpus.file_pattern = g.file_pattern;
  c.data.corpus.energy_segmenter = g.energy_segmenter;
  c.data.corpus.load.allow_truncation = g.allow_truncation;

  c.model.mode = parse_shrink_mode(g.mode);
  c.model.seed = g.seed;
  c.train.seed = g.seed;
  c.train.subjects = g.subjects;
  c.train.epochs = g.epochs;
  c.train.learning_rate = g.lr;
  c.train.batch_size = g.batch_size;
  c.train.optimizer = parse_optimizer(g.optimizer);
  c.split_ratio = g.split_ratio;
  c.noise.snr_db = g.snr_db;
  c.model.validate();
  c.train.validate();
  if (!(c.split_ratio > 0.0 && c.split_ratio < 1.0))
    throw ConfigError("split ratio must lie strictly between 0 and 1");
  return c;
}

void print_epoch(const std::string& label, const EpochMetrics& m) {
  fmt::print("  {:<10} epoch {:>3}  train loss {:.4f} acc {:5.1f}%  val loss {:.4f} acc {:5.1f}%\n",
             label, m.epoch, m.train_loss, 100.0 * m.train_accuracy, m.val_loss,
             100.0 * m.val_accuracy);
  std::fflush(stdout);
}

void finish_report(const ExperimentReport& report, const fs::path& out) {
  const auto files = emit_report(report, out);
  fmt::print("\n{}\n\n{}", report.title, format_table_text(report.table));
  fmt::print("\nwrote {} files to {} ({:.1f} s)\n", files.size(), out.string(),
             report.wall_seconds);
}

int cmd_synth(const GlobalOptions& g) {
  const fs::path out = g.out;
  const int subjects = g.subjects == 0 ? 9 : static_cast<int>(g.subjects);
  const auto recordings = synthesize_recordings(subjects, g.synthetic_seed);
  for (const auto& r : recordings) {
    const fs::path dir = out / std::to_string(r.subject_id);
    fs::create_directories(dir);
    std::string name = g.file_pattern;
    const auto pos = name.find("{label}");
    if (pos != std::string::npos) name.replace(pos, 7, std::to_string(r.gesture_label));
    write_recording(dir / name, r);
  }
  fmt::print("wrote {} recordings for {} subjects under {}\n", recordings.size(), subjects,
             out.string());
  return 0;
}

int cmd_prepare(const GlobalOptions& g) {
  const ExperimentConfig c = make_config(g);
  const auto samples = load_samples(c);
  const DatasetSplit s = split(samples, c.split_ratio, g.seed);
  const fs::path out = g.out;
  fs::create_directories(out);

  nlohmann::ordered_json j;
  j["source"] = c.data.synthetic ? "synthetic" : c.data.root->string();
  if (c.data.synthetic) j["synthetic_seed"] = c.data.synthetic_seed;
  j["subjects"] = c.train.subjects;
  j["seed"] = g.seed;
  j["split_ratio"] = c.split_ratio;
  j["samples"] = samples.size();
  j["train"] = s.train.size();
  j["test"] = s.test.size();
  std::vector<std::size_t> per_train(kNumGestures, 0), per_test(kNumGestures, 0);
  for (const auto& x : s.train) ++per_train[static_cast<std::size_t>(x.label)];
  for (const auto& x : s.test) ++per_test[static_cast<std::size_t>(x.label)];
  j["train_per_label"] = per_train;
  j["test_per_label"] = per_test;
  j["channel_mean"] = s.stats.mean;
  j["channel_std"] = s.stats.std;
  j["files"] = {"manifest.json", "split.csv"};
  std::ofstream(out / "manifest.json") << j.dump(2) << "\n";

  std::ofstream csv(out / "split.csv");
  if (!csv) throw IoError("cannot write " + (out / "split.csv").string());
  csv << "part,subject,label\n";
  for (const auto& x : s.train) csv << fmt::format("train,{},{}\n", x.subject_id, x.label);
  for (const auto& x : s.test) csv << fmt::format("test,{},{}\n", x.subject_id, x.label);
  fmt::print("{} samples: {} train / {} test; manifest in {}\n", samples.size(), s.train.size(),
             s.test.size(), out.string());
  return 0;
}

int cmd_train(const GlobalOptions& g, const std::string& arch) {
  ExperimentConfig c = make_config(g);
  if (arch == "cnn") {
    c.model.arch = Architecture::cnn;
  } else if (arch != "drsn") {
    throw ConfigError("unknown architecture '" + arch + "' (expected drsn or cnn)");
  }
  const DatasetSplit data = prepare_split(load_samples(c), c.split_ratio, g.seed);
  c.model.input_channels = data.train.front().window.dim(0);
  c.model.input_width = data.train.front().window.dim(1);
  Network net(c.model);
  const fs::path out = g.out;
  fs::create_directories(out);
  fmt::print("training {} ({} parameters) on {} samples, {} held out\n", arch,
             net.parameter_count(), data.train.size(), data.test.size());

  RunRecord run;
  run.label = arch == "cnn" ? "CNN" : "DRSN";
  run.seed = g.seed;
  try {
    run.metrics = train_loop(net, data, c.train,
                             [&](const EpochMetrics& m) { print_epoch(run.label, m); });
  } catch (const DivergenceError& e) {
    const fs::path ckpt = out / "model.last_good.shrk";
    save_checkpoint(net, ckpt);
    std::cerr << "error: " << e.what() << "\nlast good epoch " << e.last_good_epoch()
              << " saved to " << ckpt.string() << "\n";
    return 4;
  }
  save_checkpoint(net, out / "model.shrk");
  run.confusion = run.metrics.confusion;
  run.train_accuracy = run.metrics.epochs.back().train_accuracy;
  run.test_accuracy = run.metrics.epochs.back().val_accuracy;

  ExperimentReport report;
  report.id = "train";
  report.title = run.label + " training run";
  report.settings["seed"] = std::to_string(g.seed);
  report.settings["epochs"] = std::to_string(c.train.epochs);
  report.settings["learning_rate"] = fmt::format("{}", c.train.learning_rate);
  report.settings["batch_size"] = std::to_string(c.train.batch_size);
  report.settings["optimizer"] = to_string(c.train.optimizer);
  report.settings["checkpoint"] = "model.shrk";
  report.table.header = {"Model", "Train accuracy", "Test accuracy"};
  report.table.rows.push_back({run.label, fmt::format("{:.1f}%", 100.0 * run.train_accuracy),
                               fmt::format("{:.1f}%", 100.0 * run.test_accuracy)});
  report.curve_run = run.label;
  report.wall_seconds = run.metrics.wall_seconds;
  report.runs.push_back(std::move(run));
  finish_report(report, out);
  return 0;
}

int cmd_eval(const GlobalOptions& g, const std::string& checkpoint) {
  const ExperimentConfig c = make_config(g);
  Network net = load_checkpoint(checkpoint);
  // Re-derives the split (and its normalization statistics) from the seed.
  const DatasetSplit data = prepare_split(load_samples(c), c.split_ratio, g.seed);
  const Evaluation tr = evaluate(net, data.train);
  const Evaluation te = evaluate(net, data.test);
  fmt::print("train: loss {:.4f} accuracy {:.1f}%\n", tr.loss, 100.0 * tr.accuracy);
  fmt::print("test:  loss {:.4f} accuracy {:.1f}%\n\nconfusion (rows = true label):\n", te.loss,
             100.0 * te.accuracy);
  for (const auto& row : te.confusion) {
    for (auto v : row) fmt::print("{:>5}", v);
    fmt::print("\n");
  }
  return 0;
}

int cmd_gradcheck(const GlobalOptions& g, double tolerance) {
  ModelConfig mc;
  mc.input_width = 32;
  mc.stage_channels = {4, 8};
  mc.blocks_per_stage = {1, 1};
  mc.mode = parse_shrink_mode(g.mode);
  mc.seed = g.seed;
  Network net(mc);
  Rng rng(derive_seed(g.seed, stream::synthetic));
  std::normal_distribution<double> normal;
  Tensor x(Shape{4, mc.input_channels, mc.input_width});
  for (double& v : x.values()) v = normal(rng);
  const std::vector<int> labels{0, 3, 5, 7};
  const auto params = net.parameters();
  const auto result = grad_check(
      [&](Tape& tape) {
        return ops::softmax_cross_entropy(net.forward(tape, tape.constant(x), Phase::train),
                                          labels);
      },
      params);
  fmt::print("{} parameters, {} coordinates checked, {} kink-masked\n", params.size(),
             result.checked, result.excluded);
  fmt::print("max relative error {:.3e} at {}\n", result.max_relative_error,
             result.worst_coordinate);
  return result.max_relative_error < tolerance ? 0 : 1;
}

int cmd_table(const GlobalOptions& g, int which, const std::vector<int>& epoch_list, int seeds,
              int trees) {
  ExperimentConfig c = make_config(g);
  c.epoch_list = epoch_list;
  c.seeds = seeds;
  c.rf.num_trees = trees;
  const ExperimentReport report =
      which == 1 ? run_table1(c) : which == 2 ? run_table2(c) : run_table3(c);
  finish_report(report, g.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep residual shrinkage networks for 8-channel sEMG gesture classification"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--seed", g.seed, "Run seed (split, initialization, shuffling)");
  app.add_option("--data-root", g.data_root,
                 "Dataset root <root>/<subject>/<label>.txt (default: $DRSN_DATA_ROOT)");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--mode", g.mode, "Threshold mode: cs (channel-shared) or cw (channel-wise)")
      ->check(CLI::IsMember({"cs", "cw"}));
  app.add_flag("--synthetic", g.synthetic, "Use generated signals instead of a dataset");
  app.add_option("--synthetic-seed", g.synthetic_seed, "Seed of the synthetic generator");
  app.add_option("--snr-db", g.snr_db, "SNR of injected Gaussian noise (table3)");
  app.add_option("--subjects", g.subjects, "Use the first N subjects (0 = all)");
  app.add_option("--file-pattern", g.file_pattern, "Recording file name; {label} is 0..7");
  app.add_flag("--energy-segmenter", g.energy_segmenter,
               "Centre windows on active stretches instead of equal cuts");
  app.add_flag("--allow-truncation", g.allow_truncation,
               "Accept recordings whose length differs from 12000 rows");
  app.add_option("--epochs", g.epochs, "Training epochs");
  app.add_option("--lr", g.lr, "Learning rate");
  app.add_option("--batch-size", g.batch_size, "Mini-batch size");
  app.add_option("--optimizer", g.optimizer, "adam or sgd");
  app.add_option("--split-ratio", g.split_ratio, "Training fraction per label");

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset in the on-disk layout");
  auto* prepare = app.add_subcommand("prepare", "Load, split and write a split manifest");
  auto* train = app.add_subcommand("train", "Train one network and save a checkpoint");
  std::string arch = "drsn";
  train->add_option("--arch", arch, "drsn or cnn");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the seeded split");
  std::string checkpoint;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of a toy network");
  double tolerance = 1e-4;
  gradcheck->add_option("--tolerance", tolerance, "Maximum relative error");
  auto* table1 = app.add_subcommand("table1", "LR, RF, CNN and DRSN on one split");
  int trees = 100;
  table1->add_option("--trees", trees, "Random forest size");
  auto* table2 = app.add_subcommand("table2", "DRSN accuracy per epoch count");
  std::vector<int> epoch_list{18, 31};
  table2->add_option("--epoch-list", epoch_list, "Epoch counts")->delimiter(',');
  auto* table3 = app.add_subcommand("table3", "DRSN on clean vs noisy data over several seeds");
  int seeds = 3;
  table3->add_option("--seeds", seeds, "Number of seeds");
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(g);
    if (prepare->parsed()) return cmd_prepare(g);
    if (train->parsed()) return cmd_train(g, arch);
    if (eval->parsed()) return cmd_eval(g, checkpoint);
    if (gradcheck->parsed()) return cmd_gradcheck(g, tolerance);
    if (table1->parsed()) return cmd_table(g, 1, epoch_list, seeds, trees);
    if (table2->parsed()) return cmd_table(g, 2, epoch_list, seeds, trees);
    if (table3->parsed()) return cmd_table(g, 3, epoch_list, seeds, trees);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 3;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
