#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "drsn/baselines.hpp"
#include "drsn/data.hpp"
#include "drsn/model.hpp"
#include "drsn/training.hpp"

namespace drsn {

struct DataSource {
  // Real recordings under <root>/<subject>/<label>.txt; ignored when
  // `synthetic` is set.
  std::optional<std::filesystem::path> root;
  bool synthetic = false;
  std::uint64_t synthetic_seed = 2021;
  CorpusOptions corpus;
};

struct ExperimentConfig {
  DataSource data;
  ModelConfig model;
  TrainConfig train;
  LogisticRegressionConfig lr;
  RandomForestConfig rf;
  FeatureMode features = FeatureMode::timedomain;
  double split_ratio = 0.8;
  std::vector<int> epoch_list{18, 31};
  int seeds = 3;
  NoiseSpec noise;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct RunRecord {
  std::string label;
  std::uint64_t seed = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  Metrics metrics;  // per-epoch curves for the networks; empty for LR/RF
  ConfusionMatrix confusion;
};

struct ExperimentReport {
  std::string id;
  std::string title;
  Table table;
  std::vector<RunRecord> runs;
  // Run whose curves go into the SVG charts.
  std::string curve_run;
  // Everything needed to reproduce the numbers above.
  std::map<std::string, std::string> settings;
  std::vector<std::string> notes;
  double wall_seconds = 0.0;
};

/// Loads (or synthesizes) the samples of the first `train.subjects` subjects.
/// Throws DataError with the expected layout when the dataset is missing.
std::vector<GestureSample> load_samples(const ExperimentConfig& config);

/// Splits with the run seed and z-scores both sides with train statistics.
DatasetSplit prepare_split(const std::vector<GestureSample>& samples, double ratio,
                           std::uint64_t seed);

// Logistic regression, random forest, CNN baseline and DRSN on one shared split.
ExperimentReport run_table1(const ExperimentConfig& config);
// DRSN accuracy after each epoch count in config.epoch_list.
ExperimentReport run_table2(const ExperimentConfig& config);
// DRSN on clean vs noise-injected data over config.seeds matched seeds.
ExperimentReport run_table3(const ExperimentConfig& config);

// Mean and sample standard deviation (0 for a single value).
std::pair<double, double> mean_and_spread(const std::vector<double>& values);

}  // namespace drsn
