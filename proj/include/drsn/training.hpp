#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "drsn/data.hpp"
#include "drsn/model.hpp"
#include "drsn/optim.hpp"

namespace drsn {

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  int epochs = 18;
  std::uint64_t seed = 0;
  // Recorded for reports; the experiment harness applies it to the data.
  std::optional<NoiseSpec> noise;
  // Number of subjects drawn (first N in sorted order); 0 means all.
  std::size_t subjects = 9;

  void validate() const;
};

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;  // [true][predicted]

double accuracy_of(const ConfusionMatrix& confusion);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  ConfusionMatrix confusion;
};

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct Metrics {
  std::vector<EpochMetrics> epochs;
  ConfusionMatrix confusion;  // held-out set after the final epoch
  std::size_t steps = 0;
  double wall_seconds = 0.0;
};

// Confusion/accuracy of hard predictions; loss is left at 0.
Evaluation evaluate_predictions(std::span<const int> truth, std::span<const int> predicted,
                                int num_classes);

// Eval-mode pass (batch norm uses running statistics).
Evaluation evaluate(Network& model, std::span<const GestureSample> samples,
                    std::size_t batch_size = 64);

// Stacks windows into [B, channels, W].
Tensor stack_windows(std::span<const GestureSample> samples, std::span<const std::size_t> rows);

/// ceil(n / batch_size) batches of near-equal size, drawn from a permutation
/// of 0..n-1. Near-equal sizes keep every batch >= 2 whenever n >= 2, which
/// train-mode batch norm needs.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng);

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Mini-batch training with a per-epoch seeded shuffle, evaluating both the
/// training and held-out sets in eval mode after every epoch. On a
/// non-finite loss or gradient the model is rolled back to the end of the
/// last completed epoch and DivergenceError is thrown.
Metrics train_loop(Network& model, const DatasetSplit& split, const TrainConfig& config,
                   const EpochCallback& on_epoch = {});

}  // namespace drsn
