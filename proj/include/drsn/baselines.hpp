#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "drsn/data.hpp"

namespace drsn {

enum class FeatureMode {
  flatten_decim,  // every 8th timestep of every channel, flattened
  timedomain,     // per channel: MAV, RMS, waveform length, zero crossings
};

inline constexpr std::size_t kDecimationFactor = 8;

struct FeatureVector {
  std::vector<double> values;
  int label = 0;
};

FeatureVector extract_features(const GestureSample& sample, FeatureMode mode);
std::vector<FeatureVector> extract_features(std::span<const GestureSample> samples,
                                            FeatureMode mode);

// ---------------------------------------------------------------------------
// Multinomial logistic regression

struct LogisticRegressionConfig {
  int num_classes = kNumGestures;
  double learning_rate = 0.1;
  int epochs = 500;
  double l2 = 0.0;
  // Training is full-batch from zero weights, hence seed-independent; the
  // seed is kept so reports can record it alongside the other models.
  std::uint64_t seed = 0;
};

struct LogisticRegressionModel {
  // Features are standardized with the training mean/std before the linear map.
  std::vector<double> feature_mean;
  std::vector<double> feature_std;
  Tensor weights;  // [classes, dim]
  Tensor bias;     // [classes]
  std::vector<double> loss_history;

  std::size_t dim() const { return weights.dim(1); }
  std::size_t num_classes() const { return weights.dim(0); }
  std::vector<double> logits(std::span<const double> features) const;
};

/// Mean softmax cross-entropy (+ l2/2 ||W||^2) over standardized `data` and
/// its gradient. Exposed for the finite-difference test.
double lr_objective(const LogisticRegressionModel& model, std::span<const FeatureVector> data,
                    double l2, Tensor* grad_weights, Tensor* grad_bias);

LogisticRegressionModel lr_train(std::span<const FeatureVector> data,
                                 const LogisticRegressionConfig& config);

// ---------------------------------------------------------------------------
// Random forest of CART trees

struct DecisionTree {
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int label = 0;
  };
  std::vector<Node> nodes;

  int predict(std::span<const double> features) const;
  std::size_t depth() const;
};

struct RandomForestConfig {
  int num_classes = kNumGestures;
  int num_trees = 100;
  int max_depth = 12;  // 0 means unlimited
  std::size_t max_features = 0;  // 0 means floor(sqrt(dim))
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

struct RandomForestModel {
  std::vector<DecisionTree> trees;
  std::size_t dim = 0;
  int num_classes = kNumGestures;
};

double gini(std::span<const std::size_t> class_counts);

// Most frequent label; ties go to the lowest label.
int majority_vote(std::span<const int> labels, int num_classes);

// Tree t is grown from seed derive_seed(derive_seed(seed, forest), t), so the
// forest does not depend on the order trees are trained in.
RandomForestModel rf_train(std::span<const FeatureVector> data, const RandomForestConfig& config);
DecisionTree grow_tree(std::span<const FeatureVector> data, const RandomForestConfig& config,
                       std::uint64_t tree_seed);

// argmax / vote, ties toward the lower label. Throws ContractError on a
// dimension mismatch.
int predict(const LogisticRegressionModel& model, std::span<const double> features);
int predict(const RandomForestModel& model, std::span<const double> features);

}  // namespace drsn
