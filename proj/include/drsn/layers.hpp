#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drsn/autodiff.hpp"
#include "drsn/rng.hpp"

namespace drsn {

enum class Phase { train, eval };

// Channel-shared (one threshold per sample) or channel-wise (one per channel
// per sample).
enum class ShrinkMode { channel_shared, channel_wise };

const char* to_string(ShrinkMode mode);
ShrinkMode parse_shrink_mode(const std::string& text);

class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(const std::string& name, std::size_t in_channels, std::size_t out_channels,
         std::size_t kernel, std::size_t stride = 1, std::size_t padding = 0);

  // He-normal weights (fan-in = in_channels * kernel), zero bias.
  void init(Rng& rng);
  Var forward(Tape& tape, Var x);
  std::size_t out_width(std::size_t in_width) const;
  void collect(std::vector<Parameter*>& out) { out.insert(out.end(), {&weight, &bias}); }

  std::size_t in_channels() const { return weight.value.dim(1); }
  std::size_t out_channels() const { return weight.value.dim(0); }
  std::size_t kernel() const { return weight.value.dim(2); }

  Parameter weight;  // [out, in, kernel]
  Parameter bias;    // [out]
  std::size_t stride = 1;
  std::size_t padding = 0;
};

class BatchNorm1d {
 public:
  static constexpr double kDefaultEps = 1e-5;
  static constexpr double kDefaultMomentum = 0.1;

  BatchNorm1d() = default;
  BatchNorm1d(const std::string& name, std::size_t channels, double eps = kDefaultEps,
              double momentum = kDefaultMomentum);

  // Train: batch statistics, and running_mean/var move toward the batch mean
  // and unbiased batch variance by `momentum`. Eval: running statistics only.
  Var forward(Tape& tape, Var x, Phase phase);
  void collect(std::vector<Parameter*>& out) { out.insert(out.end(), {&gamma, &beta}); }

  Parameter gamma;
  Parameter beta;
  Tensor running_mean;
  Tensor running_var;
  std::string name;
  double eps = kDefaultEps;
  double momentum = kDefaultMomentum;
};

class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, std::size_t in_features, std::size_t out_features);

  void init(Rng& rng);
  // x [B, in] -> x W^T + b
  Var forward(Tape& tape, Var x);
  void collect(std::vector<Parameter*>& out) { out.insert(out.end(), {&weight, &bias}); }

  std::size_t in_features() const { return weight.value.dim(1); }
  std::size_t out_features() const { return weight.value.dim(0); }

  Parameter weight;  // [out, in]
  Parameter bias;    // [out]
};

enum class GapOver { width, width_and_channels };

// x [B, C, W] -> [B, C] (width) or [B, 1] (width and channels).
Var gap(Var x, GapOver over);

/// Thresholds of one shrinkage unit for a batch. Shapes are [B, 1] in
/// channel-shared mode and [B, C] in channel-wise mode; tau = alpha * mean_abs.
struct ThresholdResult {
  Var tau;
  Var alpha;
  Var mean_abs;
};

// Host-side copy of a ThresholdResult, kept after the tape is gone.
struct ThresholdValues {
  Tensor tau;
  Tensor alpha;
  Tensor mean_abs;
};

/// Learns per-sample thresholds from a feature map: mean |x| gives the scale
/// A, and a two-layer FC stack ending in a sigmoid gives alpha in (0, 1).
class ThresholdSubnet {
 public:
  ThresholdSubnet() = default;
  ThresholdSubnet(const std::string& name, ShrinkMode mode, std::size_t channels,
                  std::size_t hidden);

  void init(Rng& rng);
  ThresholdResult compute(Tape& tape, Var x);
  void collect(std::vector<Parameter*>& out) {
    fc1.collect(out);
    fc2.collect(out);
  }

  ShrinkMode mode = ShrinkMode::channel_wise;
  Dense fc1;  // C -> M, followed by ReLU
  Dense fc2;  // M -> 1 (CS) or C (CW), followed by sigmoid
};

ThresholdResult compute_threshold(Tape& tape, Var x, ThresholdSubnet& subnet);

// Soft thresholding of x [B, C, W] by the thresholds in `tau` ([B,1] or [B,C]).
Var soft_threshold(Var x, const ThresholdResult& tau);

}  // namespace drsn
