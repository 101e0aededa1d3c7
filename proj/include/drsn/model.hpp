#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "drsn/layers.hpp"

namespace drsn {

enum class Architecture { drsn, cnn };

// Every conv in the stack uses this kernel width with "same" padding.
inline constexpr std::size_t kConvKernel = 3;
// Residual units run BN -> ReLU -> conv twice (pre-activation order).
inline constexpr std::string_view kBlockOrder = "preact";

struct ModelConfig {
  Architecture arch = Architecture::drsn;
  std::size_t input_channels = 8;
  std::size_t input_width = 1200;
  // The stem conv maps input_channels -> stage_channels[0]; each stage opens
  // with a stride-2 unit.
  std::vector<std::size_t> stage_channels{4, 8, 16};
  std::vector<std::size_t> blocks_per_stage{2, 2, 2};
  // Hidden width M of each threshold subnet; 0 means "same as the unit's
  // channel count".
  std::size_t fc_hidden = 0;
  std::size_t num_classes = 8;
  ShrinkMode mode = ShrinkMode::channel_wise;
  std::uint64_t seed = 0;
  double bn_eps = BatchNorm1d::kDefaultEps;
  double bn_momentum = BatchNorm1d::kDefaultMomentum;

  // Throws ConfigError naming the first offending field.
  void validate() const;

  // "key=value" lines; the checkpoint header embeds this.
  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ForwardTrace {
  // One entry per residual shrinkage unit, in network order.
  std::vector<ThresholdValues> thresholds;
};

/// Residual unit: BN-ReLU-conv-BN-ReLU-conv main path, optionally followed by
/// adaptive soft thresholding, plus an identity or 1x1-conv shortcut.
class ResidualUnit {
 public:
  ResidualUnit() = default;
  ResidualUnit(const std::string& name, std::size_t in_channels, std::size_t out_channels,
               std::size_t stride, std::optional<ShrinkMode> shrink, std::size_t hidden,
               double bn_eps, double bn_momentum);

  // Convolutions only; the owning network seeds the threshold subnet.
  void init(Rng& rng);
  Var forward(Tape& tape, Var x, Phase phase, bool bypass_threshold, ForwardTrace* trace);
  void collect(std::vector<Parameter*>& out);
  void collect_norms(std::vector<BatchNorm1d*>& out) { out.insert(out.end(), {&bn1, &bn2}); }

  BatchNorm1d bn1;
  Conv1d conv1;
  BatchNorm1d bn2;
  Conv1d conv2;
  std::optional<ThresholdSubnet> shrink;
  std::optional<Conv1d> downsample;
};

class Network {
 public:
  explicit Network(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }
  bool has_shrinkage() const noexcept { return config_.arch == Architecture::drsn; }

  // x [B, input_channels, input_width] -> logits [B, num_classes]
  Var forward(Tape& tape, Var x, Phase phase, ForwardTrace* trace = nullptr);

  // Parameters and batch-norm layers in a fixed order (checkpoint order).
  std::vector<Parameter*> parameters();
  std::vector<BatchNorm1d*> norms();
  std::size_t parameter_count();
  void zero_grad();

  // Test hook: skip every threshold subnet so each unit behaves as if tau = 0.
  void set_threshold_bypass(bool bypass) { bypass_threshold_ = bypass; }
  bool threshold_bypass() const noexcept { return bypass_threshold_; }

 private:
  ModelConfig config_;
  Conv1d stem_;
  std::vector<ResidualUnit> units_;
  BatchNorm1d head_bn_;
  Dense head_;
  bool bypass_threshold_ = false;
};

Network build_drsn(ModelConfig config);
Network build_cnn_baseline(ModelConfig config);

// Copies every parameter and batch-norm statistic of `src` whose name also
// exists in `dst`. Returns the number of tensors copied.
std::size_t copy_shared_weights(Network& dst, Network& src);

}  // namespace drsn
