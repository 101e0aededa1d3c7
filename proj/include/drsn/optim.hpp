#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "drsn/autodiff.hpp"

namespace drsn {

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer(const std::string& name);
const char* to_string(OptimizerKind kind);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::int64_t step = 0;
};

// Bias-corrected Adam update of every parameter from its .grad. Checks all
// gradients before touching any parameter; a non-finite entry throws
// DivergenceError naming the parameter.
void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamConfig& config);

void sgd_step(std::span<Parameter* const> params, double learning_rate);

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate);
  void step(std::span<Parameter* const> params);

 private:
  OptimizerKind kind_;
  AdamConfig adam_;
  AdamState state_;
};

}  // namespace drsn
