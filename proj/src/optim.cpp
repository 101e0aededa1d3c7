#include "drsn/optim.hpp"

#include <cmath>

namespace drsn {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw ConfigError("optimizer must be 'adam' or 'sgd', got '" + name + "'");
}

const char* to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

namespace {
void check_gradients(std::span<Parameter* const> params) {
  for (const Parameter* p : params) {
    if (p->grad.shape() != p->value.shape()) {
      throw DimensionError("gradient of " + p->name + " has shape " +
                           shape_string(p->grad.shape()) + ", value " +
                           shape_string(p->value.shape()));
    }
    if (!p->grad.all_finite()) throw DivergenceError("non-finite gradient in parameter " + p->name);
  }
}
}  // namespace

void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamConfig& config) {
  check_gradients(params);
  if (state.first_moment.empty()) {
    for (const Parameter* p : params) {
      state.first_moment.emplace_back(p->value.shape(), 0.0);
      state.second_moment.emplace_back(p->value.shape(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ContractError("Adam state was initialized for a different parameter list");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    auto m = state.first_moment[k].values();
    auto v = state.second_moment[k].values();
    auto w = p.value.values();
    const auto g = p.grad.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

void sgd_step(std::span<Parameter* const> params, double learning_rate) {
  check_gradients(params);
  for (Parameter* p : params) {
    auto w = p->value.values();
    const auto g = p->grad.values();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * g[i];
  }
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind) {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  adam_.learning_rate = learning_rate;
}

void Optimizer::step(std::span<Parameter* const> params) {
  if (kind_ == OptimizerKind::adam) adam_step(params, state_, adam_);
  else sgd_step(params, adam_.learning_rate);
}

}  // namespace drsn
