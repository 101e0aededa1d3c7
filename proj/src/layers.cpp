#include "drsn/layers.hpp"

#include <cmath>

namespace drsn {

const char* to_string(ShrinkMode mode) {
  return mode == ShrinkMode::channel_shared ? "cs" : "cw";
}

ShrinkMode parse_shrink_mode(const std::string& text) {
  if (text == "cs") return ShrinkMode::channel_shared;
  if (text == "cw") return ShrinkMode::channel_wise;
  throw ConfigError("mode must be 'cs' or 'cw', got '" + text + "'");
}

namespace {
void he_normal(Tensor& t, std::size_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (double& v : t.values()) v = dist(rng);
}
}  // namespace

Conv1d::Conv1d(const std::string& name, std::size_t in_channels, std::size_t out_channels,
               std::size_t kernel, std::size_t stride, std::size_t padding)
    : weight(name + ".weight", Tensor(Shape{out_channels, in_channels, kernel})),
      bias(name + ".bias", Tensor(Shape{out_channels})),
      stride(stride),
      padding(padding) {
  if (stride == 0) throw ConfigError(name + ": stride must be positive");
}

void Conv1d::init(Rng& rng) {
  he_normal(weight.value, in_channels() * kernel(), rng);
  bias.value.fill(0.0);
}

Var Conv1d::forward(Tape& tape, Var x) {
  return ops::conv1d(x, tape.parameter(weight), tape.parameter(bias), stride, padding);
}

std::size_t Conv1d::out_width(std::size_t in_width) const {
  if (in_width + 2 * padding < kernel()) {
    throw DimensionError("width " + std::to_string(in_width) + " too small for kernel " +
                         std::to_string(kernel()));
  }
  return (in_width + 2 * padding - kernel()) / stride + 1;
}

BatchNorm1d::BatchNorm1d(const std::string& name, std::size_t channels, double eps,
                         double momentum)
    : gamma(name + ".gamma", Tensor(Shape{channels}, 1.0)),
      beta(name + ".beta", Tensor(Shape{channels}, 0.0)),
      running_mean(Shape{channels}, 0.0),
      running_var(Shape{channels}, 1.0),
      name(name),
      eps(eps),
      momentum(momentum) {
  if (!(momentum > 0.0 && momentum < 1.0)) throw ConfigError(name + ": momentum must be in (0,1)");
}

Var BatchNorm1d::forward(Tape& tape, Var x, Phase phase) {
  Var g = tape.parameter(gamma);
  Var b = tape.parameter(beta);
  if (phase == Phase::eval) return ops::batch_norm_eval(x, g, b, running_mean, running_var, eps);

  Tensor mean, var;
  Var y = ops::batch_norm_train(x, g, b, eps, &mean, &var);
  const Shape& s = x.shape();
  const double n = static_cast<double>(s[0] * (s.size() == 3 ? s[2] : 1));
  const double unbias = n / (n - 1.0);
  for (std::size_t c = 0; c < mean.size(); ++c) {
    running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean[c];
    running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var[c] * unbias;
  }
  return y;
}

Dense::Dense(const std::string& name, std::size_t in_features, std::size_t out_features)
    : weight(name + ".weight", Tensor(Shape{out_features, in_features})),
      bias(name + ".bias", Tensor(Shape{out_features})) {}

void Dense::init(Rng& rng) {
  he_normal(weight.value, in_features(), rng);
  bias.value.fill(0.0);
}

Var Dense::forward(Tape& tape, Var x) {
  if (x.shape().size() != 2 || x.shape()[1] != in_features()) {
    throw DimensionError("dense layer " + weight.name + " expects [B," +
                         std::to_string(in_features()) + "], got " + shape_string(x.shape()));
  }
  Var w = tape.parameter(weight);
  Var b = ops::reshape(tape.parameter(bias), Shape{1, out_features()});
  return ops::add(ops::matmul(x, ops::transpose(w)), b);
}

Var gap(Var x, GapOver over) {
  if (x.shape().size() != 3) {
    throw DimensionError("gap expects [B,C,W], got " + shape_string(x.shape()));
  }
  if (over == GapOver::width) return ops::reduce_mean(x, {2});
  return ops::reshape(ops::reduce_mean(x, {1, 2}), Shape{x.shape()[0], 1});
}

ThresholdSubnet::ThresholdSubnet(const std::string& name, ShrinkMode mode, std::size_t channels,
                                 std::size_t hidden)
    : mode(mode),
      fc1(name + ".fc1", channels, hidden),
      fc2(name + ".fc2", hidden, mode == ShrinkMode::channel_shared ? 1 : channels) {}

void ThresholdSubnet::init(Rng& rng) {
  fc1.init(rng);
  fc2.init(rng);
}

ThresholdResult ThresholdSubnet::compute(Tape& tape, Var x) {
  if (x.shape().size() != 3 || x.shape()[1] != fc1.in_features()) {
    throw DimensionError("threshold subnet expects [B," + std::to_string(fc1.in_features()) +
                         ",W], got " + shape_string(x.shape()));
  }
  Var pooled = gap(ops::abs(x), GapOver::width);  // [B, C]
  Var mean_abs = mode == ShrinkMode::channel_shared
                     ? ops::reshape(ops::reduce_mean(pooled, {1}), Shape{x.shape()[0], 1})
                     : pooled;
  Var alpha = ops::sigmoid(fc2.forward(tape, ops::relu(fc1.forward(tape, pooled))));
  Var tau = ops::mul(alpha, mean_abs);
  return {tau, alpha, mean_abs};
}

ThresholdResult compute_threshold(Tape& tape, Var x, ThresholdSubnet& subnet) {
  return subnet.compute(tape, x);
}

Var soft_threshold(Var x, const ThresholdResult& tau) {
  const Shape& ts = tau.tau.shape();
  return ops::soft_threshold(x, ops::reshape(tau.tau, Shape{ts[0], ts[1], 1}));
}

}  // namespace drsn
