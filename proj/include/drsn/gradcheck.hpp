#pragma once

#include <functional>
#include <span>
#include <string>

#include "drsn/autodiff.hpp"

namespace drsn {

// Denominator floor of the relative error. Central differences of an O(1)
// loss carry roughly 1e-11 of rounding noise at eps = 1e-5, so gradients that
// are exactly zero (a bias feeding straight into batch norm) would otherwise
// report a large relative error on pure noise.
inline constexpr double kGradCheckFloor = 1e-6;

struct GradCheckResult {
  // Worst |analytic - numeric| / max(|analytic|, |numeric|, kGradCheckFloor) over the
  // checked coordinates; +inf if any gradient was NaN.
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  // Coordinates whose +-eps perturbation changed the branch taken by some
  // piecewise op (relu, abs, soft threshold). Derivatives are not defined
  // across a kink, so they are masked out.
  std::size_t excluded = 0;
  std::string worst_coordinate;
};

using ScalarProgram = std::function<Var(Tape&)>;
using ScalarFunction = std::function<Var(Tape&, Var)>;

/// Compares the reverse-mode gradient of `program` with respect to every
/// entry of `params` against central differences
/// (f(p + eps) - f(p - eps)) / (2 eps).
GradCheckResult grad_check(const ScalarProgram& program, std::span<Parameter* const> params,
                           double eps = 1e-5);

/// Same check with respect to a single input tensor x.
GradCheckResult grad_check(const ScalarFunction& f, const Tensor& x, double eps = 1e-5);

}  // namespace drsn
