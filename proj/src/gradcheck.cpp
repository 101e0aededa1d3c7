#include "drsn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace drsn {
namespace {

struct Probe {
  double value;
  std::uint64_t branches;
};

Probe evaluate(const ScalarProgram& program) {
  Tape tape(TapeOptions{.record = false, .track_branches = true, .check_finite = false});
  Var out = program(tape);
  return {out.value().item(), tape.branch_signature()};
}

}  // namespace

GradCheckResult grad_check(const ScalarProgram& program, std::span<Parameter* const> params,
                           double eps) {
  for (Parameter* p : params) p->zero_grad();
  std::uint64_t base_branches = 0;
  {
    Tape tape(TapeOptions{.record = true, .track_branches = true, .check_finite = false});
    Var loss = program(tape);
    base_branches = tape.branch_signature();
    tape.backward(loss);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double original = p.value[i];
      p.value[i] = original + eps;
      const Probe plus = evaluate(program);
      p.value[i] = original - eps;
      const Probe minus = evaluate(program);
      p.value[i] = original;

      if (plus.branches != base_branches || minus.branches != base_branches) {
        ++result.excluded;
        continue;
      }
      ++result.checked;
      const double numeric = (plus.value - minus.value) / (2.0 * eps);
      const double a = analytic[k][i];
      double err;
      if (std::isnan(a) || std::isnan(numeric)) {
        err = std::numeric_limits<double>::infinity();
      } else {
        const double denom = std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
        err = std::abs(a - numeric) / denom;
      }
      if (err > result.max_relative_error || std::isinf(err)) {
        result.max_relative_error = err;
        result.worst_coordinate = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

GradCheckResult grad_check(const ScalarFunction& f, const Tensor& x, double eps) {
  Parameter input("x", x);
  Parameter* params[] = {&input};
  return grad_check([&](Tape& tape) { return f(tape, tape.parameter(input)); },
                    std::span<Parameter* const>(params), eps);
}

}  // namespace drsn
