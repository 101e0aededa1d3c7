#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drsn/tensor.hpp"

namespace drsn {

/// A trainable leaf. Models own their parameters; a tape only refers to them
/// for the duration of one forward/backward pass.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value)
      : name(std::move(name)), value(std::move(value)), grad(this->value.shape(), 0.0) {}

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad = Tensor(value.shape(), 0.0); }
};

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; invalid once the tape
/// is cleared.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

struct TapeOptions {
  // When false, ops compute values only; backward() is unavailable.
  bool record = true;
  // Piecewise ops fold their branch choices into branch_signature(). Used by
  // the gradient checker to find coordinates whose perturbation crosses a kink.
  bool track_branches = false;
#ifdef NDEBUG
  bool check_finite = false;
#else
  bool check_finite = true;
#endif
};

/// Explicit per-pass operation tape. Nodes are appended in evaluation order,
/// which is a topological order of the computation DAG; backward() walks it
/// once in reverse.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  explicit Tape(TapeOptions options) : options_(options) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Parameter& p);

  // Appends an op result. `backward` reads grad(self) and accumulates into
  // the gradients of whichever inputs require_grad().
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient buffer of a node, zero-allocated on first access.
  Tensor& grad(std::size_t id);

  bool recording() const noexcept { return options_.record; }
  bool tracking_branches() const noexcept { return options_.track_branches; }
  const TapeOptions& options() const noexcept { return options_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }

  void note_branch(std::uint8_t code) {
    branch_hash_ = (branch_hash_ ^ code) * 0x100000001b3ull;
  }
  std::uint64_t branch_signature() const noexcept { return branch_hash_; }

  /// Reverse sweep from a scalar loss. Accumulates into Parameter::grad of
  /// every parameter leaf, then clears the tape.
  void backward(Var loss);
  void clear();

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  TapeOptions options_{};
  std::deque<Node> nodes_;
  std::uint64_t branch_hash_ = 0xcbf29ce484222325ull;
};

namespace ops {

enum class Elementwise { add, sub, mul, abs, relu, sigmoid, negate };

// Binary ops broadcast a size-1 operand, or an operand of equal rank whose
// extents are each either equal or 1 (e.g. [B,C,1] against [B,C,W]).
Var ew_apply(Elementwise op, Var a, std::optional<Var> b = std::nullopt);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var abs(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var negate(Var a);
Var scale(Var a, double factor);

Var sum(Var a);
Var reduce_mean(Var a, std::vector<std::size_t> axes);
Var reshape(Var a, Shape shape);
Var transpose(Var a);
Var matmul(Var a, Var b);

// x [B, C_in, W], weight [C_out, C_in, K], bias [C_out] -> [B, C_out, W_out]
Var conv1d(Var x, Var weight, Var bias, std::size_t stride, std::size_t padding);

// Per-channel normalization of x [B, C] or [B, C, W] by batch statistics.
// The biased batch mean and variance are written to the out-params.
Var batch_norm_train(Var x, Var gamma, Var beta, double eps, Tensor* batch_mean,
                     Tensor* batch_var);
Var batch_norm_eval(Var x, Var gamma, Var beta, const Tensor& running_mean,
                    const Tensor& running_var, double eps);

// y = x - tau if x > tau; 0 if |x| <= tau; x + tau if x < -tau. `tau` must be
// non-negative and broadcast against x. The gate is 0 on the boundary.
Var soft_threshold(Var x, Var tau);

// Mean over the batch of -log softmax(logits)[label]. logits [B, K].
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

}  // namespace ops
}  // namespace drsn
