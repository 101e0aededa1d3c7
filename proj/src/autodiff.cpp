#include "drsn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "drsn/kernels.hpp"

namespace drsn {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->value(id_);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, options_.record, &p, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  bool needs_grad = false;
  bool inputs_finite = true;
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw ContractError("op mixes Vars from different tapes");
    needs_grad = needs_grad || nodes_[in.id_].requires_grad;
    if (options_.check_finite) inputs_finite = inputs_finite && nodes_[in.id_].value.all_finite();
  }
  if (options_.check_finite && inputs_finite && !value.all_finite()) {
    throw ContractError("op produced non-finite values from finite inputs, shape " +
                        shape_string(value.shape()));
  }
  needs_grad = needs_grad && options_.record;
  nodes_.push_back(Node{std::move(value), {}, needs_grad, nullptr,
                        needs_grad ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (nodes_.empty()) throw ContractError("backward on an empty tape");
  if (!options_.record) throw ContractError("backward on a tape that does not record");
  if (loss.tape_ != this) throw ContractError("loss does not belong to this tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (loss.id_ != nodes_.size() - 1) throw ContractError("loss must be the final node of the tape");

  grad(loss.id_).fill(1.0);
  for (std::size_t id = nodes_.size(); id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param) {
      Parameter& p = *n.param;
      if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape(), 0.0);
      auto dst = p.grad.values();
      auto src = n.grad.values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  clear();
}

void Tape::clear() {
  nodes_.clear();
  branch_hash_ = 0xcbf29ce484222325ull;
}

namespace ops {
namespace {

// Maps each flat index of `big` to a flat index of `small`.
class Broadcast {
 public:
  static std::optional<Broadcast> make(const Shape& big, const Shape& small) {
    Broadcast bc;
    if (big == small) {
      bc.kind_ = Kind::same;
      return bc;
    }
    if (shape_size(small) == 1) {
      bc.kind_ = Kind::scalar;
      return bc;
    }
    if (big.size() != small.size()) return std::nullopt;
    for (std::size_t d = 0; d < big.size(); ++d) {
      if (small[d] != big[d] && small[d] != 1) return std::nullopt;
    }
    bc.kind_ = Kind::general;
    const std::size_t rank = big.size();
    std::vector<std::size_t> small_stride(rank, 0);
    std::size_t s = 1;
    for (std::size_t d = rank; d-- > 0;) {
      small_stride[d] = small[d] == 1 ? 0 : s;
      s *= small[d];
    }
    const std::size_t n = shape_size(big);
    bc.map_.resize(n);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < n; ++i) {
      bc.map_[i] = off;
      for (std::size_t d = rank; d-- > 0;) {
        ++idx[d];
        off += small_stride[d];
        if (idx[d] < big[d]) break;
        off -= small_stride[d] * idx[d];
        idx[d] = 0;
      }
    }
    return bc;
  }

  std::size_t operator()(std::size_t i) const {
    switch (kind_) {
      case Kind::same: return i;
      case Kind::scalar: return 0;
      default: return map_[i];
    }
  }

 private:
  enum class Kind { same, scalar, general };
  Kind kind_ = Kind::same;
  std::vector<std::size_t> map_;
};

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var binary(Elementwise op, Var a, Var b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  bool a_is_big = true;
  auto bc_b = Broadcast::make(sa, sb);
  std::optional<Broadcast> bc_a;
  if (!bc_b) {
    bc_a = Broadcast::make(sb, sa);
    a_is_big = false;
  }
  if (!bc_b && !bc_a) {
    throw DimensionError("shape mismatch: " + shape_string(sa) + " vs " + shape_string(sb));
  }
  Broadcast ia = a_is_big ? *Broadcast::make(sa, sa) : *bc_a;
  Broadcast ib = a_is_big ? *bc_b : *Broadcast::make(sb, sb);
  const Shape out_shape = a_is_big ? sa : sb;

  Tensor out(out_shape);
  const auto av = a.value().values();
  const auto bv = b.value().values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const double x = av[ia(i)], y = bv[ib(i)];
    switch (op) {
      case Elementwise::add: ov[i] = x + y; break;
      case Elementwise::sub: ov[i] = x - y; break;
      case Elementwise::mul: ov[i] = x * y; break;
      default: throw ContractError("not a binary op");
    }
  }
  const std::size_t ida = a.id(), idb = b.id();
  return a.tape().record(std::move(out), {a, b},
                         [op, ida, idb, ia, ib](Tape& t, std::size_t self) {
                           const auto g = t.grad(self).values();
                           if (t.requires_grad(ida)) {
                             auto ga = t.grad(ida).values();
                             const auto bv = t.value(idb).values();
                             for (std::size_t i = 0; i < g.size(); ++i) {
                               const double d = op == Elementwise::mul ? bv[ib(i)] : 1.0;
                               ga[ia(i)] += g[i] * d;
                             }
                           }
                           if (t.requires_grad(idb)) {
                             auto gb = t.grad(idb).values();
                             const auto av = t.value(ida).values();
                             for (std::size_t i = 0; i < g.size(); ++i) {
                               const double d = op == Elementwise::mul   ? av[ia(i)]
                                                : op == Elementwise::sub ? -1.0
                                                                         : 1.0;
                               gb[ib(i)] += g[i] * d;
                             }
                           }
                         });
}

Var unary(Elementwise op, Var a) {
  Tape& tape = a.tape();
  const auto av = a.value().values();
  Tensor out(a.shape());
  auto ov = out.values();
  const bool track = tape.tracking_branches();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const double x = av[i];
    switch (op) {
      case Elementwise::abs:
        ov[i] = std::abs(x);
        if (track) tape.note_branch(x > 0 ? 1 : x < 0 ? 2 : 0);
        break;
      case Elementwise::relu:
        ov[i] = x > 0 ? x : 0.0;
        if (track) tape.note_branch(x > 0 ? 1 : 0);
        break;
      case Elementwise::sigmoid: ov[i] = sigmoid_scalar(x); break;
      case Elementwise::negate: ov[i] = -x; break;
      default: throw ContractError("not a unary op");
    }
  }
  const std::size_t ida = a.id();
  return tape.record(std::move(out), {a}, [op, ida](Tape& t, std::size_t self) {
    const auto g = t.grad(self).values();
    const auto x = t.value(ida).values();
    const auto y = t.value(self).values();
    auto ga = t.grad(ida).values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      double d = 0.0;
      switch (op) {
        case Elementwise::abs: d = x[i] > 0 ? 1.0 : x[i] < 0 ? -1.0 : 0.0; break;
        case Elementwise::relu: d = x[i] > 0 ? 1.0 : 0.0; break;
        case Elementwise::sigmoid: d = y[i] * (1.0 - y[i]); break;
        case Elementwise::negate: d = -1.0; break;
        default: break;
      }
      ga[i] += g[i] * d;
    }
  });
}

void require_rank(const Var& v, std::size_t rank, const char* what) {
  if (v.shape().size() != rank) {
    throw DimensionError(std::string(what) + " expects rank " + std::to_string(rank) +
                         ", got " + shape_string(v.shape()));
  }
}

// Per-channel layout of x [B, C] or [B, C, W]: count = B * W.
struct ChannelLayout {
  std::size_t batch, channels, width;
  std::size_t index(std::size_t b, std::size_t c, std::size_t w) const {
    return (b * channels + c) * width + w;
  }
};

ChannelLayout channel_layout(const Shape& s) {
  if (s.size() == 2) return {s[0], s[1], 1};
  if (s.size() == 3) return {s[0], s[1], s[2]};
  throw DimensionError("batch norm expects [B,C] or [B,C,W], got " + shape_string(s));
}

}  // namespace

Var ew_apply(Elementwise op, Var a, std::optional<Var> b) {
  const bool is_binary =
      op == Elementwise::add || op == Elementwise::sub || op == Elementwise::mul;
  if (is_binary) {
    if (!b) throw ContractError("binary op needs two operands");
    return binary(op, a, *b);
  }
  if (b) throw ContractError("unary op given two operands");
  return unary(op, a);
}

Var add(Var a, Var b) { return binary(Elementwise::add, a, b); }
Var sub(Var a, Var b) { return binary(Elementwise::sub, a, b); }
Var mul(Var a, Var b) { return binary(Elementwise::mul, a, b); }
Var abs(Var a) { return unary(Elementwise::abs, a); }
Var relu(Var a) { return unary(Elementwise::relu, a); }
Var sigmoid(Var a) { return unary(Elementwise::sigmoid, a); }
Var negate(Var a) { return unary(Elementwise::negate, a); }

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  const std::size_t ida = a.id();
  return a.tape().record(std::move(out), {a}, [ida, factor](Tape& t, std::size_t self) {
    const auto g = t.grad(self).values();
    auto ga = t.grad(ida).values();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ida = a.id();
  return a.tape().record(Tensor::scalar(s), {a}, [ida](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad(ida).values()) v += g;
  });
}

Var reduce_mean(Var a, std::vector<std::size_t> axes) {
  const Shape& in = a.shape();
  if (axes.empty()) throw DimensionError("reduce_mean needs at least one axis");
  std::vector<bool> reduced(in.size(), false);
  for (auto ax : axes) {
    if (ax >= in.size()) {
      throw DimensionError("reduce_mean axis " + std::to_string(ax) + " invalid for " +
                           shape_string(in));
    }
    if (reduced[ax]) throw DimensionError("reduce_mean axis " + std::to_string(ax) + " repeated");
    reduced[ax] = true;
  }
  Shape out_shape;
  std::size_t count = 1;
  for (std::size_t d = 0; d < in.size(); ++d) {
    if (reduced[d]) count *= in[d];
    else out_shape.push_back(in[d]);
  }

  // Output flat index of every input element.
  const std::size_t rank = in.size();
  std::vector<std::size_t> out_stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t d = rank; d-- > 0;) {
    if (!reduced[d]) {
      out_stride[d] = s;
      s *= in[d];
    }
  }
  const std::size_t n = a.value().size();
  std::vector<std::size_t> target(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    target[i] = off;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      off += out_stride[d];
      if (idx[d] < in[d]) break;
      off -= out_stride[d] * idx[d];
      idx[d] = 0;
    }
  }

  Tensor out(out_shape, 0.0);
  const auto av = a.value().values();
  auto ov = out.values();
  for (std::size_t i = 0; i < n; ++i) ov[target[i]] += av[i];
  const double inv = 1.0 / static_cast<double>(count);
  for (double& v : ov) v *= inv;

  const std::size_t ida = a.id();
  return a.tape().record(std::move(out), {a},
                         [ida, inv, target = std::move(target)](Tape& t, std::size_t self) {
                           const auto g = t.grad(self).values();
                           auto ga = t.grad(ida).values();
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[target[i]] * inv;
                         });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ida = a.id();
  return a.tape().record(std::move(out), {a}, [ida](Tape& t, std::size_t self) {
    const auto g = t.grad(self).values();
    auto ga = t.grad(ida).values();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

namespace {
Tensor transposed(const Tensor& m) {
  const std::size_t r = m.dim(0), c = m.dim(1);
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = m[i * c + j];
  return out;
}
}  // namespace

Var transpose(Var a) {
  require_rank(a, 2, "transpose");
  const std::size_t ida = a.id();
  return a.tape().record(transposed(a.value()), {a}, [ida](Tape& t, std::size_t self) {
    const Tensor back = transposed(t.grad(self));
    auto ga = t.grad(ida).values();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += back[i];
  });
}

Var matmul(Var a, Var b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul inner dimensions differ: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor out(Shape{m, n});
  kernels::parallel::matmul(a.value().values(), b.value().values(), out.values(), m, k, n);
  const std::size_t ida = a.id(), idb = b.id();
  return a.tape().record(std::move(out), {a, b}, [ida, idb, m, k, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ida)) {
      const Tensor bt = transposed(t.value(idb));
      Tensor tmp(Shape{m, k});
      kernels::parallel::matmul(g.values(), bt.values(), tmp.values(), m, n, k);
      auto ga = t.grad(ida).values();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += tmp[i];
    }
    if (t.requires_grad(idb)) {
      const Tensor at = transposed(t.value(ida));
      Tensor tmp(Shape{k, n});
      kernels::parallel::matmul(at.values(), g.values(), tmp.values(), k, m, n);
      auto gb = t.grad(idb).values();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += tmp[i];
    }
  });
}

Var conv1d(Var x, Var weight, Var bias, std::size_t stride, std::size_t padding) {
  require_rank(x, 3, "conv1d input");
  require_rank(weight, 3, "conv1d weight");
  require_rank(bias, 1, "conv1d bias");
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs[1] != ws[1]) {
    throw DimensionError("conv1d input channels " + shape_string(xs) + " do not match weight " +
                         shape_string(ws));
  }
  if (bias.shape()[0] != ws[0]) {
    throw DimensionError("conv1d bias " + shape_string(bias.shape()) + " does not match weight " +
                         shape_string(ws));
  }
  if (stride == 0) throw DimensionError("conv1d stride must be positive");
  if (xs[2] + 2 * padding < ws[2]) {
    throw DimensionError("conv1d input width " + std::to_string(xs[2]) +
                         " too small for kernel " + std::to_string(ws[2]));
  }
  const kernels::ConvDims d{xs[0], xs[1], xs[2], ws[0], ws[2], stride, padding};
  Tensor out(Shape{d.batch, d.out_channels, d.out_width()});
  kernels::parallel::conv1d_forward(d, x.value().values(), weight.value().values(),
                                    bias.value().values(), out.values());
  const std::size_t idx = x.id(), idw = weight.id(), idb = bias.id();
  return x.tape().record(std::move(out), {x, weight, bias},
                         [d, idx, idw, idb](Tape& t, std::size_t self) {
                           const auto g = t.grad(self).values();
                           if (t.requires_grad(idx)) {
                             kernels::parallel::conv1d_backward_input(
                                 d, g, t.value(idw).values(), t.grad(idx).values());
                           }
                           if (t.requires_grad(idw) || t.requires_grad(idb)) {
                             Tensor gw(t.value(idw).shape(), 0.0);
                             Tensor gb(t.value(idb).shape(), 0.0);
                             kernels::parallel::conv1d_backward_weight(
                                 d, g, t.value(idx).values(), gw.values(), gb.values());
                             if (t.requires_grad(idw)) {
                               auto dst = t.grad(idw).values();
                               for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gw[i];
                             }
                             if (t.requires_grad(idb)) {
                               auto dst = t.grad(idb).values();
                               for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gb[i];
                             }
                           }
                         });
}

Var batch_norm_train(Var x, Var gamma, Var beta, double eps, Tensor* batch_mean,
                     Tensor* batch_var) {
  const ChannelLayout L = channel_layout(x.shape());
  if (L.batch < 2) throw ContractError("batch norm in train mode needs a batch of at least 2");
  if (gamma.value().size() != L.channels || beta.value().size() != L.channels) {
    throw DimensionError("batch norm affine parameters do not match " + shape_string(x.shape()));
  }
  const double n = static_cast<double>(L.batch * L.width);
  const auto xv = x.value().values();
  const auto gv = gamma.value().values();
  const auto bv = beta.value().values();

  Tensor mean(Shape{L.channels}, 0.0), var(Shape{L.channels}, 0.0), inv_std(Shape{L.channels});
  for (std::size_t c = 0; c < L.channels; ++c) {
    double s = 0.0;
    for (std::size_t b = 0; b < L.batch; ++b)
      for (std::size_t w = 0; w < L.width; ++w) s += xv[L.index(b, c, w)];
    mean[c] = s / n;
    double v = 0.0;
    for (std::size_t b = 0; b < L.batch; ++b)
      for (std::size_t w = 0; w < L.width; ++w) {
        const double dlt = xv[L.index(b, c, w)] - mean[c];
        v += dlt * dlt;
      }
    var[c] = v / n;
    inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  }

  Tensor xhat(x.shape()), out(x.shape());
  for (std::size_t b = 0; b < L.batch; ++b)
    for (std::size_t c = 0; c < L.channels; ++c)
      for (std::size_t w = 0; w < L.width; ++w) {
        const std::size_t i = L.index(b, c, w);
        xhat[i] = (xv[i] - mean[c]) * inv_std[c];
        out[i] = gv[c] * xhat[i] + bv[c];
      }
  if (batch_mean) *batch_mean = mean;
  if (batch_var) *batch_var = var;

  const std::size_t idx = x.id(), idg = gamma.id(), idb = beta.id();
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [L, n, idx, idg, idb, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& t, std::size_t self) {
        const auto g = t.grad(self).values();
        const auto gv = t.value(idg).values();
        std::vector<double> sum_g(L.channels, 0.0), sum_gx(L.channels, 0.0);
        for (std::size_t b = 0; b < L.batch; ++b)
          for (std::size_t c = 0; c < L.channels; ++c)
            for (std::size_t w = 0; w < L.width; ++w) {
              const std::size_t i = L.index(b, c, w);
              sum_g[c] += g[i];
              sum_gx[c] += g[i] * xhat[i];
            }
        if (t.requires_grad(idg)) {
          auto gg = t.grad(idg).values();
          for (std::size_t c = 0; c < L.channels; ++c) gg[c] += sum_gx[c];
        }
        if (t.requires_grad(idb)) {
          auto gb = t.grad(idb).values();
          for (std::size_t c = 0; c < L.channels; ++c) gb[c] += sum_g[c];
        }
        if (t.requires_grad(idx)) {
          auto gx = t.grad(idx).values();
          for (std::size_t b = 0; b < L.batch; ++b)
            for (std::size_t c = 0; c < L.channels; ++c)
              for (std::size_t w = 0; w < L.width; ++w) {
                const std::size_t i = L.index(b, c, w);
                gx[i] += gv[c] * inv_std[c] / n *
                         (n * g[i] - sum_g[c] - xhat[i] * sum_gx[c]);
              }
        }
      });
}

Var batch_norm_eval(Var x, Var gamma, Var beta, const Tensor& running_mean,
                    const Tensor& running_var, double eps) {
  const ChannelLayout L = channel_layout(x.shape());
  if (gamma.value().size() != L.channels || beta.value().size() != L.channels ||
      running_mean.size() != L.channels || running_var.size() != L.channels) {
    throw DimensionError("batch norm statistics do not match " + shape_string(x.shape()));
  }
  const auto xv = x.value().values();
  const auto gv = gamma.value().values();
  const auto bv = beta.value().values();
  Tensor inv_std(Shape{L.channels});
  for (std::size_t c = 0; c < L.channels; ++c) inv_std[c] = 1.0 / std::sqrt(running_var[c] + eps);

  Tensor xhat(x.shape()), out(x.shape());
  for (std::size_t b = 0; b < L.batch; ++b)
    for (std::size_t c = 0; c < L.channels; ++c)
      for (std::size_t w = 0; w < L.width; ++w) {
        const std::size_t i = L.index(b, c, w);
        xhat[i] = (xv[i] - running_mean[c]) * inv_std[c];
        out[i] = gv[c] * xhat[i] + bv[c];
      }

  const std::size_t idx = x.id(), idg = gamma.id(), idb = beta.id();
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [L, idx, idg, idb, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& t, std::size_t self) {
        const auto g = t.grad(self).values();
        const auto gv = t.value(idg).values();
        const bool need_x = t.requires_grad(idx), need_g = t.requires_grad(idg),
                   need_b = t.requires_grad(idb);
        for (std::size_t b = 0; b < L.batch; ++b)
          for (std::size_t c = 0; c < L.channels; ++c)
            for (std::size_t w = 0; w < L.width; ++w) {
              const std::size_t i = L.index(b, c, w);
              if (need_x) t.grad(idx)[i] += g[i] * gv[c] * inv_std[c];
              if (need_g) t.grad(idg)[c] += g[i] * xhat[i];
              if (need_b) t.grad(idb)[c] += g[i];
            }
      });
}

Var soft_threshold(Var x, Var tau) {
  auto bc = Broadcast::make(x.shape(), tau.shape());
  if (!bc) {
    throw DimensionError("threshold shape " + shape_string(tau.shape()) +
                         " does not broadcast to " + shape_string(x.shape()));
  }
  const auto tv = tau.value().values();
  for (double v : tv) {
    if (!(v >= 0.0)) throw ContractError("soft threshold must be non-negative");
  }
  Tape& tape = x.tape();
  const bool track = tape.tracking_branches();
  const auto xv = x.value().values();
  Tensor out(x.shape());
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const double v = xv[i], th = tv[(*bc)(i)];
    if (v > th) {
      ov[i] = v - th;
      if (track) tape.note_branch(1);
    } else if (v < -th) {
      ov[i] = v + th;
      if (track) tape.note_branch(2);
    } else {
      ov[i] = 0.0;
      if (track) tape.note_branch(0);
    }
  }
  const std::size_t idx = x.id(), idt = tau.id();
  return tape.record(std::move(out), {x, tau},
                     [idx, idt, bc = std::move(*bc)](Tape& t, std::size_t self) {
                       const auto g = t.grad(self).values();
                       const auto xv = t.value(idx).values();
                       const auto tv = t.value(idt).values();
                       const bool need_x = t.requires_grad(idx), need_t = t.requires_grad(idt);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         const std::size_t k = bc(i);
                         const double v = xv[i], th = tv[k];
                         // dy/dx is 1 outside the dead zone; dy/dtau is -sign(x) there.
                         double dtau = 0.0;
                         if (v > th) dtau = -1.0;
                         else if (v < -th) dtau = 1.0;
                         else continue;
                         if (need_x) t.grad(idx)[i] += g[i];
                         if (need_t) t.grad(idt)[k] += g[i] * dtau;
                       }
                     });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const std::size_t batch = logits.shape()[0], classes = logits.shape()[1];
  if (labels.size() != batch) {
    throw DimensionError("got " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(batch));
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw ContractError("label " + std::to_string(l) + " outside 0.." +
                          std::to_string(classes - 1));
    }
  }
  const auto z = logits.value().values();
  Tensor prob(logits.shape());
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = z.data() + b * classes;
    const double m = *std::max_element(row, row + classes);
    double s = 0.0;
    for (std::size_t k = 0; k < classes; ++k) s += std::exp(row[k] - m);
    const double lse = m + std::log(s);
    for (std::size_t k = 0; k < classes; ++k) prob[b * classes + k] = std::exp(row[k] - lse);
    loss += lse - row[labels[b]];
  }
  loss /= static_cast<double>(batch);

  const std::size_t idz = logits.id();
  std::vector<int> lab(labels.begin(), labels.end());
  return logits.tape().record(
      Tensor::scalar(loss), {logits},
      [idz, batch, classes, prob = std::move(prob), lab = std::move(lab)](Tape& t,
                                                                          std::size_t self) {
        const double g = t.grad(self)[0] / static_cast<double>(batch);
        auto gz = t.grad(idz).values();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t k = 0; k < classes; ++k) {
            const double onehot = static_cast<int>(k) == lab[b] ? 1.0 : 0.0;
            gz[b * classes + k] += g * (prob[b * classes + k] - onehot);
          }
      });
}

}  // namespace ops
}  // namespace drsn
