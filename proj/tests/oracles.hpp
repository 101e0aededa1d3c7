#pragma once

// Naive reference computations written straight from the definitions. They
// share no code with the library and are only used to cross-check it.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

namespace oracle {

inline double soft_threshold(double x, double tau) {
  if (x > tau) return x - tau;
  if (x < -tau) return x + tau;
  return 0.0;
}

// d soft_threshold / dx
inline double soft_threshold_grad(double x, double tau) {
  return (x > tau || x < -tau) ? 1.0 : 0.0;
}

// a [m,k] * b [k,n]
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

// Sliding dot product over a zero-padded copy of the input.
inline std::vector<double> conv1d(const std::vector<double>& x, const std::vector<double>& w,
                                  const std::vector<double>& bias, std::size_t batch,
                                  std::size_t cin, std::size_t width, std::size_t cout,
                                  std::size_t kernel, std::size_t stride, std::size_t pad) {
  const std::size_t padded = width + 2 * pad;
  const std::size_t wout = (padded - kernel) / stride + 1;
  std::vector<double> y(batch * cout * wout, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<double> xp(cin * padded, 0.0);
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t t = 0; t < width; ++t) xp[c * padded + t + pad] = x[(b * cin + c) * width + t];
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t t = 0; t < wout; ++t) {
        double s = bias[o];
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t j = 0; j < kernel; ++j)
            s += w[(o * cin + c) * kernel + j] * xp[c * padded + t * stride + j];
        y[(b * cout + o) * wout + t] = s;
      }
  }
  return y;
}

// x [B,C,W] normalized with fixed statistics.
inline std::vector<double> batchnorm_eval(const std::vector<double>& x,
                                          const std::vector<double>& gamma,
                                          const std::vector<double>& beta,
                                          const std::vector<double>& mean,
                                          const std::vector<double>& var, double eps,
                                          std::size_t batch, std::size_t ch, std::size_t width) {
  std::vector<double> y(x.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t t = 0; t < width; ++t) {
        const std::size_t i = (b * ch + c) * width + t;
        y[i] = gamma[c] * (x[i] - mean[c]) / std::sqrt(var[c] + eps) + beta[c];
      }
  return y;
}

// mean |x| per (sample, channel) of x [B,C,W] -> [B,C]
inline std::vector<double> mean_abs_per_channel(const std::vector<double>& x, std::size_t batch,
                                                std::size_t ch, std::size_t width) {
  std::vector<double> out(batch * ch, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      double s = 0.0;
      for (std::size_t t = 0; t < width; ++t) s += std::fabs(x[(b * ch + c) * width + t]);
      out[b * ch + c] = s / static_cast<double>(width);
    }
  return out;
}

// Biased per-channel batch mean and variance over (B, W).
inline void batch_stats(const std::vector<double>& x, std::size_t batch, std::size_t ch,
                        std::size_t width, std::vector<double>& mean, std::vector<double>& var) {
  mean.assign(ch, 0.0);
  var.assign(ch, 0.0);
  const double n = static_cast<double>(batch * width);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < width; ++t) mean[c] += x[(b * ch + c) * width + t];
    mean[c] /= n;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < width; ++t) {
        const double d = x[(b * ch + c) * width + t] - mean[c];
        var[c] += d * d;
      }
    var[c] /= n;
  }
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1.0,
                                         double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::fmax(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace oracle
