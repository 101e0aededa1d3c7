#include "drsn/kernels.hpp"

#include <algorithm>

namespace drsn::kernels::serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void conv1d_forward(const ConvDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
  const std::size_t ow = d.out_width();
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t o = 0; o < d.out_channels; ++o) {
      double* yrow = y.data() + (b * d.out_channels + o) * ow;
      for (std::size_t t = 0; t < ow; ++t) {
        double acc = bias[o];
        const std::ptrdiff_t start =
            static_cast<std::ptrdiff_t>(t * d.stride) - static_cast<std::ptrdiff_t>(d.padding);
        for (std::size_t i = 0; i < d.in_channels; ++i) {
          const double* xrow = x.data() + (b * d.in_channels + i) * d.in_width;
          const double* wk = w.data() + (o * d.in_channels + i) * d.kernel;
          for (std::size_t j = 0; j < d.kernel; ++j) {
            const std::ptrdiff_t s = start + static_cast<std::ptrdiff_t>(j);
            if (s < 0 || s >= static_cast<std::ptrdiff_t>(d.in_width)) continue;
            acc += wk[j] * xrow[s];
          }
        }
        yrow[t] = acc;
      }
    }
  }
}

void conv1d_backward_input(const ConvDims& d, std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx) {
  const std::size_t ow = d.out_width();
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t i = 0; i < d.in_channels; ++i) {
      double* gxrow = gx.data() + (b * d.in_channels + i) * d.in_width;
      for (std::size_t o = 0; o < d.out_channels; ++o) {
        const double* gyrow = gy.data() + (b * d.out_channels + o) * ow;
        const double* wk = w.data() + (o * d.in_channels + i) * d.kernel;
        for (std::size_t t = 0; t < ow; ++t) {
          const std::ptrdiff_t start =
              static_cast<std::ptrdiff_t>(t * d.stride) - static_cast<std::ptrdiff_t>(d.padding);
          for (std::size_t j = 0; j < d.kernel; ++j) {
            const std::ptrdiff_t s = start + static_cast<std::ptrdiff_t>(j);
            if (s < 0 || s >= static_cast<std::ptrdiff_t>(d.in_width)) continue;
            gxrow[s] += gyrow[t] * wk[j];
          }
        }
      }
    }
  }
}

void conv1d_backward_weight(const ConvDims& d, std::span<const double> gy,
                            std::span<const double> x, std::span<double> gw,
                            std::span<double> gb) {
  const std::size_t ow = d.out_width();
  for (std::size_t o = 0; o < d.out_channels; ++o) {
    for (std::size_t b = 0; b < d.batch; ++b) {
      const double* gyrow = gy.data() + (b * d.out_channels + o) * ow;
      for (std::size_t t = 0; t < ow; ++t) gb[o] += gyrow[t];
      for (std::size_t i = 0; i < d.in_channels; ++i) {
        const double* xrow = x.data() + (b * d.in_channels + i) * d.in_width;
        double* gwk = gw.data() + (o * d.in_channels + i) * d.kernel;
        for (std::size_t j = 0; j < d.kernel; ++j) {
          double acc = 0.0;
          for (std::size_t t = 0; t < ow; ++t) {
            const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t * d.stride + j) -
                                     static_cast<std::ptrdiff_t>(d.padding);
            if (s < 0 || s >= static_cast<std::ptrdiff_t>(d.in_width)) continue;
            acc += gyrow[t] * xrow[s];
          }
          gwk[j] += acc;
        }
      }
    }
  }
}

}  // namespace drsn::kernels::serial
