#pragma once

#include <cstddef>
#include <span>

// Hot loops of the network: dense matrix product and 1-D convolution.
//
// `serial` is the reference implementation. `parallel` distributes the outer
// loops with OpenMP; each output element is still accumulated by exactly one
// thread in the same order as the serial kernel, so both produce bitwise
// identical results for any thread count.

namespace drsn::kernels {

struct ConvDims {
  std::size_t batch;
  std::size_t in_channels;
  std::size_t in_width;
  std::size_t out_channels;
  std::size_t kernel;
  std::size_t stride;
  std::size_t padding;

  std::size_t out_width() const {
    return (in_width + 2 * padding - kernel) / stride + 1;
  }
};

namespace serial {

// c[m,n] = sum_k a[m,k] * b[k,n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);

// y[b,o,t] = bias[o] + sum_{i,j} w[o,i,j] * x[b,i,t*stride+j-padding]
void conv1d_forward(const ConvDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);

// gx += dL/dx
void conv1d_backward_input(const ConvDims& d, std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx);

// gw += dL/dw, gb += dL/dbias
void conv1d_backward_weight(const ConvDims& d, std::span<const double> gy,
                            std::span<const double> x, std::span<double> gw,
                            std::span<double> gb);

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void conv1d_forward(const ConvDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);
void conv1d_backward_input(const ConvDims& d, std::span<const double> gy,
                           std::span<const double> w, std::span<double> gx);
void conv1d_backward_weight(const ConvDims& d, std::span<const double> gy,
                            std::span<const double> x, std::span<double> gw,
                            std::span<double> gb);

}  // namespace parallel

int max_threads();

}  // namespace drsn::kernels
