#include <doctest.h>

#include <random>

#include "drsn/kernels.hpp"
#include "oracles.hpp"

using namespace drsn::kernels;

namespace {

ConvDims random_dims(std::mt19937_64& rng) {
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  ConvDims d{};
  d.batch = pick(1, 4);
  d.in_channels = pick(1, 6);
  d.out_channels = pick(1, 6);
  d.kernel = pick(1, 5);
  d.stride = pick(1, 3);
  d.padding = pick(0, d.kernel - 1);
  d.in_width = pick(d.kernel, 40);
  return d;
}

}  // namespace

TEST_CASE("serial matmul matches the triple loop") {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t m = 1 + rep % 7, k = 1 + rep % 5, n = 1 + rep % 9;
    const auto a = oracle::random_vector(rng, m * k);
    const auto b = oracle::random_vector(rng, k * n);
    std::vector<double> c(m * n);
    serial::matmul(a, b, c, m, k, n);
    CHECK(oracle::max_abs_diff(c, oracle::matmul(a, b, m, k, n)) < 1e-12);
  }
}

TEST_CASE("serial conv1d forward matches the sliding dot product") {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    const ConvDims d = random_dims(rng);
    const auto x = oracle::random_vector(rng, d.batch * d.in_channels * d.in_width);
    const auto w = oracle::random_vector(rng, d.out_channels * d.in_channels * d.kernel);
    const auto b = oracle::random_vector(rng, d.out_channels);
    std::vector<double> y(d.batch * d.out_channels * d.out_width());
    serial::conv1d_forward(d, x, w, b, y);
    const auto ref = oracle::conv1d(x, w, b, d.batch, d.in_channels, d.in_width, d.out_channels,
                                    d.kernel, d.stride, d.padding);
    CHECK(oracle::max_abs_diff(y, ref) < 1e-12);
  }
}

TEST_CASE("conv1d backward kernels are the adjoint of the forward kernel") {
  // Without bias, <conv(x, w), gy> is linear in x and in w separately, so
  // <conv(x, w), gy> == <gx, x> == <gw, w>.
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 30; ++rep) {
    const ConvDims d = random_dims(rng);
    const auto x = oracle::random_vector(rng, d.batch * d.in_channels * d.in_width);
    const auto w = oracle::random_vector(rng, d.out_channels * d.in_channels * d.kernel);
    const std::vector<double> zero(d.out_channels, 0.0);
    const auto gy = oracle::random_vector(rng, d.batch * d.out_channels * d.out_width());
    std::vector<double> y(gy.size());
    serial::conv1d_forward(d, x, w, zero, y);
    std::vector<double> gx(x.size(), 0.0), gw(w.size(), 0.0), gb(d.out_channels, 0.0);
    serial::conv1d_backward_input(d, gy, w, gx);
    serial::conv1d_backward_weight(d, gy, x, gw, gb);
    double lhs = 0, via_x = 0, via_w = 0, bias_sum = 0, gy_sum = 0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * gy[i];
    for (std::size_t i = 0; i < x.size(); ++i) via_x += gx[i] * x[i];
    for (std::size_t i = 0; i < w.size(); ++i) via_w += gw[i] * w[i];
    for (double v : gb) bias_sum += v;
    for (double v : gy) gy_sum += v;
    CHECK(via_x == doctest::Approx(lhs).epsilon(1e-10));
    CHECK(via_w == doctest::Approx(lhs).epsilon(1e-10));
    CHECK(bias_sum == doctest::Approx(gy_sum).epsilon(1e-10));
  }
}

TEST_CASE("parallel kernels are bitwise identical to the serial ones") {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 10; ++rep) {
    // Large enough to cross the parallel work threshold.
    ConvDims d{8, 16, 300, 16, 3, 1 + static_cast<std::size_t>(rep % 2), 1};
    const auto x = oracle::random_vector(rng, d.batch * d.in_channels * d.in_width);
    const auto w = oracle::random_vector(rng, d.out_channels * d.in_channels * d.kernel);
    const auto b = oracle::random_vector(rng, d.out_channels);
    const auto gy = oracle::random_vector(rng, d.batch * d.out_channels * d.out_width());
    std::vector<double> ys(gy.size()), yp(gy.size());
    serial::conv1d_forward(d, x, w, b, ys);
    parallel::conv1d_forward(d, x, w, b, yp);
    CHECK(ys == yp);
    std::vector<double> gxs(x.size(), 0.5), gxp(x.size(), 0.5);
    serial::conv1d_backward_input(d, gy, w, gxs);
    parallel::conv1d_backward_input(d, gy, w, gxp);
    CHECK(gxs == gxp);
    std::vector<double> gws(w.size(), 0.0), gwp(w.size(), 0.0), gbs(d.out_channels, 0.0),
        gbp(d.out_channels, 0.0);
    serial::conv1d_backward_weight(d, gy, x, gws, gbs);
    parallel::conv1d_backward_weight(d, gy, x, gwp, gbp);
    CHECK(gws == gwp);
    CHECK(gbs == gbp);

    const std::size_t m = 200, k = 64, n = 96;
    const auto a = oracle::random_vector(rng, m * k);
    const auto bb = oracle::random_vector(rng, k * n);
    std::vector<double> cs(m * n), cp(m * n);
    serial::matmul(a, bb, cs, m, k, n);
    parallel::matmul(a, bb, cp, m, k, n);
    CHECK(cs == cp);
  }
  CHECK(max_threads() >= 1);
}
