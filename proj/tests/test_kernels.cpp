#include <doctest.h>

#include "psynth/kernels.hpp"
#include "support.hpp"

using namespace psynth;

namespace {

Tensor random_tensor(std::size_t c, std::size_t t, std::uint64_t seed) {
  Tensor x(c, t);
  x.data = test::uniform_noise(c * t, seed);
  return x;
}

// Brute-force strided convolution written from the padding rule in kernels.hpp.
Tensor naive_conv(const Tensor& x, const ConvShape& s, const std::vector<double>& w, const std::vector<double>& b) {
  const std::size_t out_t = (x.time + s.stride - 1) / s.stride;
  const long total = std::max<long>(static_cast<long>((out_t - 1) * s.stride + s.length) - static_cast<long>(x.time), 0);
  const long left = total / 2;
  Tensor y(s.out_channels, out_t);
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    for (std::size_t t = 0; t < out_t; ++t) {
      double acc = b[o];
      for (std::size_t i = 0; i < s.in_channels; ++i) {
        for (std::size_t k = 0; k < s.length; ++k) {
          const long src = static_cast<long>(t * s.stride + k) - left;
          if (src < 0 || src >= static_cast<long>(x.time)) continue;
          acc += w[(o * s.in_channels + i) * s.length + k] * x.at(i, static_cast<std::size_t>(src));
        }
      }
      y.at(o, t) = acc;
    }
  }
  return y;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.channels == b.channels);
  REQUIRE(a.time == b.time);
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

// Scalar objective sum(r * y) for a fixed random r, so d/dy = r.
double dot(const Tensor& y, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * r.data[i];
  return s;
}

}  // namespace

TEST_CASE("conv output time and padding arithmetic") {
  CHECK(conv_out_time(8, 2) == 4);
  CHECK(conv_out_time(9, 2) == 5);
  CHECK(conv_out_time(60, 1) == 60);
  CHECK(conv_pad_left(8, 5, 2) == 1);  // total 3, odd element right
  CHECK(conv_pad_left(16, 5, 1) == 2);
}

TEST_CASE("identity kernel reproduces the input") {
  const Tensor x = random_tensor(1, 37, 1);
  const ConvShape s{1, 1, 1, 1};
  const std::vector<double> w{1.0}, b{0.0};
  CHECK(kernels::conv1d(x, s, w, b) == x);
  CHECK(reference::conv1d(x, s, w, b) == x);
}

TEST_CASE("conv kernels agree with a brute-force oracle") {
  struct Case {
    std::size_t in, out, len, stride, time;
  };
  for (const Case c : {Case{2, 3, 5, 1, 16}, Case{2, 3, 5, 2, 16}, Case{3, 4, 5, 2, 17}, Case{8, 4, 5, 2, 64},
                       Case{5, 2, 3, 1, 1}, Case{4, 4, 5, 2, 2}}) {
    const ConvShape s{c.in, c.out, c.len, c.stride};
    const Tensor x = random_tensor(c.in, c.time, c.time);
    const auto w = test::uniform_noise(s.weight_count(), 7);
    const auto b = test::uniform_noise(c.out, 8);
    const Tensor o = naive_conv(x, s, w, b);
    CHECK(o.time == conv_out_time(c.time, c.stride));
    CHECK(max_abs_diff(kernels::conv1d(x, s, w, b), o) < 1e-12);
    CHECK(max_abs_diff(reference::conv1d(x, s, w, b), o) < 1e-12);
  }
}

TEST_CASE("conv backward matches central differences and the reference") {
  for (std::size_t stride : {1u, 2u}) {
    const ConvShape s{3, 2, 5, stride};
    Tensor x = random_tensor(3, 11, 20 + stride);
    auto w = test::uniform_noise(s.weight_count(), 21);
    auto b = test::uniform_noise(2, 22);
    const Tensor r = random_tensor(2, conv_out_time(11, stride), 23);

    Tensor gx;
    std::vector<double> gw(w.size(), 0.0), gb(b.size(), 0.0);
    kernels::conv1d_backward(x, s, w, r, &gx, gw, gb);

    Tensor gx_ref;
    std::vector<double> gw_ref(w.size(), 0.0), gb_ref(b.size(), 0.0);
    reference::conv1d_backward(x, s, w, r, &gx_ref, gw_ref, gb_ref);
    CHECK(max_abs_diff(gx, gx_ref) < 1e-12);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(gw[i] == doctest::Approx(gw_ref[i]).epsilon(1e-12));

    const double eps = 1e-6;
    auto f = [&] { return dot(naive_conv(x, s, w, b), r); };
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      const double keep = x.data[i];
      x.data[i] = keep + eps;
      const double up = f();
      x.data[i] = keep - eps;
      const double dn = f();
      x.data[i] = keep;
      CHECK(gx.data[i] == doctest::Approx((up - dn) / (2 * eps)).epsilon(1e-6));
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double keep = w[i];
      w[i] = keep + eps;
      const double up = f();
      w[i] = keep - eps;
      const double dn = f();
      w[i] = keep;
      CHECK(gw[i] == doctest::Approx((up - dn) / (2 * eps)).epsilon(1e-6));
    }
    for (std::size_t i = 0; i < b.size(); ++i) {
      double sum = 0.0;
      for (double v : r.row(i)) sum += v;
      CHECK(gb[i] == doctest::Approx(sum));
    }
  }
}

TEST_CASE("conv backward accumulates into weight and bias gradients") {
  const ConvShape s{1, 1, 3, 1};
  const Tensor x = random_tensor(1, 6, 2);
  const std::vector<double> w{0.1, 0.2, 0.3};
  const Tensor r = random_tensor(1, 6, 3);
  std::vector<double> gw1(3, 0.0), gb1(1, 0.0), gw2(3, 1.0), gb2(1, 1.0);
  kernels::conv1d_backward(x, s, w, r, nullptr, gw1, gb1);
  kernels::conv1d_backward(x, s, w, r, nullptr, gw2, gb2);
  for (std::size_t i = 0; i < 3; ++i) CHECK(gw2[i] == doctest::Approx(gw1[i] + 1.0));
  CHECK(gb2[0] == doctest::Approx(gb1[0] + 1.0));
}

TEST_CASE("linear upsampling definition and invariance") {
  Tensor x(1, 2);
  x.data = {1.0, 3.0};
  const auto y = kernels::upsample2x(x);
  CHECK(y.data == std::vector<double>{1.0, 2.0, 3.0, 3.0});
  CHECK(reference::upsample2x(x) == y);

  Tensor c(3, 9, 0.7);
  for (double v : kernels::upsample2x(c).data) CHECK(v == doctest::Approx(0.7));
}

TEST_CASE("upsample backward matches central differences") {
  Tensor x = random_tensor(1, 4, 9);
  const Tensor r = random_tensor(1, 8, 10);
  const Tensor g = kernels::upsample2x_backward(r);
  CHECK(reference::upsample2x_backward(r) == g);
  const double eps = 1e-6;
  for (std::size_t i = 0; i < 4; ++i) {
    const double keep = x.data[i];
    x.data[i] = keep + eps;
    const double up = dot(reference::upsample2x(x), r);
    x.data[i] = keep - eps;
    const double dn = dot(reference::upsample2x(x), r);
    x.data[i] = keep;
    const double num = (up - dn) / (2 * eps);
    CHECK(std::abs(g.data[i] - num) / std::max(std::abs(num), 1e-8) < 1e-4);
  }
}

TEST_CASE("kernels and reference agree on large multi-channel tensors") {
  const Tensor x = random_tensor(16, 512, 30);
  const ConvShape s{16, 32, 5, 2};
  const auto w = test::uniform_noise(s.weight_count(), 31);
  const auto b = test::uniform_noise(32, 32);
  CHECK(max_abs_diff(kernels::conv1d(x, s, w, b), reference::conv1d(x, s, w, b)) < 1e-11);
  CHECK(kernels::upsample2x(x) == reference::upsample2x(x));
}

TEST_CASE("leaky relu forward and backward") {
  Tensor x(1, 4);
  x.data = {-2.0, -0.5, 0.0, 3.0};
  kernels::leaky_relu(x, 0.2);
  CHECK(x.data == std::vector<double>{-0.4, -0.1, 0.0, 3.0});
  Tensor g(1, 4, 1.0);
  kernels::leaky_relu_backward(x, 0.2, g);
  CHECK(g.data[0] == doctest::Approx(0.2));
  CHECK(g.data[1] == doctest::Approx(0.2));
  CHECK(g.data[3] == 1.0);
}

TEST_CASE("concat_channels stacks rows") {
  Tensor a(1, 3, 1.0), b(2, 3, 2.0);
  const auto c = concat_channels(a, b);
  CHECK(c.channels == 3);
  CHECK(c.at(0, 2) == 1.0);
  CHECK(c.at(2, 0) == 2.0);
}
