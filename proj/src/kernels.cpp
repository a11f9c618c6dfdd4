#include <algorithm>
#include <cstdint>

#include "psynth/error.hpp"
#include "psynth/kernels.hpp"

namespace psynth {

std::size_t conv_out_time(std::size_t in_time, std::size_t stride) noexcept {
  return (in_time + stride - 1) / stride;
}

std::size_t conv_pad_left(std::size_t in_time, std::size_t length, std::size_t stride) noexcept {
  const std::size_t out_time = conv_out_time(in_time, stride);
  const std::size_t needed = (out_time - 1) * stride + length;
  const std::size_t total = needed > in_time ? needed - in_time : 0;
  return total / 2;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.time != b.time) throw Error(ErrorCode::ShapeMismatch, "concat_channels: time lengths differ");
  Tensor out(a.channels + b.channels, a.time);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

namespace kernels {
namespace {

constexpr std::size_t kTimeTile = 1024;

std::ptrdiff_t floor_div(std::ptrdiff_t a, std::ptrdiff_t b) {
  std::ptrdiff_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

// Input split into `stride` phases, x[i][t*stride + r] -> phase(i, r)[margin + t],
// zero margins on both sides so every tap of every output reads in bounds.
struct PhaseSplit {
  std::size_t stride = 1;
  std::size_t margin = 0;
  std::size_t span = 0;
  std::vector<double> data;

  double* phase(std::size_t i, std::size_t r) { return data.data() + (i * stride + r) * span; }
  const double* phase(std::size_t i, std::size_t r) const { return data.data() + (i * stride + r) * span; }
};

struct TapOffset {
  std::ptrdiff_t q;
  std::size_t r;
};

std::vector<TapOffset> tap_offsets(const ConvShape& s, std::size_t pad_left) {
  std::vector<TapOffset> taps(s.length);
  const auto st = static_cast<std::ptrdiff_t>(s.stride);
  for (std::size_t k = 0; k < s.length; ++k) {
    const auto d = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(pad_left);
    const auto q = floor_div(d, st);
    taps[k] = {q, static_cast<std::size_t>(d - q * st)};
  }
  return taps;
}

PhaseSplit make_layout(std::size_t channels, std::size_t out_time, const ConvShape& s,
                       const std::vector<TapOffset>& taps) {
  PhaseSplit p;
  p.stride = s.stride;
  std::ptrdiff_t q_min = 0, q_max = 0;
  for (const auto& t : taps) {
    q_min = std::min(q_min, t.q);
    q_max = std::max(q_max, t.q);
  }
  p.margin = static_cast<std::size_t>(-q_min);
  p.span = p.margin + out_time + static_cast<std::size_t>(q_max) + 1;
  p.data.assign(channels * s.stride * p.span, 0.0);
  return p;
}

PhaseSplit split_phases(const Tensor& x, std::size_t out_time, const ConvShape& s, const std::vector<TapOffset>& taps) {
  PhaseSplit p = make_layout(x.channels, out_time, s, taps);
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < static_cast<long long>(x.channels); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* src = x.row(i).data();
    for (std::size_t r = 0; r < s.stride; ++r) {
      double* dst = p.phase(i, r) + p.margin;
      for (std::size_t t = 0; t * s.stride + r < x.time; ++t) dst[t] = src[t * s.stride + r];
    }
  }
  return p;
}

void check_conv(const Tensor& x, const ConvShape& s, std::span<const double> w) {
  if (x.channels != s.in_channels || w.size() != s.weight_count() || s.stride == 0 || s.length == 0 || x.time == 0) {
    throw Error(ErrorCode::ShapeMismatch, "conv1d: input has " + std::to_string(x.channels) + " channels, kernel expects " +
                                              std::to_string(s.in_channels));
  }
}

}  // namespace

Tensor conv1d(const Tensor& x, const ConvShape& s, std::span<const double> w, std::span<const double> b) {
  check_conv(x, s, w);
  if (b.size() != s.out_channels) throw Error(ErrorCode::ShapeMismatch, "conv1d: bias size");
  const std::size_t out_time = conv_out_time(x.time, s.stride);
  const auto taps = tap_offsets(s, conv_pad_left(x.time, s.length, s.stride));
  const PhaseSplit ph = split_phases(x, out_time, s, taps);

  Tensor y(s.out_channels, out_time);
#pragma omp parallel for schedule(static)
  for (long long oo = 0; oo < static_cast<long long>(s.out_channels); ++oo) {
    const auto o = static_cast<std::size_t>(oo);
    double* yrow = y.row(o).data();
    std::fill(yrow, yrow + out_time, b[o]);
    for (std::size_t t0 = 0; t0 < out_time; t0 += kTimeTile) {
      const std::size_t t1 = std::min(out_time, t0 + kTimeTile);
      for (std::size_t i = 0; i < s.in_channels; ++i) {
        const double* wrow = w.data() + (o * s.in_channels + i) * s.length;
        for (std::size_t k = 0; k < s.length; ++k) {
          const double wv = wrow[k];
          const double* src = ph.phase(i, taps[k].r) + static_cast<std::ptrdiff_t>(ph.margin) + taps[k].q;
#pragma omp simd
          for (std::size_t t = t0; t < t1; ++t) yrow[t] += wv * src[t];
        }
      }
    }
  }
  return y;
}

void conv1d_backward(const Tensor& x, const ConvShape& s, std::span<const double> w, const Tensor& gy,
                     Tensor* gx, std::span<double> gw, std::span<double> gb) {
  check_conv(x, s, w);
  const std::size_t out_time = conv_out_time(x.time, s.stride);
  if (gy.channels != s.out_channels || gy.time != out_time || gw.size() != s.weight_count() ||
      gb.size() != s.out_channels) {
    throw Error(ErrorCode::ShapeMismatch, "conv1d_backward: gradient shapes");
  }
  const auto taps = tap_offsets(s, conv_pad_left(x.time, s.length, s.stride));
  const PhaseSplit ph = split_phases(x, out_time, s, taps);

#pragma omp parallel for schedule(static)
  for (long long oo = 0; oo < static_cast<long long>(s.out_channels); ++oo) {
    const auto o = static_cast<std::size_t>(oo);
    const double* g = gy.row(o).data();
    double bias_acc = 0.0;
    for (std::size_t t = 0; t < out_time; ++t) bias_acc += g[t];
    gb[o] += bias_acc;
    for (std::size_t i = 0; i < s.in_channels; ++i) {
      double* gwrow = gw.data() + (o * s.in_channels + i) * s.length;
      for (std::size_t k = 0; k < s.length; ++k) {
        const double* src = ph.phase(i, taps[k].r) + static_cast<std::ptrdiff_t>(ph.margin) + taps[k].q;
        double acc = 0.0;
#pragma omp simd reduction(+ : acc)
        for (std::size_t t = 0; t < out_time; ++t) acc += g[t] * src[t];
        gwrow[k] += acc;
      }
    }
  }

  if (gx == nullptr) return;
  PhaseSplit gph = make_layout(x.channels, out_time, s, taps);
  *gx = Tensor(x.channels, x.time);
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < static_cast<long long>(s.in_channels); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t o = 0; o < s.out_channels; ++o) {
      const double* g = gy.row(o).data();
      const double* wrow = w.data() + (o * s.in_channels + i) * s.length;
      for (std::size_t k = 0; k < s.length; ++k) {
        const double wv = wrow[k];
        double* dst = gph.phase(i, taps[k].r) + static_cast<std::ptrdiff_t>(gph.margin) + taps[k].q;
#pragma omp simd
        for (std::size_t t = 0; t < out_time; ++t) dst[t] += wv * g[t];
      }
    }
    double* out = gx->row(i).data();
    for (std::size_t r = 0; r < s.stride; ++r) {
      const double* src = gph.phase(i, r) + gph.margin;
      for (std::size_t t = 0; t * s.stride + r < x.time; ++t) out[t * s.stride + r] = src[t];
    }
  }
}

Tensor upsample2x(const Tensor& x) {
  Tensor y(x.channels, 2 * x.time);
#pragma omp parallel for schedule(static)
  for (long long cc = 0; cc < static_cast<long long>(x.channels); ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    const double* src = x.row(c).data();
    double* dst = y.row(c).data();
    const std::size_t n = x.time;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      dst[2 * i] = src[i];
      dst[2 * i + 1] = 0.5 * (src[i] + src[i + 1]);
    }
    dst[2 * n - 2] = src[n - 1];
    dst[2 * n - 1] = src[n - 1];
  }
  return y;
}

Tensor upsample2x_backward(const Tensor& gy) {
  Tensor gx(gy.channels, gy.time / 2);
#pragma omp parallel for schedule(static)
  for (long long cc = 0; cc < static_cast<long long>(gy.channels); ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    const double* g = gy.row(c).data();
    double* dst = gx.row(c).data();
    const std::size_t n = gx.time;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      dst[i] += g[2 * i] + 0.5 * g[2 * i + 1];
      dst[i + 1] += 0.5 * g[2 * i + 1];
    }
    dst[n - 1] += g[2 * n - 2] + g[2 * n - 1];
  }
  return gx;
}

void leaky_relu(Tensor& x, double slope) {
  const std::size_t n = x.data.size();
  double* d = x.data.data();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) d[i] = d[i] > 0.0 ? d[i] : slope * d[i];
}

void leaky_relu_backward(const Tensor& y, double slope, Tensor& gy) {
  const std::size_t n = y.data.size();
  const double* a = y.data.data();
  double* g = gy.data.data();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) g[i] = a[i] > 0.0 ? g[i] : slope * g[i];
}

}  // namespace kernels
}  // namespace psynth
