#include "psynth/error.hpp"
#include "psynth/kernels.hpp"

namespace psynth::reference {

Tensor conv1d(const Tensor& x, const ConvShape& s, std::span<const double> w, std::span<const double> b) {
  if (x.channels != s.in_channels || w.size() != s.weight_count() || b.size() != s.out_channels) {
    throw Error(ErrorCode::ShapeMismatch, "reference::conv1d");
  }
  const std::size_t out_time = conv_out_time(x.time, s.stride);
  const long pad = static_cast<long>(conv_pad_left(x.time, s.length, s.stride));
  Tensor y(s.out_channels, out_time);
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    for (std::size_t t = 0; t < out_time; ++t) {
      double acc = b[o];
      for (std::size_t i = 0; i < s.in_channels; ++i) {
        for (std::size_t k = 0; k < s.length; ++k) {
          const long src = static_cast<long>(t * s.stride + k) - pad;
          if (src < 0 || src >= static_cast<long>(x.time)) continue;
          acc += w[(o * s.in_channels + i) * s.length + k] * x.at(i, static_cast<std::size_t>(src));
        }
      }
      y.at(o, t) = acc;
    }
  }
  return y;
}

void conv1d_backward(const Tensor& x, const ConvShape& s, std::span<const double> w, const Tensor& gy,
                     Tensor* gx, std::span<double> gw, std::span<double> gb) {
  const long pad = static_cast<long>(conv_pad_left(x.time, s.length, s.stride));
  if (gx) *gx = Tensor(x.channels, x.time);
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    for (std::size_t t = 0; t < gy.time; ++t) {
      const double g = gy.at(o, t);
      gb[o] += g;
      for (std::size_t i = 0; i < s.in_channels; ++i) {
        for (std::size_t k = 0; k < s.length; ++k) {
          const long src = static_cast<long>(t * s.stride + k) - pad;
          if (src < 0 || src >= static_cast<long>(x.time)) continue;
          const std::size_t widx = (o * s.in_channels + i) * s.length + k;
          gw[widx] += g * x.at(i, static_cast<std::size_t>(src));
          if (gx) gx->at(i, static_cast<std::size_t>(src)) += g * w[widx];
        }
      }
    }
  }
}

Tensor upsample2x(const Tensor& x) {
  Tensor y(x.channels, 2 * x.time);
  for (std::size_t c = 0; c < x.channels; ++c) {
    for (std::size_t i = 0; i < x.time; ++i) {
      y.at(c, 2 * i) = x.at(c, i);
      y.at(c, 2 * i + 1) = i + 1 < x.time ? 0.5 * (x.at(c, i) + x.at(c, i + 1)) : x.at(c, i);
    }
  }
  return y;
}

Tensor upsample2x_backward(const Tensor& gy) {
  Tensor gx(gy.channels, gy.time / 2);
  for (std::size_t c = 0; c < gx.channels; ++c) {
    for (std::size_t i = 0; i < gx.time; ++i) {
      gx.at(c, i) += gy.at(c, 2 * i);
      if (i + 1 < gx.time) {
        gx.at(c, i) += 0.5 * gy.at(c, 2 * i + 1);
        gx.at(c, i + 1) += 0.5 * gy.at(c, 2 * i + 1);
      } else {
        gx.at(c, i) += gy.at(c, 2 * i + 1);
      }
    }
  }
  return gx;
}

}  // namespace psynth::reference
