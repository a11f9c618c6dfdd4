#pragma once

#include <cstddef>
#include <span>

#include "psynth/tensor.hpp"

// Layer kernels used by the model. Two implementations share these
// signatures: psynth::kernels (OpenMP, phase-split inner loops) and
// psynth::reference (serial nested loops, kept as the test oracle).
//
// Convolution weights are laid out [out][in][tap]; padding is "same-ceil":
// out_time = ceil(in_time / stride), total zero padding
// max((out_time - 1) * stride + length - in_time, 0), with the odd element on the right.

namespace psynth {

struct ConvShape {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t length = 0;
  std::size_t stride = 1;

  std::size_t weight_count() const noexcept { return out_channels * in_channels * length; }
};

std::size_t conv_out_time(std::size_t in_time, std::size_t stride) noexcept;
std::size_t conv_pad_left(std::size_t in_time, std::size_t length, std::size_t stride) noexcept;

namespace kernels {

Tensor conv1d(const Tensor& x, const ConvShape& s, std::span<const double> w, std::span<const double> b);

// gx is overwritten (skipped when null); gw and gb are accumulated into.
void conv1d_backward(const Tensor& x, const ConvShape& s, std::span<const double> w, const Tensor& gy,
                     Tensor* gx, std::span<double> gw, std::span<double> gb);

Tensor upsample2x(const Tensor& x);
Tensor upsample2x_backward(const Tensor& gy);

void leaky_relu(Tensor& x, double slope);
// gy is scaled in place using the sign of the activation output y.
void leaky_relu_backward(const Tensor& y, double slope, Tensor& gy);

}  // namespace kernels

namespace reference {

Tensor conv1d(const Tensor& x, const ConvShape& s, std::span<const double> w, std::span<const double> b);
void conv1d_backward(const Tensor& x, const ConvShape& s, std::span<const double> w, const Tensor& gy,
                     Tensor* gx, std::span<double> gw, std::span<double> gb);
Tensor upsample2x(const Tensor& x);
Tensor upsample2x_backward(const Tensor& gy);

}  // namespace reference

}  // namespace psynth
