#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace psynth {

// Dense channels x time activation, row-major (one contiguous row per channel).
struct Tensor {
  std::size_t channels = 0;
  std::size_t time = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t c, std::size_t t, double fill = 0.0) : channels(c), time(t), data(c * t, fill) {}

  std::span<double> row(std::size_t c) { return {data.data() + c * time, time}; }
  std::span<const double> row(std::size_t c) const { return {data.data() + c * time, time}; }
  double& at(std::size_t c, std::size_t t) { return data[c * time + t]; }
  double at(std::size_t c, std::size_t t) const { return data[c * time + t]; }

  bool operator==(const Tensor&) const = default;
};

// Channel-wise concatenation of two tensors of equal time length.
Tensor concat_channels(const Tensor& a, const Tensor& b);

}  // namespace psynth
