#pragma once

#include <complex>
#include <cstddef>
#include <span>

namespace psynth {

// Real-input DFT of a fixed size, backed by FFTW. Instances are cheap handles
// onto a shared plan and may be used from several threads at once.
class RealFft {
 public:
  explicit RealFft(std::size_t n);

  std::size_t size() const noexcept { return n_; }
  std::size_t bins() const noexcept { return n_ / 2 + 1; }

  // X[k] = sum_n x[n] exp(-2 pi i k n / N), k = 0..N/2.
  void forward(std::span<const double> in, std::span<std::complex<double>> out) const;

  // y[n] = Re X[0] + Re X[N/2] (-1)^n + 2 Re sum_{k=1}^{N/2-1} X[k] exp(2 pi i k n / N).
  // Unnormalized; imaginary parts of the DC and Nyquist bins are ignored.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out) const;

 private:
  std::size_t n_;
  void* forward_plan_;
  void* inverse_plan_;
};

}  // namespace psynth
