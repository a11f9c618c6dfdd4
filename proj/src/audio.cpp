#include <algorithm>
#include <cmath>
#include <numbers>

#include <spdlog/spdlog.h>

#include "psynth/audio.hpp"
#include "psynth/error.hpp"

namespace psynth {
namespace {

constexpr int kResampleTaps = 64;
constexpr double kKaiserBeta = 8.0;
constexpr std::size_t kTrimWindow = 64;

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

double kaiser(double tau, double half_width) {
  const double r = tau / half_width;
  if (std::abs(r) > 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - r * r)) /
         std::cyl_bessel_i(0.0, kKaiserBeta);
}

}  // namespace

double peak_abs(const Waveform& w) noexcept {
  double peak = 0.0;
  for (double s : w.samples) peak = std::max(peak, std::abs(s));
  return peak;
}

Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw Error(ErrorCode::InvalidArgument, "target_rate must be positive");
  if (w.sample_rate <= 0) throw Error(ErrorCode::InvalidArgument, "source sample_rate must be positive");
  if (target_rate == w.sample_rate) return w;

  const double ratio = static_cast<double>(target_rate) / w.sample_rate;
  const auto out_len = static_cast<std::size_t>(std::llround(w.size() * ratio));
  const double cutoff = std::min(1.0, ratio);
  const double half = kResampleTaps / 2.0;
  const auto n_in = static_cast<long long>(w.size());

  Waveform out;
  out.sample_rate = target_rate;
  out.samples.assign(out_len, 0.0);

#pragma omp parallel for schedule(static)
  for (long long m = 0; m < static_cast<long long>(out_len); ++m) {
    const double t = static_cast<double>(m) / ratio;
    const auto base = static_cast<long long>(std::floor(t));
    double acc = 0.0;
    for (long long j = base - kResampleTaps / 2 + 1; j <= base + kResampleTaps / 2; ++j) {
      if (j < 0 || j >= n_in) continue;
      const double tau = t - static_cast<double>(j);
      acc += w.samples[static_cast<std::size_t>(j)] * cutoff * sinc(cutoff * tau) * kaiser(tau, half);
    }
    out.samples[static_cast<std::size_t>(m)] = acc;
  }
  return out;
}

Waveform trim_silence(const Waveform& w, double threshold_db) {
  if (!(threshold_db < 0.0)) throw Error(ErrorCode::InvalidArgument, "threshold_db must be negative");
  const double thr = std::pow(10.0, threshold_db / 20.0);
  const std::size_t n = w.size();
  if (n == 0) throw Error(ErrorCode::NoSignal, "empty waveform");
  const std::size_t win = std::min(kTrimWindow, n);

  // Sliding mean square for every window start (hop 1).
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + w.samples[i] * w.samples[i];
  const std::size_t starts = n - win + 1;
  const double thr_ms = thr * thr * static_cast<double>(win);
  auto loud = [&](std::size_t s) { return prefix[s + win] - prefix[s] >= thr_ms; };

  std::size_t first_win = starts;
  for (std::size_t s = 0; s < starts; ++s) {
    if (loud(s)) { first_win = s; break; }
  }
  if (first_win == starts) throw Error(ErrorCode::NoSignal, "waveform is below " + std::to_string(threshold_db) + " dBFS");
  std::size_t last_win = first_win;
  for (std::size_t s = starts; s-- > first_win;) {
    if (loud(s)) { last_win = s; break; }
  }

  // A window at or above threshold always holds a sample at or above it.
  std::size_t begin = first_win;
  while (std::abs(w.samples[begin]) < thr) ++begin;
  std::size_t end = last_win + win;
  while (std::abs(w.samples[end - 1]) < thr) --end;

  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(w.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                     w.samples.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

Waveform pad_to_length(const Waveform& w, std::size_t n, Warnings* warnings) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "pad length must be positive");
  Waveform out = w;
  if (out.size() > n) {
    const std::string msg = "truncated " + std::to_string(out.size()) + " samples to " + std::to_string(n);
    spdlog::warn("pad_to_length: {}", msg);
    if (warnings) warnings->push_back(msg);
  }
  out.samples.resize(n, 0.0);
  return out;
}

}  // namespace psynth
