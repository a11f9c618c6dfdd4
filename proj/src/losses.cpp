#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <numbers>

#include "psynth/error.hpp"
#include "psynth/fft.hpp"
#include "psynth/losses.hpp"

namespace psynth {
namespace {

void require_same(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::ShapeMismatch, "loss inputs have lengths " + std::to_string(a.size()) + " and " +
                                              std::to_string(b.size()));
  }
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::size_t frame_count(std::size_t len, std::size_t frame, std::size_t hop) {
  if (len < frame) throw Error(ErrorCode::TooShort, "signal of " + std::to_string(len) + " samples is shorter than one frame");
  return (len - frame) / hop + 1;
}

// Complex STFT frames (frames x bins).
std::vector<std::complex<double>> stft_complex(std::span<const double> x, std::size_t frame, std::size_t hop,
                                               std::size_t frames, const std::vector<double>& window) {
  const RealFft fft(frame);
  std::vector<std::complex<double>> out(frames * fft.bins());
  std::vector<double> buf(frame);
  for (std::size_t m = 0; m < frames; ++m) {
    for (std::size_t n = 0; n < frame; ++n) buf[n] = x[m * hop + n] * window[n];
    fft.forward(buf, std::span(out.data() + m * fft.bins(), fft.bins()));
  }
  return out;
}

// Spectral term and, when grad is non-empty, its gradient scaled by `weight`
// added into grad.
double stft_term(std::span<const double> predicted, std::span<const double> target, const LossConfig& cfg,
                 double weight, std::span<double> grad) {
  const std::size_t frame = cfg.stft_frame, hop = cfg.stft_hop;
  const std::size_t frames = frame_count(predicted.size(), frame, hop);
  const std::size_t bins = frame / 2 + 1;
  const std::size_t first = cfg.first_bin();
  const auto window = hann_window(frame);
  const auto xp = stft_complex(predicted, frame, hop, frames, window);
  const auto xt = stft_complex(target, frame, hop, frames, window);

  const double count = static_cast<double>(frames * (bins - first));
  double acc = 0.0;
  for (std::size_t m = 0; m < frames; ++m) {
    for (std::size_t k = first; k < bins; ++k) acc += std::abs(std::abs(xp[m * bins + k]) - std::abs(xt[m * bins + k]));
  }
  const double loss = acc / count;
  if (grad.empty()) return loss;

  // d|X_k|/dx[n] = w[n] Re(X_k / |X_k| exp(2 pi i k n / N)); summed over bins with an inverse real FFT.
  const RealFft fft(frame);
  std::vector<std::complex<double>> coef(bins);
  std::vector<double> back(frame);
  for (std::size_t m = 0; m < frames; ++m) {
    std::fill(coef.begin(), coef.end(), std::complex<double>{});
    for (std::size_t k = first; k < bins; ++k) {
      const auto& xk = xp[m * bins + k];
      const double mag = std::abs(xk);
      if (mag == 0.0) continue;
      const double g = sign(mag - std::abs(xt[m * bins + k])) * weight / count;
      const double half = (k == 0 || k == bins - 1) ? 1.0 : 0.5;
      coef[k] = half * g * xk / mag;
    }
    fft.inverse(coef, back);
    for (std::size_t n = 0; n < frame; ++n) grad[m * hop + n] += window[n] * back[n];
  }
  return loss;
}

}  // namespace

std::string_view to_string(LossMode m) {
  switch (m) {
    case LossMode::Wave: return "wave";
    case LossMode::High: return "high";
    case LossMode::Full: return "full";
  }
  return "full";
}

LossMode parse_loss_mode(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "wave") return LossMode::Wave;
  if (lower == "high") return LossMode::High;
  if (lower == "full") return LossMode::Full;
  throw Error(ErrorCode::InvalidArgument, "unknown loss mode '" + std::string(s) + "'");
}

void LossConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorCode::InvalidConfig, "lambda must be >= 0");
  if (stft_frame < 2 || stft_frame % 2 != 0) throw Error(ErrorCode::InvalidConfig, "stft_frame must be even");
  if (stft_hop == 0) throw Error(ErrorCode::InvalidConfig, "stft_hop must be positive");
  if (high_cut_bin > stft_frame / 2) throw Error(ErrorCode::InvalidConfig, "high_cut_bin beyond Nyquist");
}

nlohmann::ordered_json to_json(const LossConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"lambda", c.lambda},
          {"stft_frame", c.stft_frame},
          {"stft_hop", c.stft_hop},
          {"high_cut_bin", c.high_cut_bin}};
}

LossConfig loss_config_from_json(const nlohmann::json& j) {
  LossConfig c;
  c.mode = parse_loss_mode(j.value("mode", std::string("full")));
  c.lambda = j.value("lambda", c.lambda);
  c.stft_frame = j.value("stft_frame", c.stft_frame);
  c.stft_hop = j.value("stft_hop", c.stft_hop);
  c.high_cut_bin = j.value("high_cut_bin", c.high_cut_bin);
  c.validate();
  return c;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

Spectrogram stft_mag(std::span<const double> x, std::size_t frame, std::size_t hop) {
  Spectrogram s;
  s.frame = frame;
  s.hop = hop;
  s.frames = frame_count(x.size(), frame, hop);
  s.bins = frame / 2 + 1;
  const auto spec = stft_complex(x, frame, hop, s.frames, hann_window(frame));
  s.magnitude.resize(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) s.magnitude[i] = std::abs(spec[i]);
  return s;
}

double l1_recon(std::span<const double> predicted, std::span<const double> target) {
  require_same(predicted, target);
  if (predicted.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) acc += std::abs(predicted[i] - target[i]);
  return acc / static_cast<double>(predicted.size());
}

double stft_loss(std::span<const double> predicted, std::span<const double> target, const LossConfig& cfg) {
  require_same(predicted, target);
  cfg.validate();
  return stft_term(predicted, target, cfg, 0.0, {});
}

LossParts total_loss(std::span<const double> predicted, std::span<const double> target, const LossConfig& cfg) {
  LossParts p;
  p.l1 = l1_recon(predicted, target);
  p.total = p.l1;
  if (cfg.mode != LossMode::Wave) {
    p.stft = stft_loss(predicted, target, cfg);
    p.total += cfg.lambda * p.stft;
  }
  return p;
}

LossParts total_loss_grad(std::span<const double> predicted, std::span<const double> target, const LossConfig& cfg,
                          std::span<double> grad) {
  require_same(predicted, target);
  if (grad.size() != predicted.size()) throw Error(ErrorCode::ShapeMismatch, "gradient buffer length");
  cfg.validate();
  LossParts p;
  p.l1 = l1_recon(predicted, target);
  const double scale = 1.0 / static_cast<double>(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) grad[i] = sign(predicted[i] - target[i]) * scale;
  p.total = p.l1;
  if (cfg.mode != LossMode::Wave) {
    p.stft = stft_term(predicted, target, cfg, cfg.lambda, grad);
    p.total += cfg.lambda * p.stft;
  }
  return p;
}

}  // namespace psynth
