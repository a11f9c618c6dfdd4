#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "psynth/audio.hpp"

namespace psynth {

enum class LossMode { Wave, High, Full };

std::string_view to_string(LossMode m);
// "wave" / "high" / "full", case-insensitive; throws InvalidArgument.
LossMode parse_loss_mode(std::string_view s);

struct LossConfig {
  LossMode mode = LossMode::Full;
  double lambda = 0.5;
  std::size_t stft_frame = 1024;
  std::size_t stft_hop = 512;
  std::size_t high_cut_bin = 40;

  void validate() const;
  // First STFT bin included in the spectral term.
  std::size_t first_bin() const noexcept { return mode == LossMode::High ? high_cut_bin : 0; }
  bool operator==(const LossConfig&) const = default;
};

nlohmann::ordered_json to_json(const LossConfig& c);
LossConfig loss_config_from_json(const nlohmann::json& j);

struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::size_t frame = 0;
  std::size_t hop = 0;
  std::vector<double> magnitude;  // frames x bins

  double at(std::size_t m, std::size_t k) const { return magnitude[m * bins + k]; }
};

// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

/// Hann-windowed magnitude STFT, no centering: floor((len - frame) / hop) + 1
/// frames of frame / 2 + 1 bins. Throws TooShort when len < frame.
Spectrogram stft_mag(std::span<const double> x, std::size_t frame = 1024, std::size_t hop = 512);

double l1_recon(std::span<const double> predicted, std::span<const double> target);
double stft_loss(std::span<const double> predicted, std::span<const double> target, const LossConfig& cfg);

struct LossParts {
  double total = 0.0;
  double l1 = 0.0;
  double stft = 0.0;  // 0 in WAVE mode
};

/// WAVE: l1. FULL: l1 + lambda * stft (all bins). HIGH: l1 + lambda * stft (bins >= high_cut_bin).
LossParts total_loss(std::span<const double> predicted, std::span<const double> target, const LossConfig& cfg);

/// total_loss plus its gradient w.r.t. `predicted`, written into grad (same length).
LossParts total_loss_grad(std::span<const double> predicted, std::span<const double> target, const LossConfig& cfg,
                          std::span<double> grad);

}  // namespace psynth
