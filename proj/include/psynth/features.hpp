#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "psynth/audio.hpp"

namespace psynth {

inline constexpr std::size_t kFeatureCount = 7;

enum class Feature : std::size_t { Hardness, Depth, Brightness, Roughness, Boominess, Warmth, Sharpness };

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "hardness", "depth", "brightness", "roughness", "boominess", "warmth", "sharpness"};

// Index of a feature name in canonical order, or kFeatureCount if unknown.
std::size_t feature_index(std::string_view name) noexcept;

struct TimbralVector {
  std::array<double, kFeatureCount> values{};
  bool normalized = false;

  double& operator[](Feature f) { return values[static_cast<std::size_t>(f)]; }
  double operator[](Feature f) const { return values[static_cast<std::size_t>(f)]; }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  bool operator==(const TimbralVector&) const = default;
};

struct Envelope {
  std::vector<double> values;
  int sample_rate = kSampleRate;

  std::size_t size() const noexcept { return values.size(); }
};

struct FeatureNormalizer {
  std::array<double, kFeatureCount> min{};
  std::array<double, kFeatureCount> max{};
  std::array<bool, kFeatureCount> degenerate{};

  bool operator==(const FeatureNormalizer&) const = default;
};

/// Attack/release one-pole follower on |x|. The attack branch is taken when
/// |x[n]| >= e[n-1]; the state starts at zero and the output is clamped to [0, 1].
Envelope envelope_follow(const Waveform& w, double attack_ms = 5.0, double release_ms = 50.0);

/// Linear rise to `amplitude` over the attack, then amplitude * exp(-t / decay).
/// The ramp reaches its peak at sample round(attack_ms * sr / 1000).
Envelope parametric_envelope(double attack_ms, double decay_ms, double amplitude, std::size_t n,
                             int sample_rate = kSampleRate);

// Frame-averaged Hann spectra (frame 1024, hop 512). Inputs shorter than a
// frame are zero-padded to one frame.
struct SpectrumSummary {
  std::vector<double> mean_magnitude;
  std::vector<double> mean_power;
  std::vector<std::vector<double>> frame_power;  // per frame, per bin
  double bin_hz = 0.0;
};

SpectrumSummary summarize_spectrum(const Waveform& w, std::size_t frame = 1024, std::size_t hop = 512);

// Roughness peaks come from one whole-sound frame of this size (about 1 Hz bins).
inline constexpr std::size_t kRoughnessFrame = 16384;

/// Power-weighted mean frequency of the frame-averaged spectrum; 0 for silence.
double spectral_centroid(const Waveform& w);

// Individual proxies, exposed for tests and diagnostics.
double brightness_proxy(const SpectrumSummary& s);
double depth_proxy(const SpectrumSummary& s);
double boominess_proxy(const SpectrumSummary& s, std::size_t frame = 1024);
double warmth_proxy(const SpectrumSummary& s);
double sharpness_proxy(const SpectrumSummary& s);
double roughness_proxy(const SpectrumSummary& s);
double hardness_proxy(const Waveform& w);

/// Seven raw descriptors of a 16 kHz sound. Throws SilentInput below -60 dBFS peak.
TimbralVector extract_timbral(const Waveform& w);

/// Per-feature min/max over at least two raw vectors.
FeatureNormalizer fit_normalizer(const std::vector<TimbralVector>& raw);
TimbralVector normalize(const FeatureNormalizer& n, const TimbralVector& raw);
TimbralVector denormalize(const FeatureNormalizer& n, const TimbralVector& normalized);

nlohmann::ordered_json to_json(const FeatureNormalizer& n);
FeatureNormalizer normalizer_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const TimbralVector& v);
// Requires every feature name; throws InvalidArgument naming the first bad field.
TimbralVector timbral_from_json(const nlohmann::json& j, bool normalized);

}  // namespace psynth
