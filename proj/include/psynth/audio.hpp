#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace psynth {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kSoundLength = 16000;
inline constexpr double kDefaultTrimDb = -60.0;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  bool operator==(const Waveform&) const = default;
};

struct AudioFileMeta {
  std::string path;
  int original_rate = 0;
  std::size_t original_length = 0;
  int channels = 1;
};

// Non-fatal conditions (clipping, truncation) are appended here when a sink is given.
using Warnings = std::vector<std::string>;

// RIFF/WAVE, PCM 16-bit or IEEE float 32-bit. Channels are averaged to mono.
std::pair<Waveform, AudioFileMeta> load_wav(const std::filesystem::path& path);
std::pair<Waveform, AudioFileMeta> decode_wav(const std::vector<std::uint8_t>& bytes,
                                              std::string source = "<memory>");

// 16-bit PCM mono at w.sample_rate. Samples outside [-1, 1] are clipped.
void write_wav(const Waveform& w, const std::filesystem::path& path, Warnings* warnings = nullptr);
std::vector<std::uint8_t> encode_wav(const Waveform& w, Warnings* warnings = nullptr);

// Value a sample takes after a 16-bit write/read cycle.
double quantize_pcm16(double sample) noexcept;

// Windowed-sinc (64 taps, Kaiser beta 8). Output length round(len * target / rate).
Waveform resample(const Waveform& w, int target_rate);

// Strips leading/trailing regions whose 64-sample RMS stays below threshold_db (dBFS).
// Throws NoSignal when nothing reaches the threshold.
Waveform trim_silence(const Waveform& w, double threshold_db = kDefaultTrimDb);

// Zero-pads at the end, or truncates the tail with a warning.
Waveform pad_to_length(const Waveform& w, std::size_t n, Warnings* warnings = nullptr);

double peak_abs(const Waveform& w) noexcept;

}  // namespace psynth
