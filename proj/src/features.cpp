#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include "psynth/error.hpp"
#include "psynth/features.hpp"
#include "psynth/fft.hpp"

namespace psynth {
namespace {

constexpr double kSilencePeak = 1e-3;  // -60 dBFS
constexpr double kCentroidKnee = 1500.0;
constexpr std::size_t kOnsetSamples = 320;  // 20 ms at 16 kHz
constexpr std::size_t kRoughnessPeaks = 20;

// Zwicker critical-band edges in Hz; 24 bands.
constexpr std::array<double, 25> kBarkEdges = {0,    100,  200,  300,  400,  510,  630,  770,  920,
                                               1080, 1270, 1480, 1720, 2000, 2320, 2700, 3150, 3700,
                                               4400, 5300, 6400, 7700, 9500, 12000, 15500};

std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

double band_sum(const std::vector<double>& spec, double bin_hz, double lo, double hi) {
  double acc = 0.0;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double f = k * bin_hz;
    if (f >= lo && f <= hi) acc += spec[k];
  }
  return acc;
}

double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

double map_centroid(double c) { return c / (c + kCentroidKnee); }

double power_centroid(const std::vector<double>& power, double bin_hz) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < power.size(); ++k) {
    num += k * bin_hz * power[k];
    den += power[k];
  }
  return safe_ratio(num, den);
}

void require_audible(const Waveform& w) {
  if (w.empty()) throw Error(ErrorCode::SilentInput, "empty waveform");
  if (peak_abs(w) < kSilencePeak) throw Error(ErrorCode::SilentInput, "waveform peak below -60 dBFS");
}

}  // namespace

std::size_t feature_index(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (kFeatureNames[i] == name) return i;
  }
  return kFeatureCount;
}

Envelope envelope_follow(const Waveform& w, double attack_ms, double release_ms) {
  if (!(attack_ms > 0.0) || !(release_ms > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "attack and release must be positive");
  }
  const double sr = w.sample_rate;
  const double a_att = std::exp(-1.0 / (attack_ms * 1e-3 * sr));
  const double a_rel = std::exp(-1.0 / (release_ms * 1e-3 * sr));

  Envelope e;
  e.sample_rate = w.sample_rate;
  e.values.resize(w.size());
  double state = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) {
    const double x = std::abs(w.samples[n]);
    const double a = x >= state ? a_att : a_rel;
    state = (1.0 - a) * x + a * state;
    e.values[n] = std::clamp(state, 0.0, 1.0);
  }
  return e;
}

Envelope parametric_envelope(double attack_ms, double decay_ms, double amplitude, std::size_t n,
                             int sample_rate) {
  if (!(attack_ms >= 0.0) || !(decay_ms > 0.0) || !(amplitude > 0.0 && amplitude <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "parametric_envelope: need attack >= 0, decay > 0, amplitude in (0, 1]");
  }
  const auto attack = static_cast<std::size_t>(std::llround(attack_ms * 1e-3 * sample_rate));
  const double decay_samples = decay_ms * 1e-3 * sample_rate;
  Envelope e;
  e.sample_rate = sample_rate;
  e.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < attack) {
      e.values[i] = amplitude * static_cast<double>(i) / static_cast<double>(attack);
    } else {
      e.values[i] = amplitude * std::exp(-static_cast<double>(i - attack) / decay_samples);
    }
  }
  return e;
}

SpectrumSummary summarize_spectrum(const Waveform& w, std::size_t frame, std::size_t hop) {
  const RealFft fft(frame);
  const auto window = hann(frame);
  const std::size_t frames = w.size() < frame ? 1 : (w.size() - frame) / hop + 1;

  SpectrumSummary s;
  s.bin_hz = static_cast<double>(w.sample_rate) / static_cast<double>(frame);
  s.mean_magnitude.assign(fft.bins(), 0.0);
  s.mean_power.assign(fft.bins(), 0.0);
  s.frame_power.assign(frames, std::vector<double>(fft.bins(), 0.0));

  std::vector<double> buf(frame);
  std::vector<std::complex<double>> spec(fft.bins());
  for (std::size_t m = 0; m < frames; ++m) {
    for (std::size_t i = 0; i < frame; ++i) {
      const std::size_t idx = m * hop + i;
      buf[i] = idx < w.size() ? w.samples[idx] * window[i] : 0.0;
    }
    fft.forward(buf, spec);
    for (std::size_t k = 0; k < spec.size(); ++k) {
      const double p = std::norm(spec[k]);
      s.frame_power[m][k] = p;
      s.mean_magnitude[k] += std::sqrt(p);
      s.mean_power[k] += p;
    }
  }
  for (std::size_t k = 0; k < spec.size(); ++k) {
    s.mean_magnitude[k] /= static_cast<double>(frames);
    s.mean_power[k] /= static_cast<double>(frames);
  }
  return s;
}

double spectral_centroid(const Waveform& w) {
  if (w.empty()) throw Error(ErrorCode::InvalidArgument, "spectral_centroid of empty waveform");
  const auto s = summarize_spectrum(w);
  return power_centroid(s.mean_power, s.bin_hz);
}

double brightness_proxy(const SpectrumSummary& s) {
  return map_centroid(power_centroid(s.mean_power, s.bin_hz));
}

double depth_proxy(const SpectrumSummary& s) {
  const double total = std::accumulate(s.mean_power.begin(), s.mean_power.end(), 0.0);
  return safe_ratio(band_sum(s.mean_power, s.bin_hz, 20.0, 200.0), total);
}

double boominess_proxy(const SpectrumSummary& s, std::size_t frame) {
  const double total = std::accumulate(s.mean_power.begin(), s.mean_power.end(), 0.0);
  const double ratio = safe_ratio(band_sum(s.mean_power, s.bin_hz, 20.0, 120.0), total);

  // Band power scaled so a full-scale sine reads 0 dBFS.
  const auto window = hann(frame);
  double wss = 0.0;
  for (double v : window) wss += v * v;
  const double scale = 4.0 / (static_cast<double>(frame) * wss);
  const double floor = std::pow(10.0, -30.0 / 10.0);
  std::size_t sustained = 0;
  for (const auto& fp : s.frame_power) {
    if (band_sum(fp, s.bin_hz, 20.0, 120.0) * scale > floor) ++sustained;
  }
  const double fraction = s.frame_power.empty() ? 0.0 : static_cast<double>(sustained) / s.frame_power.size();
  return ratio * fraction;
}

double warmth_proxy(const SpectrumSummary& s) {
  return safe_ratio(band_sum(s.mean_power, s.bin_hz, 100.0, 350.0), band_sum(s.mean_power, s.bin_hz, 50.0, 2000.0));
}

double sharpness_proxy(const SpectrumSummary& s) {
  std::array<double, kBarkEdges.size() - 1> band{};
  for (std::size_t k = 0; k < s.mean_power.size(); ++k) {
    const double f = k * s.bin_hz;
    for (std::size_t z = 0; z < band.size(); ++z) {
      if (f >= kBarkEdges[z] && f < kBarkEdges[z + 1]) {
        band[z] += s.mean_power[k];
        break;
      }
    }
  }
  const double total = std::accumulate(band.begin(), band.end(), 0.0);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < band.size(); ++i) {
    if (band[i] <= 1e-12 * total) continue;
    const double z = static_cast<double>(i + 1);
    const double loudness = std::pow(band[i], 0.23);
    const double weight = z <= 14.0 ? 1.0 : std::exp(0.17 * (z - 14.0));
    num += loudness * weight * z;
    den += loudness;
  }
  return 0.11 * safe_ratio(num, den);
}

double roughness_proxy(const SpectrumSummary& s) {
  const auto& mag = s.mean_magnitude;
  const double peak = mag.empty() ? 0.0 : *std::max_element(mag.begin(), mag.end());
  if (peak <= 0.0) return 0.0;

  struct Partial {
    double freq;
    double amp;
  };
  std::vector<Partial> peaks;
  for (std::size_t k = 1; k + 1 < mag.size(); ++k) {
    if (mag[k] > mag[k - 1] && mag[k] >= mag[k + 1] && mag[k] >= 1e-3 * peak) {
      peaks.push_back({k * s.bin_hz, mag[k] / peak});
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(), [](const Partial& a, const Partial& b) { return a.amp > b.amp; });
  if (peaks.size() > kRoughnessPeaks) peaks.resize(kRoughnessPeaks);

  double r = 0.0;
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    for (std::size_t j = i + 1; j < peaks.size(); ++j) {
      const double a_min = std::min(peaks[i].amp, peaks[j].amp);
      const double a_sum = peaks[i].amp + peaks[j].amp;
      const double f_min = std::min(peaks[i].freq, peaks[j].freq);
      const double df = std::abs(peaks[i].freq - peaks[j].freq);
      const double sc = 0.24 / (0.0207 * f_min + 18.96);
      const double x = std::pow(peaks[i].amp * peaks[j].amp, 0.1);
      const double y = 0.5 * std::pow(2.0 * a_min / a_sum, 3.11);
      const double z = std::exp(-3.5 * sc * df) - std::exp(-5.75 * sc * df);
      r += x * y * z;
    }
  }
  return r;
}

double hardness_proxy(const Waveform& w) {
  const std::size_t onset = std::min(kOnsetSamples, w.size());
  Waveform head;
  head.sample_rate = w.sample_rate;
  head.samples.assign(w.samples.begin(), w.samples.begin() + static_cast<std::ptrdiff_t>(onset));

  const auto env = envelope_follow(head);
  double slope = 0.0;
  double prev = 0.0;
  for (double v : env.values) {
    slope = std::max(slope, v - prev);
    prev = v;
  }
  slope *= w.sample_rate;

  // Hann-windowed onset segment, zero-padded to one analysis frame.
  constexpr std::size_t kFrame = 1024;
  const auto window = hann(onset);
  std::vector<double> buf(kFrame, 0.0);
  for (std::size_t i = 0; i < onset; ++i) buf[i] = head.samples[i] * window[i];
  const RealFft fft(kFrame);
  std::vector<std::complex<double>> spec(fft.bins());
  fft.forward(buf, spec);
  std::vector<double> power(spec.size());
  for (std::size_t k = 0; k < spec.size(); ++k) power[k] = std::norm(spec[k]);
  const double centroid = power_centroid(power, static_cast<double>(w.sample_rate) / kFrame);
  return slope * map_centroid(centroid);
}

TimbralVector extract_timbral(const Waveform& w) {
  if (w.sample_rate != kSampleRate) {
    throw Error(ErrorCode::InvalidArgument, "extract_timbral expects 16 kHz audio");
  }
  require_audible(w);
  const auto s = summarize_spectrum(w);
  TimbralVector v;
  v[Feature::Hardness] = hardness_proxy(w);
  v[Feature::Depth] = depth_proxy(s);
  v[Feature::Brightness] = brightness_proxy(s);
  v[Feature::Roughness] = roughness_proxy(summarize_spectrum(w, kRoughnessFrame, kRoughnessFrame));
  v[Feature::Boominess] = boominess_proxy(s);
  v[Feature::Warmth] = warmth_proxy(s);
  v[Feature::Sharpness] = sharpness_proxy(s);
  return v;
}

FeatureNormalizer fit_normalizer(const std::vector<TimbralVector>& raw) {
  if (raw.size() < 2) throw Error(ErrorCode::InsufficientData, "need at least two vectors to fit a normalizer");
  FeatureNormalizer n;
  n.min.fill(std::numeric_limits<double>::infinity());
  n.max.fill(-std::numeric_limits<double>::infinity());
  for (const auto& v : raw) {
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      if (!std::isfinite(v[i])) throw Error(ErrorCode::InvalidArgument, "non-finite feature value");
      n.min[i] = std::min(n.min[i], v[i]);
      n.max[i] = std::max(n.max[i], v[i]);
    }
  }
  for (std::size_t i = 0; i < kFeatureCount; ++i) n.degenerate[i] = n.max[i] == n.min[i];
  return n;
}

TimbralVector normalize(const FeatureNormalizer& n, const TimbralVector& raw) {
  TimbralVector out;
  out.normalized = true;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    out[i] = n.degenerate[i] ? 0.5 : std::clamp((raw[i] - n.min[i]) / (n.max[i] - n.min[i]), 0.0, 1.0);
  }
  return out;
}

TimbralVector denormalize(const FeatureNormalizer& n, const TimbralVector& normalized) {
  TimbralVector out;
  out.normalized = false;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    out[i] = n.degenerate[i] ? n.min[i] : n.min[i] + normalized[i] * (n.max[i] - n.min[i]);
  }
  return out;
}

nlohmann::ordered_json to_json(const FeatureNormalizer& n) {
  nlohmann::ordered_json j;
  j["version"] = "normalizer-v1";
  nlohmann::ordered_json features;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    features[std::string(kFeatureNames[i])] = {{"min", n.min[i]}, {"max", n.max[i]}, {"degenerate", n.degenerate[i]}};
  }
  j["features"] = std::move(features);
  return j;
}

FeatureNormalizer normalizer_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("version", "") != "normalizer-v1") {
    throw Error(ErrorCode::VersionMismatch, "expected normalizer-v1");
  }
  FeatureNormalizer n;
  const auto& features = j.at("features");
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const auto& f = features.at(std::string(kFeatureNames[i]));
    n.min[i] = f.at("min").get<double>();
    n.max[i] = f.at("max").get<double>();
    n.degenerate[i] = f.at("degenerate").get<bool>();
    if (n.min[i] > n.max[i]) throw Error(ErrorCode::InvalidArgument, "normalizer min > max");
  }
  return n;
}

nlohmann::ordered_json to_json(const TimbralVector& v) {
  nlohmann::ordered_json j;
  for (std::size_t i = 0; i < kFeatureCount; ++i) j[std::string(kFeatureNames[i])] = v[i];
  return j;
}

TimbralVector timbral_from_json(const nlohmann::json& j, bool normalized) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "features: expected an object");
  TimbralVector v;
  v.normalized = normalized;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const std::string name(kFeatureNames[i]);
    const auto it = j.find(name);
    if (it == j.end() || !it->is_number()) throw Error(ErrorCode::InvalidArgument, name + ": missing or not a number");
    const double x = it->get<double>();
    if (!std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, name + ": not finite");
    if (normalized && (x < 0.0 || x > 1.0)) throw Error(ErrorCode::InvalidArgument, name + ": outside [0, 1]");
    v[i] = x;
  }
  return v;
}

}  // namespace psynth
