#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "psynth/coherence.hpp"
#include "psynth/error.hpp"
#include "psynth/model.hpp"

namespace psynth {
namespace {

constexpr double kSilencePeak = 1e-3;

double decay_ms(const Envelope& e) {
  if (e.values.empty()) return 30.0;
  const auto peak_it = std::max_element(e.values.begin(), e.values.end());
  const double target = *peak_it * std::exp(-1.0);
  auto it = peak_it;
  while (it != e.values.end() && *it > target) ++it;
  const double ms = 1000.0 * static_cast<double>(it - peak_it) / e.sample_rate;
  return std::clamp(ms, 30.0, 500.0);
}

}  // namespace

void SweepLevels::validate() const {
  if (!(0.0 <= low && low < mid && mid < high && high <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("sweep levels must satisfy 0 <= low < mid < high <= 1, got "
                                                        "({}, {}, {})",
                                                        low, mid, high));
  }
}

ModelBackend::ModelBackend(std::shared_ptr<const Checkpoint> ckpt) : ckpt_(std::move(ckpt)) {
  if (!ckpt_) throw Error(ErrorCode::InvalidArgument, "model backend needs a checkpoint");
}

Waveform ModelBackend::synthesize(const Envelope& e, const TimbralVector& fs) const {
  return forward(ckpt_->params, ckpt_->config, make_conditioning(e, fs, ckpt_->config));
}

Waveform OracleBackend::synthesize(const Envelope& e, const TimbralVector& fs) const {
  OracleParams p;
  const double b = std::clamp(fs[Feature::Brightness], 0.0, 1.0);
  if (normalizer_ && !normalizer_->degenerate[static_cast<std::size_t>(Feature::Brightness)]) {
    TimbralVector level;
    level.normalized = true;
    level[Feature::Brightness] = b;
    const double raw = std::clamp(denormalize(*normalizer_, level)[Feature::Brightness], 0.01, 0.99);
    p.f0 = std::clamp(0.5 * 1500.0 * raw / (1.0 - raw), 40.0, 4000.0);
  } else {
    p.f0 = 40.0 * std::pow(50.0, b);
  }
  p.pitch_sweep_depth = 0.5;
  p.amp_decay_ms = decay_ms(e);
  p.noise_decay_ms = p.amp_decay_ms;
  p.noise_mix = std::clamp(fs[Feature::Sharpness], 0.0, 1.0);
  p.click_level = std::clamp(fs[Feature::Hardness], 0.0, 1.0);
  p.seed = 1;
  return synth_oracle(p, std::max<std::size_t>(e.size(), kSoundLength), e.sample_rate);
}

std::vector<std::size_t> OracleBackend::controlled_features() const {
  return {static_cast<std::size_t>(Feature::Brightness), static_cast<std::size_t>(Feature::Sharpness)};
}

ConstantBackend::ConstantBackend() : w_(synth_oracle(OracleParams{})) {}

SweepResult sweep_one(const SynthesisBackend& backend, const FeatureNormalizer& normalizer, const TrainingRecord& record,
                      std::size_t feature, const SweepLevels& levels) {
  levels.validate();
  if (feature >= kFeatureCount) throw Error(ErrorCode::InvalidArgument, "feature index out of range");
  auto measure = [&](double level) {
    TimbralVector fs = record.fs;
    fs.normalized = true;
    fs[feature] = level;
    const Waveform y = backend.synthesize(record.e, fs);
    if (!(peak_abs(y) >= kSilencePeak)) {
      throw Error(ErrorCode::SilentOutput,
                  fmt::format("record '{}' {}={} produced peak {:.3g}", record.id, kFeatureNames[feature], level,
                              peak_abs(y)));
    }
    return normalize(normalizer, extract_timbral(y))[feature];
  };
  return {measure(levels.low), measure(levels.mid), measure(levels.high)};
}

OrderingTests score(double low, double mid, double high) {
  if (!std::isfinite(low) || !std::isfinite(mid) || !std::isfinite(high)) {
    throw Error(ErrorCode::InvalidArgument, "ordering tests need finite values");
  }
  return {high > low, high > mid, mid > low};
}

CoherenceReport evaluate(const SynthesisBackend& backend, const FeatureNormalizer& normalizer,
                         const std::vector<const TrainingRecord*>& records, const SweepLevels& levels,
                         std::vector<std::size_t> features) {
  levels.validate();
  if (records.empty()) throw Error(ErrorCode::InsufficientData, "coherence evaluation needs at least one record");
  if (features.empty()) {
    for (std::size_t i = 0; i < kFeatureCount; ++i) features.push_back(i);
  }
  for (auto f : features) {
    if (f >= kFeatureCount) throw Error(ErrorCode::InvalidArgument, "feature index out of range");
  }

  CoherenceReport report;
  report.backend = backend.name();
  report.levels = levels;
  report.features = features;
  report.controlled = backend.controlled_features();
  report.pairs.resize(records.size() * features.size());

  const auto n_pairs = static_cast<std::ptrdiff_t>(report.pairs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < n_pairs; ++k) {
    const auto& rec = *records[static_cast<std::size_t>(k) / features.size()];
    const std::size_t f = features[static_cast<std::size_t>(k) % features.size()];
    PairOutcome& out = report.pairs[static_cast<std::size_t>(k)];
    out.record = rec.id;
    out.feature = f;
    try {
      const SweepResult m = sweep_one(backend, normalizer, rec, f, levels);
      out.tests = score(m.low, m.mid, m.high);
      out.values = m;
    } catch (const Error& e) {
      out.error = e.what();
      spdlog::warn("coherence: record '{}' feature {}: {}", rec.id, kFeatureNames[f], e.what());
    }
  }

  report.per_feature.resize(features.size());
  for (std::size_t k = 0; k < report.pairs.size(); ++k) {
    const auto& p = report.pairs[k];
    if (p.tests.e2 && p.tests.e3 && !p.tests.e1) {
      throw Error(ErrorCode::InvalidArgument, "ordering tests violate transitivity for record '" + p.record + "'");
    }
    for (FeatureScore* s : {&report.per_feature[k % features.size()], &report.aggregate}) {
      ++s->evaluated;
      s->e1 += p.tests.e1;
      s->e2 += p.tests.e2;
      s->e3 += p.tests.e3;
      s->failed += !p.values.has_value();
    }
  }
  report.metadata["records"] = records.size();
  return report;
}

namespace {

nlohmann::ordered_json score_json(const FeatureScore& s) {
  return {{"evaluated", s.evaluated},
          {"failed", s.failed},
          {"passes", {{"E1", s.e1}, {"E2", s.e2}, {"E3", s.e3}}},
          {"E1", s.accuracy(s.e1)},
          {"E2", s.accuracy(s.e2)},
          {"E3", s.accuracy(s.e3)}};
}

}  // namespace

nlohmann::ordered_json to_json(const CoherenceReport& r) {
  nlohmann::ordered_json j;
  j["version"] = "coherence-v1";
  j["backend"] = r.backend;
  j["levels"] = {{"low", r.levels.low}, {"mid", r.levels.mid}, {"high", r.levels.high}};
  auto controlled = nlohmann::ordered_json::array();
  for (auto f : r.controlled) controlled.push_back(kFeatureNames[f]);
  j["controlled_features"] = controlled;
  j["metadata"] = r.metadata;
  auto features = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < r.features.size(); ++i) {
    features[std::string(kFeatureNames[r.features[i]])] = score_json(r.per_feature[i]);
  }
  j["features"] = features;
  j["aggregate"] = score_json(r.aggregate);
  auto pairs = nlohmann::ordered_json::array();
  for (const auto& p : r.pairs) {
    nlohmann::ordered_json pj = {{"record", p.record}, {"feature", kFeatureNames[p.feature]}};
    if (p.values) {
      pj["low"] = p.values->low;
      pj["mid"] = p.values->mid;
      pj["high"] = p.values->high;
    } else {
      pj["error"] = p.error;
    }
    pj["E1"] = p.tests.e1;
    pj["E2"] = p.tests.e2;
    pj["E3"] = p.tests.e3;
    pairs.push_back(pj);
  }
  j["pairs"] = pairs;
  return j;
}

std::string format_table(const CoherenceReport& r) {
  std::ostringstream os;
  os << fmt::format("backend: {}   levels: low {} / mid {} / high {}\n", r.backend, r.levels.low, r.levels.mid,
                    r.levels.high);
  os << fmt::format("{:<12} {:>6} {:>6} {:>6} {:>7} {:>7}\n", "feature", "E1", "E2", "E3", "pairs", "failed");
  auto row = [&os](std::string_view name, const FeatureScore& s) {
    os << fmt::format("{:<12} {:>6.3f} {:>6.3f} {:>6.3f} {:>7} {:>7}\n", name, s.accuracy(s.e1), s.accuracy(s.e2),
                      s.accuracy(s.e3), s.evaluated, s.failed);
  };
  for (std::size_t i = 0; i < r.features.size(); ++i) {
    const bool ctl = std::find(r.controlled.begin(), r.controlled.end(), r.features[i]) != r.controlled.end();
    row(std::string(kFeatureNames[r.features[i]]) + (ctl ? "*" : ""), r.per_feature[i]);
  }
  row("all", r.aggregate);
  if (!r.controlled.empty()) os << "* controlled by the backend\n";
  return os.str();
}

}  // namespace psynth
