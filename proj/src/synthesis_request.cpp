#include <cmath>

#include <fmt/format.h>

#include "psynth/error.hpp"
#include "psynth/model.hpp"
#include "psynth/synthesis_request.hpp"

namespace psynth {
namespace {

template <typename T>
Parsed<T> reject(std::string field, std::string message) {
  Parsed<T> p;
  p.error = {std::move(field), std::move(message)};
  return p;
}

std::optional<double> number(const nlohmann::json& j) {
  if (!j.is_number()) return std::nullopt;
  const double v = j.get<double>();
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

Parsed<TimbralVector> parse_features(const nlohmann::json& j) {
  if (!j.is_object()) return reject<TimbralVector>("features", "must be an object of seven named values");
  for (const auto& [key, _] : j.items()) {
    if (feature_index(key) >= kFeatureCount) return reject<TimbralVector>(key, "is not a timbral feature");
  }
  TimbralVector v;
  v.normalized = true;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const std::string name(kFeatureNames[i]);
    if (!j.contains(name)) return reject<TimbralVector>(name, "is missing");
    const auto x = number(j.at(name));
    if (!x) return reject<TimbralVector>(name, "must be a finite number");
    if (*x < 0.0 || *x > 1.0) return reject<TimbralVector>(name, fmt::format("must lie in [0, 1], got {}", *x));
    v[i] = *x;
  }
  Parsed<TimbralVector> p;
  p.value = v;
  return p;
}

Parsed<EnvelopeSpec> parse_envelope(const nlohmann::json& j, std::size_t length) {
  if (!j.is_object()) return reject<EnvelopeSpec>("envelope", "must be an object");
  if (!j.contains("kind") || !j.at("kind").is_string()) return reject<EnvelopeSpec>("kind", "must be \"ad\" or \"raw\"");
  const auto kind = j.at("kind").get<std::string>();
  EnvelopeSpec e;
  if (kind == "ad") {
    for (const auto& [key, _] : j.items()) {
      if (key != "kind" && key != "attack_ms" && key != "decay_ms" && key != "amplitude") {
        return reject<EnvelopeSpec>(key, "is not an attack/decay envelope field");
      }
    }
    struct Bound {
      const char* name;
      double* target;
      double lo;
      double hi;
      bool lo_open;
    };
    const Bound bounds[] = {{"attack_ms", &e.attack_ms, 0.0, kMaxAttackMs, false},
                            {"decay_ms", &e.decay_ms, 0.0, kMaxDecayMs, true},
                            {"amplitude", &e.amplitude, 0.0, 1.0, true}};
    for (const auto& b : bounds) {
      if (!j.contains(b.name)) return reject<EnvelopeSpec>(b.name, "is missing");
      const auto x = number(j.at(b.name));
      if (!x) return reject<EnvelopeSpec>(b.name, "must be a finite number");
      const bool low_ok = b.lo_open ? *x > b.lo : *x >= b.lo;
      if (!low_ok || *x > b.hi) {
        return reject<EnvelopeSpec>(b.name, fmt::format("must lie in {}{}, {}], got {}", b.lo_open ? "(" : "[", b.lo,
                                                        b.hi, *x));
      }
      *b.target = *x;
    }
  } else if (kind == "raw") {
    e.kind = EnvelopeSpec::Kind::Raw;
    for (const auto& [key, _] : j.items()) {
      if (key != "kind" && key != "samples") return reject<EnvelopeSpec>(key, "is not a raw envelope field");
    }
    if (!j.contains("samples") || !j.at("samples").is_array()) {
      return reject<EnvelopeSpec>("samples", "must be an array");
    }
    const auto& arr = j.at("samples");
    if (arr.size() != length) {
      return reject<EnvelopeSpec>("samples", fmt::format("must hold exactly {} values, got {}", length, arr.size()));
    }
    e.samples.reserve(length);
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto x = number(arr[i]);
      if (!x || *x < 0.0 || *x > 1.0) {
        return reject<EnvelopeSpec>("samples", fmt::format("value {} must be a number in [0, 1]", i));
      }
      e.samples.push_back(*x);
    }
  } else {
    return reject<EnvelopeSpec>("kind", "must be \"ad\" or \"raw\", got \"" + kind + "\"");
  }
  Parsed<EnvelopeSpec> p;
  p.value = std::move(e);
  return p;
}

Parsed<SynthesisRequest> parse_synthesis_request(const nlohmann::json& j) {
  if (!j.is_object()) return reject<SynthesisRequest>("body", "must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "features" && key != "envelope") return reject<SynthesisRequest>(key, "is not a request field");
  }
  if (!j.contains("features")) return reject<SynthesisRequest>("features", "is missing");
  if (!j.contains("envelope")) return reject<SynthesisRequest>("envelope", "is missing");
  auto fs = parse_features(j.at("features"));
  if (!fs) return reject<SynthesisRequest>(fs.error.field, fs.error.message);
  auto env = parse_envelope(j.at("envelope"));
  if (!env) {
    const std::string field = env.error.field == "envelope" ? "envelope" : "envelope." + env.error.field;
    return reject<SynthesisRequest>(field, env.error.message);
  }
  Parsed<SynthesisRequest> p;
  p.value = SynthesisRequest{*fs.value, std::move(*env.value)};
  return p;
}

nlohmann::ordered_json to_json(const EnvelopeSpec& e) {
  if (e.kind == EnvelopeSpec::Kind::Raw) return {{"kind", "raw"}, {"samples", e.samples}};
  return {{"kind", "ad"}, {"attack_ms", e.attack_ms}, {"decay_ms", e.decay_ms}, {"amplitude", e.amplitude}};
}

Envelope build_envelope(const EnvelopeSpec& spec, std::size_t length) {
  if (spec.kind == EnvelopeSpec::Kind::Raw) {
    if (spec.samples.size() != length) throw Error(ErrorCode::InvalidArgument, "raw envelope length mismatch");
    Envelope e;
    e.values = spec.samples;
    return e;
  }
  return parametric_envelope(spec.attack_ms, spec.decay_ms, spec.amplitude, length);
}

Waveform synthesize(const Checkpoint& ckpt, const SynthesisRequest& req) {
  const Envelope e = build_envelope(req.envelope, ckpt.config.output_length);
  return forward(ckpt.params, ckpt.config, make_conditioning(e, req.features, ckpt.config));
}

}  // namespace psynth
