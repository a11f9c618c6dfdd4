#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "psynth/audio.hpp"
#include "psynth/checkpoint.hpp"
#include "psynth/features.hpp"

namespace psynth {

inline constexpr double kMaxAttackMs = 1000.0;
inline constexpr double kMaxDecayMs = 10000.0;

struct EnvelopeSpec {
  enum class Kind { AttackDecay, Raw };
  Kind kind = Kind::AttackDecay;
  double attack_ms = 5.0;
  double decay_ms = 50.0;
  double amplitude = 1.0;
  std::vector<double> samples;  // Raw only
};

struct SynthesisRequest {
  TimbralVector features;  // normalized
  EnvelopeSpec envelope;
};

// A rejected field and the reason, e.g. {"brightness", "must lie in [0, 1]"}.
struct FieldError {
  std::string field;
  std::string message;
};

template <typename T>
struct Parsed {
  std::optional<T> value;
  FieldError error;  // meaningful when value is empty
  explicit operator bool() const noexcept { return value.has_value(); }
};

// {"hardness": v, ..., "sharpness": v}: all seven present, finite, in [0, 1].
Parsed<TimbralVector> parse_features(const nlohmann::json& j);
// {"kind": "ad", "attack_ms", "decay_ms", "amplitude"} or {"kind": "raw", "samples": [16000 values in [0, 1]]}.
Parsed<EnvelopeSpec> parse_envelope(const nlohmann::json& j, std::size_t length = kSoundLength);
// {"features": {...}, "envelope": {...}}; nested fields are reported as "envelope.decay_ms".
Parsed<SynthesisRequest> parse_synthesis_request(const nlohmann::json& j);

nlohmann::ordered_json to_json(const EnvelopeSpec& e);

Envelope build_envelope(const EnvelopeSpec& spec, std::size_t length = kSoundLength);

/// Forward pass of the checkpoint for one request; deterministic.
Waveform synthesize(const Checkpoint& ckpt, const SynthesisRequest& req);

}  // namespace psynth
