#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "psynth/checkpoint.hpp"
#include "psynth/dataset.hpp"
#include "psynth/features.hpp"

namespace psynth {

struct SweepLevels {
  double low = 0.2;
  double mid = 0.5;
  double high = 0.8;

  // Requires 0 <= low < mid < high <= 1; throws InvalidArgument.
  void validate() const;
};

/// Anything that turns an envelope and normalized features into a waveform.
class SynthesisBackend {
 public:
  virtual ~SynthesisBackend() = default;
  virtual std::string name() const = 0;
  virtual Waveform synthesize(const Envelope& e, const TimbralVector& fs) const = 0;
  // Features the backend responds to by construction; empty when unknown.
  virtual std::vector<std::size_t> controlled_features() const { return {}; }
};

class ModelBackend final : public SynthesisBackend {
 public:
  explicit ModelBackend(std::shared_ptr<const Checkpoint> ckpt);
  std::string name() const override { return "model"; }
  Waveform synthesize(const Envelope& e, const TimbralVector& fs) const override;

 private:
  std::shared_ptr<const Checkpoint> ckpt_;
};

// Oracle drum synthesizer driven from the features. Brightness sets f0 to half
// the centroid of the denormalized brightness target (the pitch sweep and noise
// raise the measured centroid above f0; 40 * 50^v Hz without a normalizer),
// sharpness sets noise_mix = v, hardness sets click_level = v.
// Decay times follow the envelope (time from its peak down to peak / e).
// Only brightness and sharpness respond monotonically.
class OracleBackend final : public SynthesisBackend {
 public:
  OracleBackend() = default;
  explicit OracleBackend(const FeatureNormalizer& normalizer) : normalizer_(normalizer) {}
  std::string name() const override { return "oracle"; }
  Waveform synthesize(const Envelope& e, const TimbralVector& fs) const override;
  std::vector<std::size_t> controlled_features() const override;

 private:
  std::optional<FeatureNormalizer> normalizer_;
};

// Ignores its inputs entirely.
class ConstantBackend final : public SynthesisBackend {
 public:
  ConstantBackend();
  explicit ConstantBackend(Waveform w) : w_(std::move(w)) {}
  std::string name() const override { return "constant"; }
  Waveform synthesize(const Envelope&, const TimbralVector&) const override { return w_; }

 private:
  Waveform w_;
};

struct SweepResult {
  double low = 0.0;
  double mid = 0.0;
  double high = 0.0;
};

/// Sets feature `feature` of the record's normalized vector to each level,
/// synthesizes, re-extracts and normalizes. Throws SilentOutput.
SweepResult sweep_one(const SynthesisBackend& backend, const FeatureNormalizer& normalizer, const TrainingRecord& record,
                      std::size_t feature, const SweepLevels& levels = {});

struct OrderingTests {
  bool e1 = false;  // high > low
  bool e2 = false;  // high > mid
  bool e3 = false;  // mid > low
};

// Strict comparisons; throws InvalidArgument on non-finite input.
OrderingTests score(double low, double mid, double high);

struct PairOutcome {
  std::string record;
  std::size_t feature = 0;
  std::optional<SweepResult> values;  // empty when synthesis or extraction failed
  std::string error;
  OrderingTests tests;
};

struct FeatureScore {
  std::size_t evaluated = 0;
  std::size_t e1 = 0;
  std::size_t e2 = 0;
  std::size_t e3 = 0;
  std::size_t failed = 0;  // pairs with silent or unusable output

  double accuracy(std::size_t passes) const {
    return evaluated == 0 ? 0.0 : static_cast<double>(passes) / static_cast<double>(evaluated);
  }
};

struct CoherenceReport {
  std::string backend;
  SweepLevels levels;
  std::vector<std::size_t> features;  // evaluated features, in report order
  std::vector<std::size_t> controlled;
  std::vector<FeatureScore> per_feature;  // parallel to `features`
  FeatureScore aggregate;
  std::vector<PairOutcome> pairs;  // record-major
  nlohmann::json metadata = nlohmann::json::object();
};

/// Every (record, feature) pair, in record-major order. Per-pair failures are
/// logged and scored as failing all three tests.
CoherenceReport evaluate(const SynthesisBackend& backend, const FeatureNormalizer& normalizer,
                         const std::vector<const TrainingRecord*>& records, const SweepLevels& levels = {},
                         std::vector<std::size_t> features = {});

nlohmann::ordered_json to_json(const CoherenceReport& r);
std::string format_table(const CoherenceReport& r);

}  // namespace psynth
