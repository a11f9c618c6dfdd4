#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "psynth/audio.hpp"
#include "psynth/features.hpp"
#include "psynth/kernels.hpp"
#include "psynth/tensor.hpp"

namespace psynth {

struct ModelConfig {
  int encoder_layers = 15;
  int base_filters = 32;
  int filter_length = 5;
  int filters_double_every = 3;
  int feature_count = static_cast<int>(kFeatureCount);
  std::size_t internal_length = 32768;
  std::size_t output_length = kSoundLength;
  double leaky_slope = 0.2;
  std::uint64_t seed = 0;

  static ModelConfig paper();
  // K = 3, base 4, internal 64, output 60: shape tests.
  static ModelConfig tiny_shapes();
  // K = 9, base 16, internal 16384: reduced model trainable on a CPU.
  static ModelConfig desk();
  // K = 4, base 8, internal 16384: overfit smoke runs.
  static ModelConfig smoke();
  // "paper", "desk" or "smoke"; throws InvalidArgument.
  static ModelConfig preset(std::string_view name);

  std::size_t input_channels() const noexcept { return 1 + static_cast<std::size_t>(feature_count); }
  // Channels produced by encoder layer `layer` (1-indexed); layer 0 is the input.
  std::size_t channels(int layer) const noexcept;
  std::size_t time_at(int layer) const noexcept { return internal_length >> layer; }
  std::size_t bottleneck_length() const noexcept { return time_at(encoder_layers); }

  // Throws InvalidConfig.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::ordered_json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct LayerSpec {
  ConvShape shape;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

/// Flat parameter vector with per-layer views. Layer order: encoder 1..K,
/// decoder K..1, final projection.
struct Parameters {
  std::vector<LayerSpec> layers;
  std::vector<double> values;

  std::size_t encoder(int layer) const noexcept { return static_cast<std::size_t>(layer - 1); }
  std::size_t decoder(int stage, int k) const noexcept { return static_cast<std::size_t>(k + (k - stage)); }
  std::size_t final_layer() const noexcept { return layers.size() - 1; }

  std::span<const double> weights(std::size_t l) const {
    return {values.data() + layers[l].weight_offset, layers[l].shape.weight_count()};
  }
  std::span<const double> bias(std::size_t l) const {
    return {values.data() + layers[l].bias_offset, layers[l].shape.out_channels};
  }

  std::size_t size() const noexcept { return values.size(); }
  bool operator==(const Parameters& o) const { return values == o.values; }
};

// Layer geometry implied by a config; values are zero.
Parameters layout(const ModelConfig& config);

/// Glorot-uniform weights seeded from config.seed, zero biases.
Parameters build(const ModelConfig& config);

// Closed-form parameter count.
std::size_t parameter_count(const ModelConfig& config);

struct ConditioningInput {
  Envelope e;        // internal_length samples
  TimbralVector fs;  // normalized
};

// Pads (or rejects) the envelope to the config's internal length.
ConditioningInput make_conditioning(const Envelope& e, const TimbralVector& fs, const ModelConfig& config);

// Envelope channel followed by the features broadcast over time.
Tensor input_tensor(const ConditioningInput& cond, const ModelConfig& config);

// Activations kept for the backward pass.
struct ForwardCache {
  std::vector<Tensor> encoder;  // [0] = input, [l] = output of encoder layer l
  std::vector<Tensor> decoder_in;   // indexed by stage 1..K (slot 0 unused)
  std::vector<Tensor> decoder_out;  // indexed by stage 1..K
  Tensor output;                    // tanh output, full internal length
};

/// Conditioning to waveform (output_length samples, |x| < 1).
Waveform forward(const Parameters& params, const ModelConfig& config, const ConditioningInput& cond);
Waveform forward(const Parameters& params, const ModelConfig& config, const ConditioningInput& cond,
                 ForwardCache& cache);

// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output) over output_length samples.
void backward(const Parameters& params, const ModelConfig& config, const ForwardCache& cache,
              std::span<const double> grad_output, std::span<double> grads);

// Encoder/decoder activation sizes for a config (channels, time), without running a forward pass.
struct ShapeChain {
  std::vector<std::pair<std::size_t, std::size_t>> encoder;  // [0] = input
  std::vector<std::pair<std::size_t, std::size_t>> decoder;  // by stage, [0] unused
  std::pair<std::size_t, std::size_t> output;
};
ShapeChain shape_chain(const ModelConfig& config);

void check_finite(const Parameters& params);

}  // namespace psynth
