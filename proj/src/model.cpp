#include <algorithm>
#include <cmath>
#include <random>

#include "psynth/error.hpp"
#include "psynth/model.hpp"

namespace psynth {

ModelConfig ModelConfig::paper() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny_shapes() {
  ModelConfig c;
  c.encoder_layers = 3;
  c.base_filters = 4;
  c.internal_length = 64;
  c.output_length = 60;
  return c;
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.encoder_layers = 9;
  c.base_filters = 16;
  c.internal_length = 16384;
  return c;
}

ModelConfig ModelConfig::smoke() {
  ModelConfig c;
  c.encoder_layers = 4;
  c.base_filters = 8;
  c.internal_length = 16384;
  return c;
}

ModelConfig ModelConfig::preset(std::string_view name) {
  if (name == "paper") return paper();
  if (name == "desk") return desk();
  if (name == "smoke") return smoke();
  throw Error(ErrorCode::InvalidArgument, "unknown model preset '" + std::string(name) + "' (paper, desk, smoke)");
}

std::size_t ModelConfig::channels(int layer) const noexcept {
  if (layer == 0) return input_channels();
  return static_cast<std::size_t>(base_filters) << ((layer - 1) / filters_double_every);
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (encoder_layers < 1 || encoder_layers > 30) fail("encoder_layers must lie in [1, 30]");
  if (base_filters < 1) fail("base_filters must be positive");
  if (filter_length < 1) fail("filter_length must be positive");
  if (filters_double_every < 1) fail("filters_double_every must be positive");
  if (feature_count != static_cast<int>(kFeatureCount)) fail("feature_count must be 7");
  if (output_length == 0) fail("output_length must be positive");
  if (internal_length < output_length) fail("internal_length must be >= output_length");
  const std::size_t step = std::size_t{1} << encoder_layers;
  if (internal_length % step != 0) fail("internal_length must be a multiple of 2^encoder_layers");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) fail("leaky_slope must lie in (0, 1)");
}

nlohmann::ordered_json to_json(const ModelConfig& c) {
  return {{"encoder_layers", c.encoder_layers},   {"base_filters", c.base_filters},
          {"filter_length", c.filter_length},     {"filters_double_every", c.filters_double_every},
          {"feature_count", c.feature_count},     {"internal_length", c.internal_length},
          {"output_length", c.output_length},     {"leaky_slope", c.leaky_slope},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.encoder_layers = j.at("encoder_layers").get<int>();
    c.base_filters = j.at("base_filters").get<int>();
    c.filter_length = j.at("filter_length").get<int>();
    c.filters_double_every = j.at("filters_double_every").get<int>();
    c.feature_count = j.at("feature_count").get<int>();
    c.internal_length = j.at("internal_length").get<std::size_t>();
    c.output_length = j.at("output_length").get<std::size_t>();
    c.leaky_slope = j.at("leaky_slope").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

Parameters layout(const ModelConfig& config) {
  config.validate();
  const int k = config.encoder_layers;
  const auto len = static_cast<std::size_t>(config.filter_length);
  std::vector<ConvShape> shapes;
  for (int l = 1; l <= k; ++l) shapes.push_back({config.channels(l - 1), config.channels(l), len, 2});
  for (int j = k; j >= 1; --j) {
    const std::size_t from_below = j == k ? config.channels(k) : config.channels(j + 1);
    shapes.push_back({from_below + config.channels(j - 1), config.channels(j), len, 1});
  }
  shapes.push_back({config.channels(1), 1, len, 1});

  Parameters p;
  std::size_t offset = 0;
  for (const auto& s : shapes) {
    LayerSpec spec{s, offset, offset + s.weight_count()};
    offset = spec.bias_offset + s.out_channels;
    p.layers.push_back(spec);
  }
  p.values.assign(offset, 0.0);
  return p;
}

std::size_t parameter_count(const ModelConfig& config) {
  config.validate();
  const int k = config.encoder_layers;
  const auto len = static_cast<std::size_t>(config.filter_length);
  std::size_t total = 0;
  for (int l = 1; l <= k; ++l) total += config.channels(l - 1) * config.channels(l) * len + config.channels(l);
  for (int j = 1; j <= k; ++j) {
    const std::size_t in = (j == k ? config.channels(k) : config.channels(j + 1)) + config.channels(j - 1);
    total += in * config.channels(j) * len + config.channels(j);
  }
  total += config.channels(1) * len + 1;
  return total;
}

Parameters build(const ModelConfig& config) {
  Parameters p = layout(config);
  std::mt19937_64 rng(config.seed);
  for (const auto& l : p.layers) {
    const double fan_in = static_cast<double>(l.shape.in_channels * l.shape.length);
    const double fan_out = static_cast<double>(l.shape.out_channels * l.shape.length);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    // Drawn at float32 precision so a freshly built model survives a checkpoint round trip unchanged.
    for (std::size_t i = 0; i < l.shape.weight_count(); ++i) {
      p.values[l.weight_offset + i] = static_cast<float>(dist(rng));
    }
  }
  return p;
}

void check_finite(const Parameters& params) {
  for (double v : params.values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteParameters, "parameter vector contains NaN or Inf");
  }
}

ShapeChain shape_chain(const ModelConfig& config) {
  config.validate();
  const int k = config.encoder_layers;
  ShapeChain s;
  for (int l = 0; l <= k; ++l) s.encoder.emplace_back(config.channels(l), config.time_at(l));
  s.decoder.resize(static_cast<std::size_t>(k) + 1);
  for (int j = k; j >= 1; --j) {
    // Upsampled input has twice the time of the level below; the skip comes from level j - 1.
    const std::size_t below = j == k ? s.encoder[static_cast<std::size_t>(k)].second
                                     : s.decoder[static_cast<std::size_t>(j) + 1].second;
    s.decoder[static_cast<std::size_t>(j)] = {config.channels(j), 2 * below};
  }
  s.output = {1, config.output_length};
  return s;
}

ConditioningInput make_conditioning(const Envelope& e, const TimbralVector& fs, const ModelConfig& config) {
  if (e.size() > config.internal_length) {
    throw Error(ErrorCode::ShapeMismatch, "envelope longer than the model's internal length");
  }
  ConditioningInput c{e, fs};
  c.e.values.resize(config.internal_length, 0.0);
  c.fs.normalized = true;
  return c;
}

Tensor input_tensor(const ConditioningInput& cond, const ModelConfig& config) {
  if (cond.e.size() != config.internal_length) {
    throw Error(ErrorCode::ShapeMismatch, "envelope has " + std::to_string(cond.e.size()) + " samples, model expects " +
                                              std::to_string(config.internal_length));
  }
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (!(cond.fs[i] >= 0.0 && cond.fs[i] <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, std::string(kFeatureNames[i]) + ": conditioning feature outside [0, 1]");
    }
  }
  Tensor x(config.input_channels(), config.internal_length);
  std::copy(cond.e.values.begin(), cond.e.values.end(), x.row(0).begin());
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    auto row = x.row(i + 1);
    std::fill(row.begin(), row.end(), cond.fs[i]);
  }
  return x;
}

Waveform forward(const Parameters& params, const ModelConfig& config, const ConditioningInput& cond,
                 ForwardCache& cache) {
  if (parameter_count(config) != params.values.size() ||
      params.layers.size() != 2 * static_cast<std::size_t>(config.encoder_layers) + 1) {
    throw Error(ErrorCode::ShapeMismatch, "parameters do not match the model config");
  }
  check_finite(params);
  const int k = config.encoder_layers;
  const auto K = static_cast<std::size_t>(k);

  cache.encoder.assign(K + 1, Tensor{});
  cache.decoder_in.assign(K + 1, Tensor{});
  cache.decoder_out.assign(K + 1, Tensor{});
  cache.encoder[0] = input_tensor(cond, config);

  for (int l = 1; l <= k; ++l) {
    const auto li = params.encoder(l);
    Tensor y = kernels::conv1d(cache.encoder[static_cast<std::size_t>(l) - 1], params.layers[li].shape,
                               params.weights(li), params.bias(li));
    kernels::leaky_relu(y, config.leaky_slope);
    cache.encoder[static_cast<std::size_t>(l)] = std::move(y);
  }

  const Tensor* below = &cache.encoder[K];
  for (int j = k; j >= 1; --j) {
    const auto J = static_cast<std::size_t>(j);
    const auto li = params.decoder(j, k);
    cache.decoder_in[J] = concat_channels(kernels::upsample2x(*below), cache.encoder[J - 1]);
    Tensor y = kernels::conv1d(cache.decoder_in[J], params.layers[li].shape, params.weights(li), params.bias(li));
    kernels::leaky_relu(y, config.leaky_slope);
    cache.decoder_out[J] = std::move(y);
    below = &cache.decoder_out[J];
  }

  const auto fl = params.final_layer();
  cache.output = kernels::conv1d(cache.decoder_out[1], params.layers[fl].shape, params.weights(fl), params.bias(fl));
  for (auto& v : cache.output.data) v = std::tanh(v);

  Waveform out;
  out.sample_rate = cond.e.sample_rate;
  out.samples.assign(cache.output.data.begin(),
                     cache.output.data.begin() + static_cast<std::ptrdiff_t>(config.output_length));
  return out;
}

Waveform forward(const Parameters& params, const ModelConfig& config, const ConditioningInput& cond) {
  ForwardCache cache;
  return forward(params, config, cond, cache);
}

void backward(const Parameters& params, const ModelConfig& config, const ForwardCache& cache,
              std::span<const double> grad_output, std::span<double> grads) {
  if (grad_output.size() != config.output_length || grads.size() != params.values.size()) {
    throw Error(ErrorCode::ShapeMismatch, "backward: gradient buffer sizes");
  }
  const int k = config.encoder_layers;
  const auto K = static_cast<std::size_t>(k);
  auto gw = [&](std::size_t l) {
    return std::span<double>(grads.data() + params.layers[l].weight_offset, params.layers[l].shape.weight_count());
  };
  auto gb = [&](std::size_t l) {
    return std::span<double>(grads.data() + params.layers[l].bias_offset, params.layers[l].shape.out_channels);
  };

  // Through tanh; the cropped tail receives no gradient.
  Tensor g(1, config.internal_length);
  for (std::size_t t = 0; t < config.output_length; ++t) {
    const double y = cache.output.data[t];
    g.data[t] = grad_output[t] * (1.0 - y * y);
  }

  const auto fl = params.final_layer();
  Tensor g_below;
  kernels::conv1d_backward(cache.decoder_out[1], params.layers[fl].shape, params.weights(fl), g, &g_below, gw(fl), gb(fl));

  // Skip-connection gradients destined for encoder activations, by level.
  std::vector<Tensor> g_skip(K + 1);
  for (int j = 1; j <= k; ++j) {
    const auto J = static_cast<std::size_t>(j);
    const auto li = params.decoder(j, k);
    kernels::leaky_relu_backward(cache.decoder_out[J], config.leaky_slope, g_below);
    Tensor g_in;
    kernels::conv1d_backward(cache.decoder_in[J], params.layers[li].shape, params.weights(li), g_below, &g_in, gw(li), gb(li));

    const std::size_t up_channels = params.layers[li].shape.in_channels - cache.encoder[J - 1].channels;
    Tensor g_up(up_channels, g_in.time);
    std::copy(g_in.data.begin(), g_in.data.begin() + static_cast<std::ptrdiff_t>(g_up.data.size()), g_up.data.begin());
    Tensor skip(cache.encoder[J - 1].channels, g_in.time);
    std::copy(g_in.data.begin() + static_cast<std::ptrdiff_t>(g_up.data.size()), g_in.data.end(), skip.data.begin());
    g_skip[J - 1] = std::move(skip);
    g_below = kernels::upsample2x_backward(g_up);
  }

  // g_below now holds the gradient w.r.t. the bottleneck (encoder level K).
  for (int l = k; l >= 1; --l) {
    const auto L = static_cast<std::size_t>(l);
    if (L < K) {
      for (std::size_t i = 0; i < g_below.data.size(); ++i) g_below.data[i] += g_skip[L].data[i];
    }
    kernels::leaky_relu_backward(cache.encoder[L], config.leaky_slope, g_below);
    const auto li = params.encoder(l);
    Tensor g_in;
    // The input tensor needs no gradient.
    kernels::conv1d_backward(cache.encoder[L - 1], params.layers[li].shape, params.weights(li), g_below,
                             l > 1 ? &g_in : nullptr, gw(li), gb(li));
    g_below = std::move(g_in);
  }
}

}  // namespace psynth
