#include <doctest.h>

#include "psynth/error.hpp"
#include "psynth/model.hpp"
#include "support.hpp"

using namespace psynth;

namespace {

// Channel rule and layer inventory counted by hand from the architecture description.
std::size_t channels_oracle(const ModelConfig& c, int layer) {
  if (layer == 0) return 1 + kFeatureCount;
  return static_cast<std::size_t>(c.base_filters) << ((layer - 1) / c.filters_double_every);
}

std::size_t count_oracle(const ModelConfig& c) {
  const std::size_t L = static_cast<std::size_t>(c.filter_length);
  auto conv = [&](std::size_t in, std::size_t out) { return in * out * L + out; };
  std::size_t n = 0;
  const int K = c.encoder_layers;
  for (int l = 1; l <= K; ++l) n += conv(channels_oracle(c, l - 1), channels_oracle(c, l));
  for (int j = K; j >= 1; --j) {
    const std::size_t below = channels_oracle(c, j == K ? K : j + 1);
    n += conv(below + channels_oracle(c, j - 1), channels_oracle(c, j));
  }
  n += conv(channels_oracle(c, 1), 1);
  return n;
}

ConditioningInput random_cond(const ModelConfig& c, std::uint64_t seed) {
  Envelope e;
  e.values = test::uniform_noise(c.output_length, seed, 0.5);
  for (auto& v : e.values) v += 0.5;
  TimbralVector fs;
  std::mt19937_64 rng(seed);
  for (auto& v : fs.values) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return make_conditioning(e, fs, c);
}

double l1_diff(const Waveform& a, const Waveform& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.samples[i] - b.samples[i]);
  return s;
}

}  // namespace

TEST_CASE("full-size configuration: 512 x 1 bottleneck and 16000-sample output") {
  const auto c = ModelConfig::paper();
  CHECK(c.encoder_layers == 15);
  CHECK(c.base_filters == 32);
  CHECK(c.filter_length == 5);
  CHECK(c.channels(15) == 512);
  CHECK(c.bottleneck_length() == 1);
  const auto chain = shape_chain(c);
  CHECK(chain.encoder[15] == std::pair<std::size_t, std::size_t>{512, 1});
  CHECK(chain.output.second == 16000);
  CHECK(c.internal_length == 32768);
}

TEST_CASE("property: shape chain halving and channel rule") {
  for (const auto& c : {ModelConfig::paper(), ModelConfig::desk(), ModelConfig::smoke(), ModelConfig::tiny_shapes()}) {
    const auto chain = shape_chain(c);
    for (int l = 0; l <= c.encoder_layers; ++l) {
      CHECK(chain.encoder[static_cast<std::size_t>(l)].second == c.internal_length >> l);
      CHECK(chain.encoder[static_cast<std::size_t>(l)].first == channels_oracle(c, l));
      CHECK(c.channels(l) == channels_oracle(c, l));
    }
    for (int j = 1; j <= c.encoder_layers; ++j) {
      CHECK(chain.decoder[static_cast<std::size_t>(j)].second == chain.encoder[static_cast<std::size_t>(j - 1)].second);
    }
    CHECK(parameter_count(c) == count_oracle(c));
    CHECK(build(c).size() == count_oracle(c));
  }
}

TEST_CASE("tiny configuration channels, lengths and parameter count") {
  const auto c = ModelConfig::tiny_shapes();
  CHECK(c.channels(1) == 4);
  CHECK(c.channels(2) == 4);
  CHECK(c.channels(3) == 4);
  CHECK(parameter_count(c) == 925);  // 164 + 84 + 84 + 164 + 164 + 244 + 21

  ForwardCache cache;
  const auto y = forward(build(c), c, random_cond(c, 1), cache);
  CHECK(y.size() == 60);
  CHECK(cache.encoder[1].time == 32);
  CHECK(cache.encoder[2].time == 16);
  CHECK(cache.encoder[3].time == 8);
}

TEST_CASE("build is seeded, float32-exact and within the Glorot bound") {
  auto c = ModelConfig::smoke();
  const auto a = build(c);
  CHECK(build(c) == a);
  c.seed = 1;
  CHECK_FALSE(build(c) == a);
  for (const auto& l : a.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>((l.shape.in_channels + l.shape.out_channels) * l.shape.length));
    for (std::size_t i = 0; i < l.shape.weight_count(); ++i) {
      const double w = a.values[l.weight_offset + i];
      REQUIRE(std::abs(w) <= limit);
      REQUIRE(static_cast<double>(static_cast<float>(w)) == w);
    }
    for (std::size_t i = 0; i < l.shape.out_channels; ++i) REQUIRE(a.values[l.bias_offset + i] == 0.0);
  }
}

TEST_CASE("forward: zero parameters give silence; outputs are bounded and deterministic") {
  const auto c = ModelConfig::smoke();
  Parameters zero = layout(c);
  const auto cond = random_cond(c, 2);
  for (double v : forward(zero, c, cond).samples) REQUIRE(v == 0.0);

  const auto p = build(c);
  const auto y = forward(p, c, cond);
  CHECK(y.size() == kSoundLength);
  for (double v : y.samples) REQUIRE(std::abs(v) < 1.0);
  CHECK(forward(p, c, cond) == y);
}

TEST_CASE("full-size forward produces 16000 bounded samples") {
  const auto c = ModelConfig::paper();
  const auto y = forward(build(c), c, random_cond(c, 3));
  CHECK(y.size() == 16000);
  for (double v : y.samples) REQUIRE(std::abs(v) < 1.0);
}

TEST_CASE("property: every feature channel reaches the output") {
  const auto c = ModelConfig::smoke();
  const auto p = build(c);
  const auto base = random_cond(c, 4);
  const auto y0 = forward(p, c, base);
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    auto cond = base;
    cond.fs[f] = cond.fs[f] > 0.5 ? cond.fs[f] - 0.3 : cond.fs[f] + 0.3;
    INFO(kFeatureNames[f]);
    CHECK(l1_diff(forward(p, c, cond), y0) > 0.0);
  }
  auto cond = base;
  cond.e.values[100] += 0.1;
  CHECK(l1_diff(forward(p, c, cond), y0) > 0.0);
}

TEST_CASE("input tensor broadcasts features and pads the envelope") {
  const auto c = ModelConfig::tiny_shapes();
  Envelope e;
  e.values.assign(60, 0.25);
  TimbralVector fs;
  for (std::size_t i = 0; i < kFeatureCount; ++i) fs[i] = 0.1 * static_cast<double>(i);
  const auto cond = make_conditioning(e, fs, c);
  CHECK(cond.e.size() == 64);
  const auto x = input_tensor(cond, c);
  CHECK(x.channels == 8);
  CHECK(x.at(0, 59) == 0.25);
  CHECK(x.at(0, 60) == 0.0);
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    for (std::size_t t = 0; t < 64; ++t) REQUIRE(x.at(1 + i, t) == fs[i]);
  }

  e.values.assign(65, 0.1);
  CHECK_THROWS_AS(make_conditioning(e, fs, c), Error);
  auto bad = cond;
  bad.fs[2] = 1.5;
  CHECK_THROWS_AS(input_tensor(bad, c), Error);
}

TEST_CASE("config validation, presets and JSON") {
  auto c = ModelConfig::paper();
  c.internal_length = 16000;
  CHECK_THROWS_AS(c.validate(), Error);
  c = ModelConfig::paper();
  c.output_length = 40000;
  CHECK_THROWS_AS(c.validate(), Error);
  c = ModelConfig::paper();
  c.feature_count = 6;
  CHECK_THROWS_AS(c.validate(), Error);

  CHECK(ModelConfig::preset("paper") == ModelConfig::paper());
  CHECK(ModelConfig::preset("desk").encoder_layers == 9);
  CHECK(ModelConfig::preset("desk").base_filters == 16);
  CHECK(ModelConfig::preset("desk").internal_length == 16384);
  CHECK_THROWS_AS(ModelConfig::preset("huge"), Error);

  const auto d = ModelConfig::desk();
  CHECK(model_config_from_json(nlohmann::json::parse(to_json(d).dump())) == d);
}

TEST_CASE("check_finite rejects NaN and Inf") {
  auto p = build(ModelConfig::tiny_shapes());
  CHECK_NOTHROW(check_finite(p));
  p.values[3] = std::numeric_limits<double>::quiet_NaN();
  try {
    check_finite(p);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteParameters);
  }
}
