// Acceptance runner: one PASS/FAIL line per top-level criterion.
//
//   acceptance [--group fast|smoke|desk|all] [--work-dir DIR]
//
// Exit status is 0 only when every selected criterion passes.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "psynth/checkpoint.hpp"
#include "psynth/coherence.hpp"
#include "psynth/error.hpp"
#include "psynth/features.hpp"
#include "psynth/gradcheck.hpp"
#include "psynth/losses.hpp"
#include "psynth/service.hpp"
#include "psynth/training.hpp"
#include "support.hpp"

using namespace psynth;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string group;
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

std::filesystem::path g_work;

// ---------------------------------------------------------------- shape

Outcome shape_fidelity() {
  const auto c = ModelConfig::paper();
  const auto chain = shape_chain(c);
  const auto [ch, len] = chain.encoder.back();
  const auto y = forward(layout(c), c, make_conditioning(parametric_envelope(5.0, 50.0, 1.0, kSoundLength), {}, c));
  const bool ok = c.encoder_layers == 15 && c.base_filters == 32 && c.filter_length == 5 && ch == 512 && len == 1 &&
                  chain.output.second == 16000 && y.size() == 16000;
  return {ok, fmt::format("K={} base={} filter={} bottleneck={}x{} output={}", c.encoder_layers, c.base_filters,
                          c.filter_length, ch, len, y.size())};
}

// ---------------------------------------------------------------- gradients

Outcome gradient_correctness() {
  bool ok = true;
  std::string detail;
  for (auto m : {LossMode::Wave, LossMode::High, LossMode::Full}) {
    LossConfig loss;
    loss.mode = m;
    GradCheckOptions o;
    o.eps = 1e-4;
    const auto r = gradient_check(gradcheck_config_tiny(), loss, o);
    ok = ok && r.max_rel_err < 1e-3;
    detail += fmt::format("{}={:.2e} ", to_string(m), r.max_rel_err);
  }
  return {ok, detail + "(threshold 1e-3, eps 1e-4)"};
}

// ---------------------------------------------------------------- losses

LossConfig mode(LossMode m, double lambda = 0.5) {
  LossConfig c;
  c.mode = m;
  c.lambda = lambda;
  return c;
}

Outcome loss_identities() {
  double worst_self = 0.0, worst_wave = 0.0, worst_lambda0 = 0.0, worst_high = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto x = test::uniform_noise(kSoundLength, seed, 0.5);
    const auto y = test::uniform_noise(kSoundLength, seed + 100, 0.5);
    for (auto m : {LossMode::Wave, LossMode::High, LossMode::Full}) {
      worst_self = std::max(worst_self, std::abs(total_loss(x, x, mode(m)).total));
    }
    worst_wave = std::max(worst_wave, std::abs(total_loss(x, y, mode(LossMode::Wave)).total - l1_recon(x, y)));
    worst_lambda0 = std::max(worst_lambda0, std::abs(total_loss(x, y, mode(LossMode::Full, 0.0)).total -
                                                     total_loss(x, y, mode(LossMode::Wave)).total));
    // Differences confined below bin 40 (625 Hz): a low tone present in one signal only.
    const auto low = test::sine(100.0 + 80.0 * static_cast<double>(seed), kSoundLength, 0.5).samples;
    auto shifted = x;
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += low[i];
    const double high = stft_loss(shifted, x, mode(LossMode::High));
    const double full = stft_loss(shifted, x, mode(LossMode::Full));
    worst_high = std::max(worst_high, high / full);
  }
  const bool ok = worst_self <= 1e-6 && worst_wave == 0.0 && worst_lambda0 == 0.0 && worst_high <= 0.05;
  return {ok, fmt::format("self={:.1e} wave-l1={:.1e} lambda0={:.1e} high/full(sub-bin-40)={:.4f}", worst_self,
                          worst_wave, worst_lambda0, worst_high)};
}

// ---------------------------------------------------------------- stft

Outcome stft_oracle() {
  double worst = 0.0;
  std::vector<double> buf(1024);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto x = test::uniform_noise(2048, seed);
    const auto s = stft_mag(x, 1024, 512);
    std::size_t m = 0;
    for (std::size_t start = 0; start + 1024 <= x.size(); start += 512, ++m) {
      for (std::size_t n = 0; n < 1024; ++n) {
        buf[n] = (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / 1024.0)) * x[start + n];
      }
      const auto ref = test::naive_dft(buf.data(), 1024);
      for (std::size_t k = 0; k < ref.size(); ++k) {
        const double r = std::abs(ref[k]);
        worst = std::max(worst, std::abs(s.at(m, k) - r) / std::max(r, 1e-12));
      }
    }
  }
  return {worst < 1e-5, fmt::format("max relative difference {:.2e} (threshold 1e-5)", worst)};
}

// ---------------------------------------------------------------- envelope

Outcome envelope_closed_forms() {
  Waveform step;
  step.samples.assign(200, 1.0);
  const double e79 = envelope_follow(step, 5.0, 50.0).values[79];
  const double step_err = std::abs(e79 - (1.0 - std::exp(-80.0 / 80.0)));

  Waveform impulse;
  impulse.samples.assign(4000, 0.0);
  impulse.samples[0] = 1.0;
  const auto e = envelope_follow(impulse, 5.0, 50.0);
  double ratio_err = 0.0;
  for (std::size_t n = 1; n < e.size(); ++n) {
    ratio_err = std::max(ratio_err, std::abs(e.values[n] / e.values[n - 1] - std::exp(-1.0 / 800.0)));
  }
  return {step_err <= 1e-6 && ratio_err <= 1e-9,
          fmt::format("e[79]={:.9f} err={:.1e}; impulse ratio err={:.1e}", e79, step_err, ratio_err)};
}

// ---------------------------------------------------------------- extractors

Waveform mix(std::initializer_list<std::pair<double, double>> partials) {
  Waveform w;
  w.samples.assign(kSoundLength, 0.0);
  for (const auto& [hz, amp] : partials) {
    const auto s = test::sine(hz, kSoundLength, amp, 0.3);
    for (std::size_t i = 0; i < kSoundLength; ++i) w.samples[i] += s.samples[i];
  }
  return w;
}

bool increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i] > v[i - 1])) return false;
  }
  return true;
}

Outcome extractor_monotonicity() {
  std::vector<std::pair<std::string, bool>> results;
  auto series = [](auto make, auto proxy, std::initializer_list<double> params) {
    std::vector<double> v;
    for (double p : params) v.push_back(proxy(make(p)));
    return increasing(v);
  };
  auto spectrum = [](auto proxy) { return [proxy](const Waveform& w) { return proxy(summarize_spectrum(w)); }; };

  results.emplace_back("brightness", series([](double hz) { return test::sine(hz, kSoundLength, 0.8, 0.3); },
                                            spectrum(brightness_proxy),
                                            {100.0, 200.0, 400.0, 700.0, 1000.0, 1500.0, 2000.0, 3000.0, 4000.0}));
  results.emplace_back("depth", series([](double a) { return mix({{100.0, a}, {1000.0, 0.3}}); },
                                       spectrum(depth_proxy), {0.05, 0.1, 0.2, 0.4, 0.6}));
  results.emplace_back("boominess", series([](double a) { return mix({{60.0, a}, {1000.0, 0.3}}); },
                                           [](const Waveform& w) { return boominess_proxy(summarize_spectrum(w)); }, {0.05, 0.1, 0.2, 0.4, 0.6}));
  results.emplace_back("sharpness", series([](double a) { return mix({{500.0, 0.5}, {6000.0, a}}); },
                                           spectrum(sharpness_proxy), {0.0, 0.05, 0.1, 0.2, 0.3}));
  results.emplace_back("warmth", series([](double a) { return mix({{200.0, a}, {1000.0, 0.3}}); },
                                        spectrum(warmth_proxy), {0.05, 0.1, 0.2, 0.4}));
  results.emplace_back("hardness", series(
                                       [](double steepness) {
                                         Waveform w = test::sine(1000.0, kSoundLength, 0.8, 0.2);
                                         const auto ramp = static_cast<std::size_t>(16.0 / steepness);
                                         for (std::size_t i = 0; i < ramp; ++i) {
                                           w.samples[i] *= static_cast<double>(i) / static_cast<double>(ramp);
                                         }
                                         return w;
                                       },
                                       [](const Waveform& w) { return hardness_proxy(w); },
                                       {1.0 / 15.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0, 2.0}));
  bool rough = true;
  for (double f : {200.0, 440.0, 1000.0}) {
    rough = rough && extract_timbral(mix({{f, 0.5}, {1.02 * f, 0.5}}))[Feature::Roughness] >
                         extract_timbral(mix({{f, 0.5}}))[Feature::Roughness];
  }
  results.emplace_back("roughness", rough);

  bool ok = true;
  std::string detail;
  for (const auto& [name, pass] : results) {
    ok = ok && pass;
    detail += fmt::format("{}:{} ", name, pass ? "ok" : "FAIL");
  }
  return {ok, detail};
}

// ---------------------------------------------------------------- harness

Outcome harness_self_validation() {
  const Dataset d = make_oracle_dataset(60, 7);
  std::vector<const TrainingRecord*> recs;
  for (const auto& r : d.records) recs.push_back(&r);
  const OracleBackend oracle(d.manifest.normalizer);
  const auto r = evaluate(oracle, d.manifest.normalizer, recs);
  bool ok = true;
  std::string detail = fmt::format("{} records; oracle ", recs.size());
  for (std::size_t i = 0; i < r.features.size(); ++i) {
    if (std::find(r.controlled.begin(), r.controlled.end(), r.features[i]) == r.controlled.end()) continue;
    const auto& s = r.per_feature[i];
    const double e1 = s.accuracy(s.e1), e2 = s.accuracy(s.e2), e3 = s.accuracy(s.e3);
    ok = ok && e1 == 1.0 && e2 == 1.0 && e3 == 1.0;
    detail += fmt::format("{} E1/E2/E3={:.3f}/{:.3f}/{:.3f} ", kFeatureNames[r.features[i]], e1, e2, e3);
  }
  const auto c = evaluate(ConstantBackend{}, d.manifest.normalizer, recs);
  const auto& a = c.aggregate;
  const double c1 = a.accuracy(a.e1), c2 = a.accuracy(a.e2), c3 = a.accuracy(a.e3);
  ok = ok && c1 == 0.0 && c2 == 0.0 && c3 == 0.0 && !r.controlled.empty();
  detail += fmt::format("; constant E1/E2/E3={:.3f}/{:.3f}/{:.3f}", c1, c2, c3);
  return {ok, detail};
}

// ---------------------------------------------------------------- learning smoke

Outcome learning_smoke() {
  const Dataset d = make_oracle_dataset(8, 0);
  const auto model = ModelConfig::smoke();
  TrainConfig t;
  t.epochs = 500;
  t.batch_size = 8;
  t.learning_rate = 1e-3;
  t.train_fraction = 1.0;
  t.loss.mode = LossMode::Full;
  t.seed = 0;
  t.eval_each_epoch = false;

  std::vector<const TrainingRecord*> recs;
  for (const auto& r : d.records) recs.push_back(&r);
  const double initial = mean_loss(build(model), model, recs, t.loss);
  const auto a = train(model, d, t, {}, [](const EpochStats& s) {
    if (s.epoch % 50 == 0) spdlog::info("smoke step {} loss {:.5f}", s.epoch, s.train_loss);
  });
  const double final_loss = mean_loss(a.checkpoint.params, model, recs, t.loss);
  double best = initial;
  for (const auto& e : a.report.epochs) best = std::min(best, e.train_loss);

  auto short_cfg = t;
  short_cfg.epochs = 20;
  const bool deterministic = train(model, d, short_cfg).checkpoint.hash == train(model, d, short_cfg).checkpoint.hash;

  const double ratio = final_loss / initial;
  return {ratio <= 0.10 && deterministic,
          fmt::format("model K={} base={}; 500 steps, batch 8, lr 1e-3; FULL loss {:.4f} -> {:.4f} (ratio {:.3f}, "
                      "need <= 0.10; best epoch loss {:.4f}); deterministic={}",
                      model.encoder_layers, model.base_filters, initial, final_loss, ratio, best, deterministic)};
}

// ---------------------------------------------------------------- desk scale

Outcome desk_scale() {
  const Dataset d = make_oracle_dataset(200, 42);
  const auto model = ModelConfig::desk();
  TrainConfig t;
  t.epochs = 200;
  t.loss.mode = LossMode::Full;
  t.seed = 0;
  t.split_seed = 0;
  t.train_fraction = 0.9;

  std::filesystem::create_directories(g_work);
  TrainOutputs out;
  out.checkpoint = g_work / "desk.ckpt";
  out.curve_csv = g_work / "desk.loss.csv";
  const auto res = train(model, d, t, out, [](const EpochStats& s) {
    if (s.epoch % 10 == 0) {
      spdlog::info("desk epoch {} train {:.5f} eval {:.5f}", s.epoch, s.train_loss, s.eval_loss.value_or(-1.0));
    }
  });

  const auto loaded = load_checkpoint(*out.checkpoint, &model);
  auto resaved = loaded;
  const auto again = serialize(resaved);
  std::ifstream in(*out.checkpoint, std::ios::binary);
  const std::vector<std::uint8_t> on_disk{std::istreambuf_iterator<char>(in), {}};
  const bool round_trip = loaded.params.values == res.checkpoint.params.values && again == on_disk &&
                          loaded.hash == res.checkpoint.hash;

  std::vector<const TrainingRecord*> eval;
  for (const auto& id : split(d.manifest, t.train_fraction, t.split_seed).eval) {
    for (const auto& r : d.records) {
      if (r.id == id) eval.push_back(&r);
    }
  }
  const auto ckpt = std::make_shared<const Checkpoint>(loaded);
  const auto report = evaluate(ModelBackend(ckpt), ckpt->normalizer, eval);
  std::ofstream(g_work / "desk.coherence.json") << to_json(report).dump(2);
  const auto bi = std::find(report.features.begin(), report.features.end(), static_cast<std::size_t>(Feature::Brightness)) -
                  report.features.begin();
  const auto& bs = report.per_feature[static_cast<std::size_t>(bi)];
  const double e1 = bs.accuracy(bs.e1);

  const auto& ep = res.report.epochs;
  return {round_trip && report.pairs.size() == eval.size() * kFeatureCount,
          fmt::format("K={} base={} internal={}; {} epochs on {} records; loss {:.4f} -> {:.4f}; coherence on {} eval "
                      "records completed; brightness E1={:.3f} (soft target > 0.7, {}); round-trip bit-exact={}",
                      model.encoder_layers, model.base_filters, model.internal_length, ep.size(), d.records.size(),
                      ep.front().train_loss, ep.back().train_loss, eval.size(), e1, e1 > 0.7 ? "met" : "not met",
                      round_trip)};
}

// ---------------------------------------------------------------- service

std::string synth_body(double brightness, const json& envelope) {
  json f = json::object();
  for (auto n : kFeatureNames) f[std::string(n)] = 0.5;
  f["brightness"] = brightness;
  return json{{"features", f}, {"envelope", envelope}}.dump();
}

Outcome service_contract() {
  std::vector<std::pair<std::string, bool>> checks;
  ServiceConfig cfg;
  cfg.host = "127.0.0.1";
  cfg.port = 0;
  SynthService svc(cfg);
  HttpServer server(svc);
  const int port = server.bind();
  std::thread loop([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);

  auto status = [](const httplib::Result& r) { return r ? r->status : -1; };
  checks.emplace_back("healthz before load", status(cli.Get("/healthz")) == 200);
  checks.emplace_back("model 503 without checkpoint", status(cli.Get("/api/v1/model")) == 503);
  const json ad = {{"kind", "ad"}, {"attack_ms", 0.0}, {"decay_ms", 100.0}, {"amplitude", 1.0}};
  checks.emplace_back("synthesize 503 without checkpoint",
                      status(cli.Post("/api/v1/synthesize", synth_body(0.5, ad), "application/json")) == 503);

  // A briefly trained network so synthesized sounds are audible enough to analyze.
  const Dataset d = make_oracle_dataset(8, 1);
  TrainConfig t;
  t.epochs = 3;
  t.batch_size = 4;
  t.learning_rate = 1e-3;
  t.train_fraction = 1.0;
  auto model = ModelConfig::smoke();
  svc.set_checkpoint(std::make_shared<const Checkpoint>(train(model, d, t).checkpoint));

  const auto s1 = cli.Post("/api/v1/synthesize", synth_body(0.5, ad), "application/json");
  const auto s2 = cli.Post("/api/v1/synthesize", synth_body(0.5, ad), "application/json");
  bool wav_ok = false;
  if (s1 && s1->status == 200) {
    const auto [w, meta] = decode_wav(std::vector<std::uint8_t>(s1->body.begin(), s1->body.end()));
    wav_ok = w.size() == 16000 && meta.original_rate == 16000 && meta.channels == 1 &&
             s1->get_header_value("X-Checkpoint-Hash") == svc.checkpoint()->hash;
  }
  checks.emplace_back("synthesize 200 WAV 16000 samples", wav_ok);
  checks.emplace_back("synthesize byte-identical repeat", s1 && s2 && s1->body == s2->body);

  const auto b = cli.Post("/api/v1/synthesize", synth_body(1.3, ad), "application/json");
  checks.emplace_back("brightness 1.3 -> 422 naming brightness",
                      b && b->status == 422 && json::parse(b->body).value("field", "") == "brightness");
  const auto raw = cli.Post("/api/v1/synthesize",
                            synth_body(0.5, json{{"kind", "raw"}, {"samples", std::vector<double>(15999, 0.5)}}),
                            "application/json");
  checks.emplace_back("raw envelope 15999 -> 422", status(raw) == 422);

  bool analyze_ok = false;
  if (s1 && s1->status == 200) {
    const auto a = cli.Post("/api/v1/analyze", s1->body, "audio/wav");
    if (a && a->status == 200) {
      const auto j = json::parse(a->body);
      analyze_ok = true;
      for (auto n : kFeatureNames) {
        const double v = j["features_normalized"][std::string(n)];
        analyze_ok = analyze_ok && v >= 0.0 && v <= 1.0;
      }
    }
  }
  checks.emplace_back("analyze(synthesize) 200 features in [0,1]", analyze_ok);
  Waveform silence;
  silence.samples.assign(16000, 0.0);
  const auto sb = encode_wav(silence);
  checks.emplace_back("analyze silence -> 422",
                      status(cli.Post("/api/v1/analyze", std::string(sb.begin(), sb.end()), "audio/wav")) == 422);
  checks.emplace_back("analyze garbage -> 415", status(cli.Post("/api/v1/analyze", "not audio", "audio/wav")) == 415);

  const auto m1 = cli.Get("/api/v1/model");
  const auto m2 = cli.Get("/api/v1/model");
  checks.emplace_back("model identical bodies", m1 && m2 && m1->status == 200 && m1->body == m2->body);
  const auto paper = ModelConfig::paper();
  svc.set_checkpoint(std::make_shared<const Checkpoint>(make_checkpoint(paper, layout(paper), d.manifest.normalizer)));
  const auto mp = cli.Get("/api/v1/model");
  checks.emplace_back("paper checkpoint reports K=15",
                      mp && mp->status == 200 && json::parse(mp->body)["config"]["encoder_layers"] == 15);

  server.stop();
  loop.join();
  httplib::Client after("127.0.0.1", port);
  after.set_connection_timeout(1);
  checks.emplace_back("connection refused after shutdown", !after.Get("/healthz"));

  bool ok = true;
  std::string failed;
  for (const auto& [name, pass] : checks) {
    ok = ok && pass;
    if (!pass) failed += name + "; ";
  }
  return {ok, ok ? fmt::format("{} checks over HTTP on port {}", checks.size(), port) : "failed: " + failed};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"psynth acceptance criteria"};
  std::string group = "fast";
  std::string work = (std::filesystem::temp_directory_path() / "psynth-acceptance").string();
  app.add_option("--group", group, "Which criteria to run")->check(CLI::IsMember({"fast", "smoke", "desk", "all"}));
  app.add_option("--work-dir", work, "Directory for desk-scale artifacts");
  CLI11_PARSE(app, argc, argv);
  g_work = work;
  spdlog::set_level(std::getenv("PSYNTH_TEST_LOG") ? spdlog::level::info : spdlog::level::warn);
  spdlog::set_pattern("%H:%M:%S %l %v");

  const std::vector<Criterion> criteria = {
      {"fast", "Shape fidelity", 1.0, shape_fidelity},
      {"fast", "Gradient correctness", 120.0, gradient_correctness},
      {"fast", "Loss identities", 10.0, loss_identities},
      {"fast", "STFT oracle equivalence", 10.0, stft_oracle},
      {"fast", "Envelope closed forms", 10.0, envelope_closed_forms},
      {"fast", "Extractor monotonicity suite", 60.0, extractor_monotonicity},
      {"fast", "Harness self-validation", 300.0, harness_self_validation},
      {"smoke", "Learning smoke test", 600.0, learning_smoke},
      {"desk", "Desk-scale end-to-end", 7200.0, desk_scale},
      {"fast", "Service contract", 60.0, service_contract},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (group != "all" && c.group != group) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs < c.budget_s;
    const bool pass = o.pass && in_budget;
    failures += !pass;
    std::printf("%s  %s: %s [%.2f s, budget %.0f s%s]\n", pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(), secs,
                c.budget_s, in_budget ? "" : ", EXCEEDED");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
