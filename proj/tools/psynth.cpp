// psynth: command-line front end for dataset preparation, training,
// generation, coherence evaluation, gradient checks and the HTTP service.
//
// Exit codes: 0 success, 1 usage or invalid input, 2 runtime failure.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <pthread.h>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "psynth/checkpoint.hpp"
#include "psynth/coherence.hpp"
#include "psynth/dataset.hpp"
#include "psynth/error.hpp"
#include "psynth/gradcheck.hpp"
#include "psynth/json_io.hpp"
#include "psynth/service.hpp"
#include "psynth/synthesis_request.hpp"
#include "psynth/training.hpp"

namespace fs = std::filesystem;
using namespace psynth;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

// Raised for bad user input discovered after CLI parsing (exit 1).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<const TrainingRecord*> pick(const Dataset& data, const std::vector<std::string>& ids) {
  std::vector<const TrainingRecord*> out;
  for (const auto& id : ids) {
    for (const auto& r : data.records) {
      if (r.id == id) out.push_back(&r);
    }
  }
  return out;
}

SweepLevels parse_levels(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--levels expects three comma-separated numbers, got '" + text + "'");
    }
  }
  if (v.size() != 3) throw UsageError("--levels expects three comma-separated numbers, got '" + text + "'");
  SweepLevels l{v[0], v[1], v[2]};
  try {
    l.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return l;
}

struct IngestArgs {
  std::string in, out;
  int sr = kSampleRate;
  std::size_t len = kSoundLength;
  double trim_db = kDefaultTrimDb;
};

int run_ingest(const IngestArgs& a) {
  PreprocessParams p;
  p.sample_rate = a.sr;
  p.length = a.len;
  p.trim_db = a.trim_db;
  std::vector<std::string> skipped;
  const auto m = ingest(a.in, a.out, p, &skipped);
  for (const auto& s : skipped) spdlog::warn("skipped {}", s);
  spdlog::info("ingested {} records into {} ({} skipped)", m.records.size(), a.out, skipped.size());
  return kExitOk;
}

struct SynthDataArgs {
  std::size_t n = 200;
  std::uint64_t seed = 0;
  std::string out;
};

int run_synth_data(const SynthDataArgs& a) {
  const auto m = build_oracle_dataset(a.n, a.seed, a.out);
  spdlog::info("wrote {} oracle records to {}", m.records.size(), a.out);
  return kExitOk;
}

struct TrainArgs {
  std::string data, out, mode = "full", model = "desk", model_config, train_config, curve, resume;
  int epochs = 2500;
  std::size_t batch = 16;
  double lr = 1e-4;
  double lambda = 0.5;
  double clip_norm = 10.0;
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  int checkpoint_every = 0;
  bool no_eval = false;
};

int run_train(const TrainArgs& a, const CLI::App& sub) {
  TrainConfig cfg;
  if (!a.train_config.empty()) cfg = train_config_from_json(parse_json_arg(a.train_config));
  // Explicit flags override the config file.
  if (sub.count("--epochs") || a.train_config.empty()) cfg.epochs = a.epochs;
  if (sub.count("--batch") || a.train_config.empty()) cfg.batch_size = a.batch;
  if (sub.count("--lr") || a.train_config.empty()) cfg.learning_rate = a.lr;
  if (sub.count("--seed") || a.train_config.empty()) cfg.seed = a.seed;
  if (sub.count("--split-seed") || a.train_config.empty()) cfg.split_seed = a.split_seed;
  if (sub.count("--train-fraction") || a.train_config.empty()) cfg.train_fraction = a.train_fraction;
  if (sub.count("--clip-norm") || a.train_config.empty()) cfg.clip_norm = a.clip_norm;
  if (sub.count("--checkpoint-every") || a.train_config.empty()) cfg.checkpoint_every = a.checkpoint_every;
  if (sub.count("--mode") || a.train_config.empty()) cfg.loss.mode = parse_loss_mode(a.mode);
  if (sub.count("--lambda") || a.train_config.empty()) cfg.loss.lambda = a.lambda;
  if (a.no_eval) cfg.eval_each_epoch = false;

  const Dataset data = load_dataset(a.data);
  TrainOutputs out;
  out.checkpoint = fs::path(a.out);
  out.curve_csv = a.curve.empty() ? fs::path(a.out + ".loss.csv") : fs::path(a.curve);
  auto progress = [](const EpochStats& s) {
    spdlog::info("epoch {} train {:.6f}{}", s.epoch, s.train_loss,
                 s.eval_loss ? fmt::format(" eval {:.6f}", *s.eval_loss) : std::string());
  };

  TrainResult result;
  if (!a.resume.empty()) {
    result = resume(fs::path(a.resume), data, cfg, out, nullptr, progress);
  } else {
    ModelConfig model =
        a.model_config.empty() ? ModelConfig::preset(a.model) : model_config_from_json(parse_json_arg(a.model_config));
    model.seed = cfg.seed;
    result = train(model, data, cfg, out, progress);
  }
  spdlog::info("checkpoint {} ({}), {:.1f} s", a.out, result.checkpoint.hash, result.report.wall_seconds);
  return kExitOk;
}

struct GenerateArgs {
  std::string ckpt, features, envelope, out;
};

int run_generate(const GenerateArgs& a) {
  nlohmann::json fj, ej;
  try {
    fj = parse_json_arg(a.features);
    ej = parse_json_arg(a.envelope);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const auto fs = parse_features(fj);
  if (!fs) throw UsageError("--features: " + fs.error.field + " " + fs.error.message);
  const auto env = parse_envelope(ej);
  if (!env) throw UsageError("--envelope: " + env.error.field + " " + env.error.message);
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const Waveform y = synthesize(ckpt, SynthesisRequest{*fs.value, *env.value});
  write_wav(y, a.out);
  spdlog::info("wrote {} samples to {}", y.size(), a.out);
  return kExitOk;
}

struct EvalArgs {
  std::string ckpt, data, levels = "0.2,0.5,0.8", report, table, backend = "model", features;
  bool all_records = false;
  std::optional<std::uint64_t> split_seed;
  std::optional<double> train_fraction;
};

int run_eval(const EvalArgs& a) {
  const SweepLevels levels = parse_levels(a.levels);
  std::vector<std::size_t> features;
  if (!a.features.empty()) {
    std::stringstream ss(a.features);
    std::string name;
    while (std::getline(ss, name, ',')) {
      const auto i = feature_index(name);
      if (i >= kFeatureCount) throw UsageError("unknown feature '" + name + "'");
      features.push_back(i);
    }
  }
  if (a.backend == "model" && a.ckpt.empty()) throw UsageError("--ckpt is required for the model backend");

  const Dataset data = load_dataset(a.data);
  std::shared_ptr<const Checkpoint> ckpt;
  if (!a.ckpt.empty()) ckpt = std::make_shared<const Checkpoint>(load_checkpoint(a.ckpt));

  std::uint64_t split_seed = 0;
  double fraction = 0.9;
  if (ckpt) {
    split_seed = ckpt->metadata.value("split_seed", split_seed);
    fraction = ckpt->metadata.value("train_fraction", fraction);
  }
  if (a.split_seed) split_seed = *a.split_seed;
  if (a.train_fraction) fraction = *a.train_fraction;

  std::vector<const TrainingRecord*> records;
  std::string scope = "all";
  if (a.all_records || fraction >= 1.0) {
    for (const auto& r : data.records) records.push_back(&r);
  } else {
    records = pick(data, split(data.manifest, fraction, split_seed).eval);
    scope = "eval";
  }

  const FeatureNormalizer& normalizer = ckpt ? ckpt->normalizer : data.manifest.normalizer;
  std::unique_ptr<SynthesisBackend> backend;
  if (a.backend == "model") {
    backend = std::make_unique<ModelBackend>(ckpt);
  } else if (a.backend == "oracle") {
    backend = std::make_unique<OracleBackend>(normalizer);
  } else {
    backend = std::make_unique<ConstantBackend>();
  }

  CoherenceReport report = evaluate(*backend, normalizer, records, levels, features);
  report.metadata["dataset"] = data.manifest.name;
  report.metadata["scope"] = scope;
  report.metadata["split_seed"] = split_seed;
  report.metadata["train_fraction"] = fraction;
  if (ckpt) report.metadata["checkpoint_hash"] = ckpt->hash;
  write_json_file(a.report, to_json(report));
  const std::string table = format_table(report);
  if (!a.table.empty()) {
    std::ofstream(a.table) << table;
  }
  std::cout << table;
  return kExitOk;
}

struct GradArgs {
  std::string size = "tiny", mode = "full";
  double eps = 1e-4;
  double threshold = 1e-3;
  std::size_t n_params = 50;
  std::uint64_t seed = 0;
};

int run_gradcheck(const GradArgs& a) {
  LossConfig loss;
  loss.mode = parse_loss_mode(a.mode);
  GradCheckOptions o;
  o.eps = a.eps;
  o.n_params = a.n_params;
  o.seed = a.seed;
  const auto r = gradient_check(gradcheck_config(a.size), loss, o);
  std::cout << fmt::format("size={} mode={} eps={} params={} kink_crossings={} max_rel_err={:.3e}\n", a.size, a.mode,
                           a.eps, r.entries.size(), r.kink_crossings, r.max_rel_err);
  if (!(r.max_rel_err < a.threshold)) {
    spdlog::error("max relative error {:.3e} exceeds {:.1e}", r.max_rel_err, a.threshold);
    return kExitRuntime;
  }
  return kExitOk;
}

struct ServeArgs {
  std::string ckpt, config, host, cors;
  std::optional<int> port;
};

int run_serve(const ServeArgs& a) {
  ServiceConfig cfg;
  if (!a.config.empty()) cfg = service_config_from_json(read_json_file(a.config));
  apply_env_overrides(cfg);
  if (!a.ckpt.empty()) cfg.checkpoint = a.ckpt;
  if (a.port) cfg.port = *a.port;
  if (!a.host.empty()) cfg.host = a.host;
  if (!a.cors.empty()) cfg.cors_origin = a.cors;

  SynthService service(cfg);
  if (cfg.checkpoint) {
    service.reload(*cfg.checkpoint);
  } else {
    spdlog::warn("no checkpoint configured; model endpoints answer 503");
  }

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  HttpServer server(service);
  const int port = server.bind();
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    spdlog::info("signal {} received, draining", sig);
    server.stop();
  });
  spdlog::info("listening on {}:{}", cfg.host, port);
  std::fflush(stderr);
  server.listen_after_bind();
  if (waiter.joinable()) {
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
  }
  spdlog::info("stopped");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("psynth");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("%H:%M:%S %^%l%$ %v");

  CLI::App app{"Percussive sound synthesis from timbral features and an envelope"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  IngestArgs ia;
  auto* ingest_cmd = app.add_subcommand("ingest", "Preprocess a folder of WAV files into a dataset");
  ingest_cmd->add_option("--in", ia.in, "Folder of .wav files")->required()->check(CLI::ExistingDirectory);
  ingest_cmd->add_option("--out", ia.out, "Output dataset folder")->required();
  ingest_cmd->add_option("--sr", ia.sr, "Target sample rate")->capture_default_str()->check(CLI::IsMember({16000}));
  ingest_cmd->add_option("--len", ia.len, "Samples per sound")->capture_default_str()->check(CLI::IsMember({16000}));
  ingest_cmd->add_option("--trim-db", ia.trim_db, "Silence threshold in dBFS")->capture_default_str()->check(
      CLI::Range(-120.0, 0.0));

  SynthDataArgs sa;
  auto* synth_cmd = app.add_subcommand("synth-data", "Generate the synthetic oracle dataset");
  synth_cmd->add_option("--n", sa.n, "Number of sounds (>= 8)")->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", sa.seed, "Random seed")->capture_default_str();
  synth_cmd->add_option("--out", sa.out, "Output dataset folder")->required();

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset");
  train_cmd->add_option("--data", ta.data, "Dataset folder")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", ta.out, "Checkpoint path (optimizer state goes to <out>.adam)")->required();
  train_cmd->add_option("--mode", ta.mode, "Loss: wave, high or full")
      ->capture_default_str()
      ->transform(CLI::IsMember({"wave", "high", "full"}, CLI::ignore_case));
  train_cmd->add_option("--epochs", ta.epochs, "Epochs")->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", ta.batch, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", ta.lr, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--lambda", ta.lambda, "Weight of the STFT term")->capture_default_str()->check(
      CLI::NonNegativeNumber);
  train_cmd->add_option("--seed", ta.seed, "Seed for initialization and batch order")->capture_default_str();
  train_cmd->add_option("--split-seed", ta.split_seed, "Seed of the train/eval split")->capture_default_str();
  train_cmd->add_option("--train-fraction", ta.train_fraction, "Fraction of records used for training")
      ->capture_default_str()
      ->check(CLI::Range(0.01, 1.0));
  train_cmd->add_option("--clip-norm", ta.clip_norm, "Global gradient norm limit, 0 disables")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--checkpoint-every", ta.checkpoint_every, "Checkpoint cadence in epochs, 0 = end only")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--model", ta.model, "Model preset: paper, desk or smoke")
      ->capture_default_str()
      ->check(CLI::IsMember({"paper", "desk", "smoke"}));
  train_cmd->add_option("--model-config", ta.model_config, "Model config as JSON text or file (overrides --model)");
  train_cmd->add_option("--config", ta.train_config, "Training config as JSON text or file; flags override it");
  train_cmd->add_option("--curve", ta.curve, "Loss curve CSV (default <out>.loss.csv)");
  train_cmd->add_option("--resume", ta.resume, "Continue from this checkpoint for --epochs more epochs")
      ->check(CLI::ExistingFile);
  train_cmd->add_flag("--no-eval", ta.no_eval, "Evaluate the held-out split only after the last epoch");

  GenerateArgs ga;
  auto* gen_cmd = app.add_subcommand("generate", "Synthesize one sound from features and an envelope");
  gen_cmd->add_option("--ckpt", ga.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--features", ga.features, "Seven normalized features, JSON text or file")->required();
  gen_cmd->add_option("--envelope", ga.envelope, R"(Envelope JSON text or file: {"kind":"ad",...} or {"kind":"raw",...})")
      ->required();
  gen_cmd->add_option("--out", ga.out, "Output WAV")->required();

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval-coherence", "Score feature coherence with the E1/E2/E3 ordering tests");
  eval_cmd->add_option("--ckpt", ea.ckpt, "Checkpoint (required for the model backend)")->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ea.data, "Dataset folder")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--levels", ea.levels, "low,mid,high sweep levels")->capture_default_str();
  eval_cmd->add_option("--report", ea.report, "JSON report path")->required();
  eval_cmd->add_option("--table", ea.table, "Also write the text table here");
  eval_cmd->add_option("--backend", ea.backend, "model, oracle or constant")
      ->capture_default_str()
      ->check(CLI::IsMember({"model", "oracle", "constant"}));
  eval_cmd->add_option("--features", ea.features, "Comma-separated subset of features");
  eval_cmd->add_flag("--all-records", ea.all_records, "Sweep every record instead of the evaluation split");
  eval_cmd->add_option("--split-seed", ea.split_seed, "Split seed (default: from the checkpoint, else 0)");
  eval_cmd->add_option("--train-fraction", ea.train_fraction, "Train fraction (default: from the checkpoint, else 0.9)")
      ->check(CLI::Range(0.01, 1.0));

  GradArgs gr;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  grad_cmd->add_option("--size", gr.size, "tiny or small")->capture_default_str()->check(
      CLI::IsMember({"tiny", "small"}));
  grad_cmd->add_option("--mode", gr.mode, "Loss: wave, high or full")
      ->capture_default_str()
      ->transform(CLI::IsMember({"wave", "high", "full"}, CLI::ignore_case));
  grad_cmd->add_option("--eps", gr.eps, "Central-difference step (> 0)")->capture_default_str()->check(
      CLI::PositiveNumber);
  grad_cmd->add_option("--n-params", gr.n_params, "Parameters probed")->capture_default_str()->check(
      CLI::PositiveNumber);
  grad_cmd->add_option("--threshold", gr.threshold, "Failing relative error")->capture_default_str();
  grad_cmd->add_option("--seed", gr.seed, "Seed")->capture_default_str();

  ServeArgs sv;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP synthesis service");
  serve_cmd->add_option("--ckpt", sv.ckpt, "Checkpoint (overrides config and PSYNTH_CKPT)");
  serve_cmd->add_option("--port", sv.port, "Port, 0 picks a free one (overrides config and PSYNTH_PORT)")->check(
      CLI::Range(0, 65535));
  serve_cmd->add_option("--host", sv.host, "Bind address");
  serve_cmd->add_option("--config", sv.config, "Service config JSON file")->check(CLI::ExistingFile);
  serve_cmd->add_option("--cors-origin", sv.cors, "Allowed browser origin");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (verbose) spdlog::set_level(spdlog::level::debug);

  try {
    if (*ingest_cmd) return run_ingest(ia);
    if (*synth_cmd) return run_synth_data(sa);
    if (*train_cmd) return run_train(ta, *train_cmd);
    if (*gen_cmd) return run_generate(ga);
    if (*eval_cmd) return run_eval(ea);
    if (*grad_cmd) return run_gradcheck(gr);
    if (*serve_cmd) return run_serve(sv);
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
