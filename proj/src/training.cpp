#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "psynth/error.hpp"
#include "psynth/training.hpp"

namespace psynth {
namespace {

constexpr char kAdamMagic[8] = {'P', 'S', 'Y', 'N', 'A', 'D', 'A', 'M'};
constexpr const char* kAdamVersion = "adam-v1";

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(mix(seed) ^ mix(static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

struct Partition {
  std::vector<const TrainingRecord*> train;
  std::vector<const TrainingRecord*> eval;
};

Partition partition(const Dataset& data, const ModelConfig& model, const TrainConfig& cfg) {
  if (data.records.size() < cfg.batch_size) {
    throw Error(ErrorCode::InsufficientData, "dataset has " + std::to_string(data.records.size()) +
                                                 " records, fewer than batch size " + std::to_string(cfg.batch_size));
  }
  std::unordered_map<std::string, const TrainingRecord*> by_id;
  for (const auto& r : data.records) {
    if (r.x.samples.size() != model.output_length) {
      throw Error(ErrorCode::InvalidConfig, "record '" + r.id + "' has " + std::to_string(r.x.samples.size()) +
                                                " samples, model produces " + std::to_string(model.output_length));
    }
    by_id.emplace(r.id, &r);
  }
  std::vector<std::string> ids;
  ids.reserve(data.records.size());
  for (const auto& r : data.records) ids.push_back(r.id);
  const Split s = split_ids(std::move(ids), cfg.train_fraction, cfg.split_seed);
  Partition p;
  for (const auto& id : s.train) p.train.push_back(by_id.at(id));
  for (const auto& id : s.eval) p.eval.push_back(by_id.at(id));
  return p;
}

double clip_global_norm(std::vector<double>& g, double max_norm) {
  double sq = 0.0;
  for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& v : g) v *= scale;
  }
  return norm;
}

nlohmann::json checkpoint_metadata(const Dataset& data, const TrainConfig& cfg, int epochs_done) {
  return {{"epochs_done", epochs_done},
          {"seed", cfg.seed},
          {"split_seed", cfg.split_seed},
          {"train_fraction", cfg.train_fraction},
          {"dataset", data.manifest.name}};
}

void write_outputs(const ModelConfig& model, const TrainingState& state, const Dataset& data, const TrainConfig& cfg,
                   const std::filesystem::path& path, Checkpoint* out_ckpt) {
  Checkpoint ckpt = make_checkpoint(model, state.master, data.manifest.normalizer, cfg.loss);
  ckpt.metadata = checkpoint_metadata(data, cfg, state.epochs_done);
  const std::string hash = save_checkpoint(ckpt, path);
  save_training_state(state, hash, std::filesystem::path(path.string() + ".adam"));
  if (out_ckpt) *out_ckpt = std::move(ckpt);
}

TrainResult run(const ModelConfig& model, TrainingState state, const Dataset& data, const TrainConfig& cfg,
                const TrainOutputs& out, const EpochCallback& on_epoch) {
  const auto t0 = std::chrono::steady_clock::now();
  const Partition part = partition(data, model, cfg);
  if (part.train.empty()) throw Error(ErrorCode::InsufficientData, "training split is empty");

  std::vector<ConditioningInput> cond;
  cond.reserve(part.train.size());
  for (const auto* r : part.train) cond.push_back(make_conditioning(r->e, r->fs, model));

  TrainResult result;
  const std::size_t n = part.train.size();
  const std::size_t batch = std::min(cfg.batch_size, n);
  std::vector<double> grads(state.master.size());
  std::vector<double> g_out(model.output_length);
  ForwardCache cache;

  const int first = state.epochs_done + 1;
  const int last = state.epochs_done + cfg.epochs;
  for (int epoch = first; epoch <= last; ++epoch) {
    const auto order = epoch_order(n, cfg.seed, epoch);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += batch, ++batch_index) {
      const std::size_t stop = std::min(start + batch, n);
      std::fill(grads.begin(), grads.end(), 0.0);
      for (std::size_t i = start; i < stop; ++i) {
        const auto* rec = part.train[order[i]];
        const Waveform y = forward(state.master, model, cond[order[i]], cache);
        const LossParts parts = total_loss_grad(y.samples, rec->x.samples, cfg.loss, g_out);
        if (!std::isfinite(parts.total) || !std::isfinite(parts.l1) || !std::isfinite(parts.stft)) {
          throw Error(ErrorCode::NonFiniteLoss, "epoch " + std::to_string(epoch) + " batch " +
                                                    std::to_string(batch_index) + " record '" + rec->id +
                                                    "': total=" + std::to_string(parts.total) + " l1=" +
                                                    std::to_string(parts.l1) + " stft=" + std::to_string(parts.stft));
        }
        loss_sum += parts.total;
        backward(state.master, model, cache, g_out, grads);
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (auto& g : grads) g *= inv;
      clip_global_norm(grads, cfg.clip_norm);
      adam_step(state.master.values, grads, state.adam, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    }
    state.epochs_done = epoch;

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(n);
    const bool eval_now = !part.eval.empty() && (cfg.eval_each_epoch || epoch == last);
    if (eval_now) stats.eval_loss = mean_loss(state.master, model, part.eval, cfg.loss);
    result.report.epochs.push_back(stats);
    spdlog::debug("epoch {} train {:.6f} eval {}", epoch, stats.train_loss,
                  stats.eval_loss ? std::to_string(*stats.eval_loss) : "-");
    if (on_epoch) on_epoch(stats);

    if (out.checkpoint && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && epoch != last) {
      write_outputs(model, state, data, cfg, *out.checkpoint, nullptr);
    }
  }

  if (out.checkpoint) {
    write_outputs(model, state, data, cfg, *out.checkpoint, &result.checkpoint);
    result.report.final_checkpoint = out.checkpoint->string();
  } else {
    result.checkpoint = make_checkpoint(model, state.master, data.manifest.normalizer, cfg.loss);
    result.checkpoint.metadata = checkpoint_metadata(data, cfg, state.epochs_done);
    serialize(result.checkpoint);
  }
  result.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (out.curve_csv) write_loss_curve(result.report, *out.curve_csv);
  result.state = std::move(state);
  return result;
}

void validate_common(const TrainConfig& c) {
  if (c.batch_size < 1) throw Error(ErrorCode::InvalidConfig, "batch_size must be >= 1");
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) {
    throw Error(ErrorCode::InvalidConfig, "learning_rate must be positive");
  }
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "Adam betas must lie in [0, 1)");
  }
  if (!(c.epsilon > 0.0)) throw Error(ErrorCode::InvalidConfig, "Adam epsilon must be positive");
  if (c.checkpoint_every < 0) throw Error(ErrorCode::InvalidConfig, "checkpoint_every must be >= 0");
  if (!(c.train_fraction > 0.0 && c.train_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "train_fraction must lie in (0, 1]");
  }
  if (!(c.clip_norm >= 0.0)) throw Error(ErrorCode::InvalidConfig, "clip_norm must be >= 0");
  c.loss.validate();
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 1");
  validate_common(*this);
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"loss", to_json(c.loss)},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"split_seed", c.split_seed},
          {"train_fraction", c.train_fraction},
          {"clip_norm", c.clip_norm},
          {"eval_each_epoch", c.eval_each_epoch}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "training config must be a JSON object");
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    if (j.contains("loss")) c.loss = loss_config_from_json(j.at("loss"));
    c.seed = j.value("seed", c.seed);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.split_seed = j.value("split_seed", c.split_seed);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.eval_each_epoch = j.value("eval_each_epoch", c.eval_each_epoch);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("training config: ") + e.what());
  }
  return c;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr, double beta1,
               double beta2, double epsilon) {
  if (grads.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient size differs from parameter size");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw Error(ErrorCode::NonFiniteGradient, "gradient " + std::to_string(i) + " is " + std::to_string(grads[i]));
    }
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "optimizer state size differs from parameter size");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + epsilon);
  }
}

double mean_loss(const Parameters& params, const ModelConfig& model, const std::vector<const TrainingRecord*>& records,
                 const LossConfig& loss) {
  if (records.empty()) throw Error(ErrorCode::InsufficientData, "no records to evaluate");
  std::vector<double> per(records.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto y = forward(params, model, make_conditioning(records[i]->e, records[i]->fs, model));
    per[i] = total_loss(y.samples, records[i]->x.samples, loss).total;
  }
  return std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size());
}

TrainResult train(const ModelConfig& model, const Dataset& data, const TrainConfig& cfg, const TrainOutputs& out,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  model.validate();
  TrainingState state;
  state.master = build(model);
  return run(model, std::move(state), data, cfg, out, on_epoch);
}

TrainResult resume(const Checkpoint& ckpt, TrainingState state, const Dataset& data, const TrainConfig& cfg,
                   const TrainOutputs& out, const EpochCallback& on_epoch) {
  if (cfg.epochs < 0) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 0 when resuming");
  validate_common(cfg);
  if (state.master.size() != ckpt.params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match the checkpoint");
  }
  if (cfg.epochs == 0) {
    TrainResult r;
    r.checkpoint = ckpt;
    r.state = std::move(state);
    return r;
  }
  return run(ckpt.config, std::move(state), data, cfg, out, on_epoch);
}

TrainResult resume(const std::filesystem::path& checkpoint, const Dataset& data, const TrainConfig& cfg,
                   const TrainOutputs& out, const ModelConfig* expected, const EpochCallback& on_epoch) {
  Checkpoint ckpt = load_checkpoint(checkpoint, expected);
  TrainingState state = load_training_state(std::filesystem::path(checkpoint.string() + ".adam"), ckpt.config, ckpt.hash);
  return resume(ckpt, std::move(state), data, cfg, out, on_epoch);
}

// Optimizer sidecar: magic "PSYNADAM", u32 LE header length, JSON header, then
// three little-endian float64 arrays (master parameters, m, v).
void save_training_state(const TrainingState& s, const std::string& checkpoint_hash, const std::filesystem::path& path) {
  const std::size_t n = s.master.size();
  nlohmann::ordered_json header = {{"version", kAdamVersion},
                                   {"checkpoint_sha256", checkpoint_hash},
                                   {"parameter_count", n},
                                   {"step", s.adam.step},
                                   {"epochs_done", s.epochs_done}};
  const std::string text = header.dump();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  const auto len = static_cast<std::uint32_t>(text.size());
  f.write(kAdamMagic, 8);
  f.write(reinterpret_cast<const char*>(&len), 4);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  const std::vector<double> zeros(s.adam.m.empty() ? n : 0, 0.0);
  const auto* m = s.adam.m.empty() ? zeros.data() : s.adam.m.data();
  const auto* v = s.adam.v.empty() ? zeros.data() : s.adam.v.data();
  const auto bytes = static_cast<std::streamsize>(n * sizeof(double));
  f.write(reinterpret_cast<const char*>(s.master.values.data()), bytes);
  f.write(reinterpret_cast<const char*>(m), bytes);
  f.write(reinterpret_cast<const char*>(v), bytes);
  if (!f) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

TrainingState load_training_state(const std::filesystem::path& path, const ModelConfig& model,
                                  const std::string& checkpoint_hash) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "optimizer state " + path.string() + " not found");
  const std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kAdamMagic, 8) != 0) {
    throw Error(ErrorCode::VersionMismatch, path.string() + " is not an optimizer state file");
  }
  std::uint32_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 4);
  if (bytes.size() - 12 < len) throw Error(ErrorCode::HashMismatch, "optimizer state truncated");

  TrainingState s;
  std::size_t n = 0;
  try {
    const auto header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
    if (header.at("version").get<std::string>() != kAdamVersion) {
      throw Error(ErrorCode::VersionMismatch, "optimizer state version mismatch");
    }
    if (header.at("checkpoint_sha256").get<std::string>() != checkpoint_hash) {
      throw Error(ErrorCode::HashMismatch, "optimizer state belongs to a different checkpoint");
    }
    n = header.at("parameter_count").get<std::size_t>();
    s.adam.step = header.at("step").get<std::uint64_t>();
    s.epochs_done = header.at("epochs_done").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("optimizer state header: ") + e.what());
  }
  s.master = layout(model);
  if (s.master.size() != n) throw Error(ErrorCode::ShapeMismatch, "optimizer state parameter count differs");
  if (bytes.size() - 12 - len != 3 * n * sizeof(double)) throw Error(ErrorCode::HashMismatch, "optimizer state truncated");
  const char* p = bytes.data() + 12 + len;
  s.adam.m.resize(n);
  s.adam.v.resize(n);
  std::memcpy(s.master.values.data(), p, n * sizeof(double));
  std::memcpy(s.adam.m.data(), p + n * sizeof(double), n * sizeof(double));
  std::memcpy(s.adam.v.data(), p + 2 * n * sizeof(double), n * sizeof(double));
  check_finite(s.master);
  return s;
}

void write_loss_curve(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  f.precision(9);
  f << "epoch,train_loss,eval_loss\n";
  for (const auto& e : report.epochs) {
    f << e.epoch << ',' << e.train_loss << ',';
    if (e.eval_loss) f << *e.eval_loss;
    f << '\n';
  }
  if (!f) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

}  // namespace psynth
