#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "psynth/checkpoint.hpp"
#include "psynth/dataset.hpp"
#include "psynth/losses.hpp"
#include "psynth/model.hpp"

namespace psynth {

struct TrainConfig {
  int epochs = 2500;
  std::size_t batch_size = 16;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LossConfig loss;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs; 0 writes only the final checkpoint
  std::uint64_t split_seed = 0;
  double train_fraction = 0.9;
  double clip_norm = 10.0;  // global-norm clipping; 0 disables
  bool eval_each_epoch = true;

  void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& c);
// Missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update in place. Throws NonFiniteGradient.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr, double beta1,
               double beta2, double epsilon);

struct EpochStats {
  int epoch = 0;  // 1-based, counted across resumes
  double train_loss = 0.0;
  std::optional<double> eval_loss;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  double wall_seconds = 0.0;
  std::string final_checkpoint;
};

// Full-precision optimizer state kept beside a checkpoint (<ckpt>.adam) so a
// resumed run continues exactly where the previous one stopped.
struct TrainingState {
  Parameters master;  // double precision
  AdamState adam;
  int epochs_done = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainReport report;
  TrainingState state;
};

struct TrainOutputs {
  std::optional<std::filesystem::path> checkpoint;  // also writes <checkpoint>.adam
  std::optional<std::filesystem::path> curve_csv;
};

using EpochCallback = std::function<void(const EpochStats&)>;

TrainResult train(const ModelConfig& model, const Dataset& data, const TrainConfig& cfg, const TrainOutputs& out = {},
                  const EpochCallback& on_epoch = {});

// Continues from a checkpoint and its optimizer state for cfg.epochs further epochs.
TrainResult resume(const std::filesystem::path& checkpoint, const Dataset& data, const TrainConfig& cfg,
                   const TrainOutputs& out = {}, const ModelConfig* expected = nullptr, const EpochCallback& on_epoch = {});

TrainResult resume(const Checkpoint& ckpt, TrainingState state, const Dataset& data, const TrainConfig& cfg,
                   const TrainOutputs& out = {}, const EpochCallback& on_epoch = {});

/// Mean total loss of the model over the given records.
double mean_loss(const Parameters& params, const ModelConfig& model, const std::vector<const TrainingRecord*>& records,
                 const LossConfig& loss);

void save_training_state(const TrainingState& s, const std::string& checkpoint_hash, const std::filesystem::path& path);
TrainingState load_training_state(const std::filesystem::path& path, const ModelConfig& model,
                                  const std::string& checkpoint_hash);

void write_loss_curve(const TrainReport& report, const std::filesystem::path& path);

}  // namespace psynth
