#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "psynth/audio.hpp"
#include "psynth/features.hpp"

namespace psynth {

struct PreprocessParams {
  int sample_rate = kSampleRate;
  std::size_t length = kSoundLength;
  double trim_db = kDefaultTrimDb;
  double attack_ms = 5.0;
  double release_ms = 50.0;

  bool operator==(const PreprocessParams&) const = default;
};

struct TrainingRecord {
  std::string id;
  Waveform x;
  Envelope e;
  TimbralVector fs_raw;
  TimbralVector fs;
};

struct ManifestEntry {
  std::string id;
  std::string source;
  TimbralVector fs_raw;
  TimbralVector fs;
};

struct DatasetManifest {
  std::string name;
  PreprocessParams params;
  FeatureNormalizer normalizer;
  std::vector<ManifestEntry> records;
};

struct OracleParams {
  double f0 = 60.0;
  double pitch_sweep_depth = 0.0;
  double amp_decay_ms = 200.0;
  double noise_mix = 0.0;
  double noise_decay_ms = 50.0;
  double click_level = 0.0;
  std::uint64_t seed = 0;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<TrainingRecord> records;  // same order as manifest.records
};

// Resample, trim, pad/truncate and quantize to the 16-bit grid so the stored
// WAV holds exactly the record's samples.
Waveform preprocess(const Waveform& raw, const PreprocessParams& params, Warnings* warnings = nullptr);

// Envelope and raw features of an already preprocessed waveform; fs is left unset.
TrainingRecord make_record(std::string id, Waveform x, const PreprocessParams& params);

/// Every *.wav directly inside `dir`, in lexicographic order. Unreadable or
/// silent files are logged and skipped. Throws InsufficientData below two records.
DatasetManifest ingest(const std::filesystem::path& dir, const std::filesystem::path& out,
                       const PreprocessParams& params = {}, std::vector<std::string>* skipped = nullptr);

Waveform synth_oracle(const OracleParams& p, std::size_t n = kSoundLength, int sample_rate = kSampleRate);
void validate(const OracleParams& p);

// Sampling ranges used by build_oracle_dataset.
OracleParams sample_oracle_params(std::uint64_t seed, std::size_t index);

DatasetManifest build_oracle_dataset(std::size_t count, std::uint64_t seed, const std::filesystem::path& out);

// In-memory variant of build_oracle_dataset; nothing touches disk.
Dataset make_oracle_dataset(std::size_t count, std::uint64_t seed);

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> eval;
};

// Seeded shuffle, then ceil(train_fraction * N) ids for training.
Split split(const DatasetManifest& manifest, double train_fraction = 0.9, std::uint64_t seed = 0);
Split split_ids(std::vector<std::string> ids, double train_fraction, std::uint64_t seed);

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Manifest plus every record, with invariants checked.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace psynth
