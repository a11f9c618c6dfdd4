#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>

#include <spdlog/spdlog.h>

#include "psynth/dataset.hpp"
#include "psynth/error.hpp"
#include "psynth/json_io.hpp"

namespace psynth {
namespace fs = std::filesystem;
namespace {

constexpr std::size_t kClickSamples = 32;
constexpr double kOraclePeak = 0.9;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ (index * 0xD1B54A32D192ED03ull));
}

bool is_wav(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".wav";
}

nlohmann::ordered_json params_json(const PreprocessParams& p) {
  return {{"sample_rate", p.sample_rate},
          {"length", p.length},
          {"trim_db", p.trim_db},
          {"envelope_attack_ms", p.attack_ms},
          {"envelope_release_ms", p.release_ms}};
}

PreprocessParams params_from_json(const nlohmann::json& j) {
  PreprocessParams p;
  p.sample_rate = j.at("sample_rate").get<int>();
  p.length = j.at("length").get<std::size_t>();
  p.trim_db = j.at("trim_db").get<double>();
  p.attack_ms = j.at("envelope_attack_ms").get<double>();
  p.release_ms = j.at("envelope_release_ms").get<double>();
  return p;
}

nlohmann::ordered_json oracle_json(const OracleParams& p) {
  return {{"f0", p.f0},
          {"pitch_sweep_depth", p.pitch_sweep_depth},
          {"amp_decay_ms", p.amp_decay_ms},
          {"noise_mix", p.noise_mix},
          {"noise_decay_ms", p.noise_decay_ms},
          {"click_level", p.click_level},
          {"seed", p.seed}};
}

// Normalizer fit, then per-record files and the manifest.
DatasetManifest finalize(std::string name, const PreprocessParams& params, std::vector<TrainingRecord>& records,
                         const std::vector<std::string>& sources,
                         const std::vector<std::optional<OracleParams>>& oracle, const fs::path* out) {
  if (records.size() < 2) {
    throw Error(ErrorCode::InsufficientData, "need at least two usable sounds, have " + std::to_string(records.size()));
  }
  std::vector<TimbralVector> raw;
  raw.reserve(records.size());
  for (const auto& r : records) raw.push_back(r.fs_raw);

  DatasetManifest m;
  m.name = std::move(name);
  m.params = params;
  m.normalizer = fit_normalizer(raw);
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].fs = normalize(m.normalizer, records[i].fs_raw);
    m.records.push_back({records[i].id, sources[i], records[i].fs_raw, records[i].fs});
  }

  if (out != nullptr) {
    fs::create_directories(*out);
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      write_wav(r.x, *out / (r.id + ".wav"));
      nlohmann::ordered_json side;
      side["id"] = r.id;
      side["source"] = sources[i];
      side["features_raw"] = to_json(r.fs_raw);
      side["features"] = to_json(r.fs);
      if (oracle[i]) side["oracle"] = oracle_json(*oracle[i]);
      write_json_file(*out / (r.id + ".features.json"), side);
    }
    save_manifest(m, *out / "manifest.json");
  }
  return m;
}

}  // namespace

Waveform preprocess(const Waveform& raw, const PreprocessParams& params, Warnings* warnings) {
  Waveform w = resample(raw, params.sample_rate);
  w = trim_silence(w, params.trim_db);
  w = pad_to_length(w, params.length, warnings);
  for (auto& s : w.samples) s = quantize_pcm16(s);
  return w;
}

TrainingRecord make_record(std::string id, Waveform x, const PreprocessParams& params) {
  TrainingRecord r;
  r.id = std::move(id);
  r.e = envelope_follow(x, params.attack_ms, params.release_ms);
  r.fs_raw = extract_timbral(x);
  r.x = std::move(x);
  return r;
}

DatasetManifest ingest(const fs::path& dir, const fs::path& out, const PreprocessParams& params,
                       std::vector<std::string>* skipped) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoError, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_wav(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  // Stable, unique ids from file stems.
  std::vector<std::string> ids;
  std::map<std::string, int> seen;
  for (const auto& f : files) {
    std::string stem = f.stem().string();
    std::replace_if(stem.begin(), stem.end(), [](unsigned char c) { return !std::isalnum(c) && c != '-' && c != '_'; }, '_');
    const int n = seen[stem]++;
    ids.push_back(n == 0 ? stem : stem + "_" + std::to_string(n + 1));
  }

  std::vector<std::optional<TrainingRecord>> results(files.size());
  std::vector<std::string> errors(files.size());
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < static_cast<long long>(files.size()); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      Warnings warnings;
      auto [raw, meta] = load_wav(files[idx]);
      results[idx] = make_record(ids[idx], preprocess(raw, params, &warnings), params);
    } catch (const std::exception& e) {
      errors[idx] = e.what();
    }
  }

  std::vector<TrainingRecord> records;
  std::vector<std::string> sources;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (results[i]) {
      records.push_back(std::move(*results[i]));
      sources.push_back(files[i].string());
    } else {
      spdlog::warn("ingest: skipping {}: {}", files[i].string(), errors[i]);
      if (skipped) skipped->push_back(files[i].string() + ": " + errors[i]);
    }
  }
  const std::vector<std::optional<OracleParams>> no_oracle(records.size());
  return finalize(dir.filename().string(), params, records, sources, no_oracle, &out);
}

void validate(const OracleParams& p) {
  if (!(p.f0 >= 30.0 && p.f0 <= 4000.0)) throw Error(ErrorCode::InvalidArgument, "oracle f0 must lie in [30, 4000] Hz");
  if (!(p.amp_decay_ms > 0.0) || !(p.noise_decay_ms > 0.0)) throw Error(ErrorCode::InvalidArgument, "oracle decays must be positive");
  if (!(p.noise_mix >= 0.0 && p.noise_mix <= 1.0)) throw Error(ErrorCode::InvalidArgument, "oracle noise_mix must lie in [0, 1]");
  if (!(p.click_level >= 0.0 && p.click_level <= 1.0)) throw Error(ErrorCode::InvalidArgument, "oracle click_level must lie in [0, 1]");
  if (!(p.pitch_sweep_depth >= 0.0)) throw Error(ErrorCode::InvalidArgument, "oracle pitch_sweep_depth must be non-negative");
}

Waveform synth_oracle(const OracleParams& p, std::size_t n, int sample_rate) {
  validate(p);
  const double sr = sample_rate;
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(n);
  double phase = 0.0;  // cycles
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i);
    const double amp = std::exp(-t / (sr * p.amp_decay_ms * 1e-3));
    const double freq = p.f0 * (1.0 + p.pitch_sweep_depth * std::exp(-t / (0.01 * sr)));
    const double noise_env = std::exp(-t / (sr * p.noise_decay_ms * 1e-3));
    const double noise = uni(rng);
    double x = amp * std::sin(2.0 * std::numbers::pi * phase) + p.noise_mix * noise_env * noise;
    if (i < kClickSamples) x += p.click_level * (1.0 - t / kClickSamples) * (i % 2 == 0 ? 1.0 : -1.0);
    w.samples[i] = x;
    phase += freq / sr;
    phase -= std::floor(phase);
  }
  const double peak = peak_abs(w);
  if (peak > 0.0) {
    for (auto& s : w.samples) s *= kOraclePeak / peak;
  }
  return w;
}

OracleParams sample_oracle_params(std::uint64_t seed, std::size_t index) {
  std::mt19937_64 rng(derive_seed(seed, index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  OracleParams p;
  p.f0 = 40.0 * std::pow(2000.0 / 40.0, unit(rng));
  p.pitch_sweep_depth = 2.0 * unit(rng);
  p.amp_decay_ms = 30.0 + 470.0 * unit(rng);
  p.noise_mix = unit(rng);
  p.noise_decay_ms = 30.0 + 470.0 * unit(rng);
  p.click_level = unit(rng);
  p.seed = derive_seed(seed ^ 0xA5A5A5A5ull, index);
  return p;
}

namespace {

struct OracleBuild {
  std::vector<TrainingRecord> records;
  std::vector<std::string> sources;
  std::vector<std::optional<OracleParams>> params;
};

OracleBuild generate_oracle(std::size_t count, std::uint64_t seed, const PreprocessParams& pp) {
  if (count < 8) throw Error(ErrorCode::InsufficientData, "oracle dataset needs at least 8 records");
  OracleBuild b;
  b.records.resize(count);
  b.params.resize(count);
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < static_cast<long long>(count); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const auto p = sample_oracle_params(seed, idx);
    char id[32];
    std::snprintf(id, sizeof id, "oracle_%05zu", idx);
    b.records[idx] = make_record(id, preprocess(synth_oracle(p), pp), pp);
    b.params[idx] = p;
  }
  for (const auto& r : b.records) b.sources.push_back("oracle:" + r.id);
  return b;
}

}  // namespace

DatasetManifest build_oracle_dataset(std::size_t count, std::uint64_t seed, const fs::path& out) {
  const PreprocessParams pp;
  auto b = generate_oracle(count, seed, pp);
  return finalize("ORACLE", pp, b.records, b.sources, b.params, &out);
}

Dataset make_oracle_dataset(std::size_t count, std::uint64_t seed) {
  const PreprocessParams pp;
  auto b = generate_oracle(count, seed, pp);
  Dataset d;
  d.manifest = finalize("ORACLE", pp, b.records, b.sources, b.params, nullptr);
  d.records = std::move(b.records);
  return d;
}

Split split_ids(std::vector<std::string> ids, double train_fraction, std::uint64_t seed) {
  if (ids.size() < 2) throw Error(ErrorCode::InsufficientData, "split needs at least two records");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw Error(ErrorCode::InvalidArgument, "train_fraction must lie in (0, 1]");
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n_train = std::min(ids.size(), static_cast<std::size_t>(std::ceil(train_fraction * ids.size() - 1e-9)));
  Split s;
  s.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.eval.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  return s;
}

Split split(const DatasetManifest& manifest, double train_fraction, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& r : manifest.records) ids.push_back(r.id);
  return split_ids(std::move(ids), train_fraction, seed);
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  nlohmann::ordered_json j;
  j["version"] = "dataset-v1";
  j["name"] = m.name;
  j["preprocessing"] = params_json(m.params);
  j["normalizer"] = to_json(m.normalizer);
  auto records = nlohmann::ordered_json::array();
  for (const auto& r : m.records) {
    records.push_back({{"id", r.id}, {"source", r.source}, {"features_raw", to_json(r.fs_raw)}, {"features", to_json(r.fs)}});
  }
  j["records"] = std::move(records);
  write_json_file(path, j);
}

DatasetManifest load_manifest(const fs::path& path) {
  const auto j = read_json_file(path);
  if (j.value("version", "") != "dataset-v1") throw Error(ErrorCode::VersionMismatch, path.string() + ": expected dataset-v1");
  DatasetManifest m;
  try {
    m.name = j.at("name").get<std::string>();
    m.params = params_from_json(j.at("preprocessing"));
    m.normalizer = normalizer_from_json(j.at("normalizer"));
    std::set<std::string> ids;
    for (const auto& r : j.at("records")) {
      ManifestEntry e;
      e.id = r.at("id").get<std::string>();
      e.source = r.at("source").get<std::string>();
      e.fs_raw = timbral_from_json(r.at("features_raw"), false);
      e.fs = timbral_from_json(r.at("features"), true);
      if (!ids.insert(e.id).second) throw Error(ErrorCode::CorruptFile, "duplicate record id " + e.id);
      m.records.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": " + e.what());
  }
  return m;
}

Dataset load_dataset(const fs::path& dir) {
  Dataset d;
  d.manifest = load_manifest(dir / "manifest.json");
  const auto& pp = d.manifest.params;
  d.records.resize(d.manifest.records.size());
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < static_cast<long long>(d.records.size()); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const auto& entry = d.manifest.records[idx];
    auto [x, meta] = load_wav(dir / (entry.id + ".wav"));
    auto& r = d.records[idx];
    r.id = entry.id;
    r.e = envelope_follow(x, pp.attack_ms, pp.release_ms);
    r.x = std::move(x);
    r.fs_raw = entry.fs_raw;
    r.fs = entry.fs;
  }
  for (const auto& r : d.records) {
    if (r.x.sample_rate != pp.sample_rate || r.x.size() != pp.length || r.e.size() != pp.length) {
      throw Error(ErrorCode::ShapeMismatch, "record " + r.id + " does not match the manifest's preprocessing");
    }
  }
  return d;
}

}  // namespace psynth
