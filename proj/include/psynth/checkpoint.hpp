#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "psynth/features.hpp"
#include "psynth/losses.hpp"
#include "psynth/model.hpp"

namespace psynth {

// Checkpoint container ("ckpt-v1"):
//
//   offset 0   8 bytes   magic "PSYNCKPT"
//   offset 8   u32 LE    header length H
//   offset 12  H bytes   JSON header: version, config, normalizer, loss, metadata,
//                        layers, parameter_count, sha256
//   offset 12+H          parameter_count float32 LE values, layer order as in Parameters
//
// sha256 covers the compact header dump without its "sha256" member, followed by the blob.
struct Checkpoint {
  ModelConfig config;
  Parameters params;
  FeatureNormalizer normalizer;
  LossConfig loss;
  nlohmann::json metadata = nlohmann::json::object();
  std::string hash;  // set by save/load
};

// Rounds every parameter to the nearest float32, the precision stored on disk.
void round_to_float32(Parameters& params);

Checkpoint make_checkpoint(const ModelConfig& config, Parameters params, const FeatureNormalizer& normalizer,
                           const LossConfig& loss = {});

std::vector<std::uint8_t> serialize(Checkpoint& ckpt);  // fills ckpt.hash
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes, const ModelConfig* expected = nullptr);

/// Returns the content hash. Throws NonFiniteParameters or IoError.
std::string save_checkpoint(Checkpoint& ckpt, const std::filesystem::path& path);

/// Validates magic, version, hash and layer shapes. When `expected` is given its
/// architecture must match the stored one (ShapeMismatch otherwise).
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

std::string sha256_hex(std::span<const std::uint8_t> bytes);

}  // namespace psynth
