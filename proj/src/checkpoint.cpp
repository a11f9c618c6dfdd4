#include <cstring>
#include <fstream>
#include <iterator>

#include <openssl/evp.h>

#include "psynth/checkpoint.hpp"
#include "psynth/error.hpp"

namespace psynth {
namespace {

constexpr char kMagic[8] = {'P', 'S', 'Y', 'N', 'C', 'K', 'P', 'T'};
constexpr const char* kVersion = "ckpt-v1";

bool same_architecture(const ModelConfig& a, const ModelConfig& b) {
  return a.encoder_layers == b.encoder_layers && a.base_filters == b.base_filters &&
         a.filter_length == b.filter_length && a.filters_double_every == b.filters_double_every &&
         a.feature_count == b.feature_count && a.internal_length == b.internal_length &&
         a.output_length == b.output_length;
}

nlohmann::ordered_json layers_json(const Parameters& p) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& l : p.layers) {
    arr.push_back({l.shape.in_channels, l.shape.out_channels, l.shape.length, l.shape.stride});
  }
  return arr;
}

std::string digest(const std::string& header, std::span<const std::uint8_t> blob) {
  std::vector<std::uint8_t> all(header.begin(), header.end());
  all.insert(all.end(), blob.begin(), blob.end());
  return sha256_hex(all);
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoError, "SHA-256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xF]);
  }
  return out;
}

void round_to_float32(Parameters& params) {
  for (auto& v : params.values) v = static_cast<double>(static_cast<float>(v));
}

Checkpoint make_checkpoint(const ModelConfig& config, Parameters params, const FeatureNormalizer& normalizer,
                           const LossConfig& loss) {
  round_to_float32(params);
  Checkpoint c;
  c.config = config;
  c.params = std::move(params);
  c.normalizer = normalizer;
  c.loss = loss;
  return c;
}

std::vector<std::uint8_t> serialize(Checkpoint& ckpt) {
  check_finite(ckpt.params);
  std::vector<std::uint8_t> blob(ckpt.params.size() * sizeof(float));
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const float f = static_cast<float>(ckpt.params.values[i]);
    std::memcpy(blob.data() + i * sizeof(float), &f, sizeof(float));
  }

  nlohmann::ordered_json header;
  header["version"] = kVersion;
  header["config"] = to_json(ckpt.config);
  header["normalizer"] = to_json(ckpt.normalizer);
  header["loss"] = to_json(ckpt.loss);
  header["metadata"] = ckpt.metadata;
  header["layers"] = layers_json(ckpt.params);
  header["parameter_count"] = ckpt.params.size();
  ckpt.hash = digest(header.dump(), blob);
  header["sha256"] = ckpt.hash;

  const std::string text = header.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  const auto len = static_cast<std::uint32_t>(text.size());
  const auto* lp = reinterpret_cast<const std::uint8_t*>(&len);
  out.insert(out.end(), lp, lp + 4);
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blob.begin(), blob.end());
  return out;
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes, const ModelConfig* expected) {
  if (bytes.size() < 12) throw Error(ErrorCode::HashMismatch, "checkpoint truncated before header");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw Error(ErrorCode::VersionMismatch, "not a checkpoint file");
  std::uint32_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 4);
  if (bytes.size() - 12 < len) throw Error(ErrorCode::HashMismatch, "checkpoint truncated inside header");

  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::HashMismatch, std::string("checkpoint header unreadable: ") + e.what());
  }
  if (header.value("version", "") != kVersion) {
    throw Error(ErrorCode::VersionMismatch, "checkpoint version '" + header.value("version", "") + "'");
  }

  Checkpoint c;
  try {
    const auto count = header.at("parameter_count").get<std::size_t>();
    const std::span<const std::uint8_t> blob(bytes.data() + 12 + len, bytes.size() - 12 - len);
    const std::string stored = header.at("sha256").get<std::string>();
    auto unsigned_header = header;
    unsigned_header.erase("sha256");
    if (blob.size() != count * sizeof(float) || digest(unsigned_header.dump(), blob) != stored) {
      throw Error(ErrorCode::HashMismatch, "checkpoint content does not match its SHA-256");
    }

    c.config = model_config_from_json(header.at("config"));
    if (expected && !same_architecture(*expected, c.config)) {
      throw Error(ErrorCode::ShapeMismatch, "checkpoint architecture differs from the requested config");
    }
    c.params = layout(c.config);
    if (c.params.size() != count || layers_json(c.params) != header.at("layers")) {
      throw Error(ErrorCode::ShapeMismatch, "stored layer shapes do not match the config");
    }
    for (std::size_t i = 0; i < count; ++i) {
      float f;
      std::memcpy(&f, blob.data() + i * sizeof(float), sizeof(float));
      c.params.values[i] = f;
    }
    c.normalizer = normalizer_from_json(header.at("normalizer"));
    c.loss = loss_config_from_json(header.at("loss"));
    c.metadata = header.at("metadata");
    c.hash = stored;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("checkpoint header: ") + e.what());
  }
  check_finite(c.params);
  return c;
}

std::string save_checkpoint(Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
  return ckpt.hash;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes, expected);
}

}  // namespace psynth
