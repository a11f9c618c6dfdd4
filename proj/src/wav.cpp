#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <spdlog/spdlog.h>

#include "psynth/audio.hpp"
#include "psynth/error.hpp"

namespace psynth {
namespace {

static_assert(std::endian::native == std::endian::little, "WAV codec assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

void append_tag(std::vector<std::uint8_t>& out, const char (&tag)[5]) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

double quantize_pcm16(double sample) noexcept {
  const double s = std::clamp(sample, -1.0, 1.0);
  const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
  return q / 32768.0;
}

std::pair<Waveform, AudioFileMeta> decode_wav(const std::vector<std::uint8_t>& bytes,
                                              std::string source) {
  const std::size_t n = bytes.size();
  if (n < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::UnsupportedFormat, source + " is not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= n) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const auto size = read_le<std::uint32_t>(chunk + 4);
    if (size > n - pos - 8) {
      throw Error(ErrorCode::CorruptFile, source + ": chunk overruns end of file");
    }
    const std::uint8_t* body = chunk + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw Error(ErrorCode::CorruptFile, source + ": short fmt chunk");
      format = read_le<std::uint16_t>(body);
      channels = read_le<std::uint16_t>(body + 2);
      rate = read_le<std::uint32_t>(body + 4);
      bits = read_le<std::uint16_t>(body + 14);
      if (format == kFormatExtensible) {
        if (size < 26) throw Error(ErrorCode::CorruptFile, source + ": short extensible fmt chunk");
        format = read_le<std::uint16_t>(body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = body;
      data_size = size;
    }
    pos += 8 + size + (size & 1u);
  }
  if (!have_fmt || data == nullptr) {
    throw Error(ErrorCode::CorruptFile, source + ": missing fmt or data chunk");
  }
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32) {
    throw Error(ErrorCode::UnsupportedFormat,
                source + ": codec " + std::to_string(format) + "/" + std::to_string(bits) + " bit");
  }
  if (channels == 0 || rate == 0) {
    throw Error(ErrorCode::CorruptFile, source + ": zero channels or sample rate");
  }

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t frames = data_size / frame_bytes;

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(frames);
  double peak = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + f * frame_bytes + c * bytes_per_sample;
      if (pcm16) {
        acc += read_le<std::int16_t>(p) / 32768.0;
      } else {
        const float v = read_le<float>(p);
        if (!std::isfinite(v)) throw Error(ErrorCode::CorruptFile, source + ": non-finite sample");
        acc += v;
      }
    }
    w.samples[f] = acc / channels;
    peak = std::max(peak, std::abs(w.samples[f]));
  }
  // Float files may exceed full scale; bring them back to [-1, 1].
  if (peak > 1.0) {
    for (auto& s : w.samples) s /= peak;
  }

  AudioFileMeta meta{std::move(source), static_cast<int>(rate), frames, channels};
  return {std::move(w), std::move(meta)};
}

std::pair<Waveform, AudioFileMeta> load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes, path.string());
}

std::vector<std::uint8_t> encode_wav(const Waveform& w, Warnings* warnings) {
  const std::uint32_t data_size = static_cast<std::uint32_t>(w.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  append_tag(out, "RIFF");
  append_le<std::uint32_t>(out, 36 + data_size);
  append_tag(out, "WAVE");
  append_tag(out, "fmt ");
  append_le<std::uint32_t>(out, 16);
  append_le<std::uint16_t>(out, kFormatPcm);
  append_le<std::uint16_t>(out, 1);
  append_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate));
  append_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  append_le<std::uint16_t>(out, 2);
  append_le<std::uint16_t>(out, 16);
  append_tag(out, "data");
  append_le<std::uint32_t>(out, data_size);

  std::size_t clipped = 0;
  for (double s : w.samples) {
    if (!(std::abs(s) <= 1.0)) ++clipped;
    const double q = quantize_pcm16(std::isfinite(s) ? s : 0.0);
    append_le<std::int16_t>(out, static_cast<std::int16_t>(q * 32768.0));
  }
  if (clipped > 0) {
    const std::string msg = "clipped " + std::to_string(clipped) + " samples outside [-1, 1]";
    spdlog::warn("write_wav: {}", msg);
    if (warnings) warnings->push_back(msg);
  }
  return out;
}

void write_wav(const Waveform& w, const std::filesystem::path& path, Warnings* warnings) {
  const auto bytes = encode_wav(w, warnings);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

}  // namespace psynth
