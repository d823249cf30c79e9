#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "blindseg/common.hpp"

namespace blindseg {

// Mono waveform with samples normalized to [-1, 1].
struct AudioSignal {
  std::vector<double> samples;
  int sample_rate = 0;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

inline std::uint16_t read_u16le(const unsigned char* p) {
  return std::uint16_t(p[0]) | (std::uint16_t(p[1]) << 8);
}

}  // namespace detail

// Reads a RIFF WAV file holding 16-bit linear PCM mono audio. Samples are
// scaled by 1/32768. TIMIT ships NIST SPHERE files; convert them to WAV
// first (e.g. with sph2pipe or sox), this reader does not parse SPHERE.
inline AudioSignal load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("unreadable file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw IoError("unreadable file (not a RIFF WAV): " + path.string());
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::uint32_t chunk_len = detail::read_u32le(chunk + 4);
    std::size_t body = pos + 8;
    if (body + chunk_len > bytes.size()) chunk_len = static_cast<std::uint32_t>(bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0 && chunk_len >= 16) {
      format = detail::read_u16le(chunk + 8);
      channels = detail::read_u16le(chunk + 10);
      rate = detail::read_u32le(chunk + 12);
      bits = detail::read_u16le(chunk + 22);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_len = chunk_len;
    }
    pos = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (!have_fmt || data == nullptr) throw IoError("unreadable file (missing fmt/data chunk): " + path.string());
  if (channels != 1) {
    throw IoError("unsupported channel count (" + std::to_string(channels) + ", expected mono): " +
                  path.string());
  }
  if (format != 1 || bits != 16) {
    throw IoError("unsupported encoding (need 16-bit linear PCM): " + path.string());
  }
  if (rate == 0) throw IoError("unreadable file (zero sample rate): " + path.string());

  AudioSignal sig;
  sig.sample_rate = static_cast<int>(rate);
  std::size_t n = data_len / 2;
  sig.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::int16_t s = static_cast<std::int16_t>(detail::read_u16le(data + 2 * i));
    sig.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return sig;
}

// Writes 16-bit PCM mono WAV; used for fixtures and synthetic audio.
inline void save_wav(const std::filesystem::path& path, const AudioSignal& sig) {
  if (sig.sample_rate <= 0) throw ConfigError("save_wav: sample_rate must be positive");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path.string());

  auto put_u32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  auto put_u16 = [&](std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
  };

  const std::uint32_t data_len = static_cast<std::uint32_t>(sig.samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(static_cast<std::uint32_t>(sig.sample_rate));
  put_u32(static_cast<std::uint32_t>(sig.sample_rate) * 2);
  put_u16(2);
  put_u16(16);
  out.write("data", 4);
  put_u32(data_len);
  for (double v : sig.samples) {
    double clamped = std::max(-1.0, std::min(1.0, v));
    auto s = static_cast<std::int16_t>(std::lround(clamped * 32767.0));
    put_u16(static_cast<std::uint16_t>(s));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace blindseg
