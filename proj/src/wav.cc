// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mcse/wav.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <vector>

namespace mcse {
namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T load(const std::vector<char>& buf, std::size_t pos) {
  if (pos + sizeof(T) > buf.size()) throw std::runtime_error("truncated WAV header");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  return v;
}

template <typename T>
void store(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

AudioClip read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open WAV file: " + path);
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("not a RIFF/WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  std::size_t data_pos = 0, data_size = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const uint32_t size = load<uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0) {
      format = load<uint16_t>(buf, body);
      channels = load<uint16_t>(buf, body + 2);
      rate = load<uint32_t>(buf, body + 4);
      bits = load<uint16_t>(buf, body + 14);
      if (format == kFormatExtensible) format = load<uint16_t>(buf, body + 24);
      have_fmt = true;
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      data_pos = body;
      data_size = std::min<std::size_t>(size, buf.size() - body);
      break;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt || data_pos == 0) throw std::runtime_error("WAV missing fmt or data chunk: " + path);
  if (channels == 0) throw std::runtime_error("WAV has zero channels: " + path);

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32)
    throw std::runtime_error("unsupported WAV encoding (need 16-bit PCM or 32-bit float): " + path);

  const std::size_t bytes = bits / 8;
  const std::size_t frames = data_size / (bytes * channels);
  AudioClip clip(channels, frames, static_cast<int>(rate));
  const char* p = buf.data() + data_pos;
  for (std::size_t i = 0; i < frames; ++i) {
    for (uint16_t c = 0; c < channels; ++c, p += bytes) {
      if (pcm16) {
        int16_t v;
        std::memcpy(&v, p, 2);
        clip.samples[c][i] = v / 32768.0;
      } else {
        float v;
        std::memcpy(&v, p, 4);
        clip.samples[c][i] = v;
      }
    }
  }
  return clip;
}

void write_wav(const std::string& path, const AudioClip& clip, WavFormat format) {
  clip.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write WAV file: " + path);
  const uint16_t channels = static_cast<uint16_t>(clip.channel_count());
  const uint16_t bits = format == WavFormat::kPcm16 ? 16 : 32;
  const uint16_t block = channels * bits / 8;
  const uint32_t data_size = static_cast<uint32_t>(clip.length() * block);

  out.write("RIFF", 4);
  store<uint32_t>(out, 36 + data_size);
  out.write("WAVEfmt ", 8);
  store<uint32_t>(out, 16);
  store<uint16_t>(out, format == WavFormat::kPcm16 ? kFormatPcm : kFormatFloat);
  store<uint16_t>(out, channels);
  store<uint32_t>(out, static_cast<uint32_t>(clip.sample_rate));
  store<uint32_t>(out, static_cast<uint32_t>(clip.sample_rate) * block);
  store<uint16_t>(out, block);
  store<uint16_t>(out, bits);
  out.write("data", 4);
  store<uint32_t>(out, data_size);
  for (std::size_t i = 0; i < clip.length(); ++i) {
    for (uint16_t c = 0; c < channels; ++c) {
      const double x = clip.samples[c][i];
      if (format == WavFormat::kPcm16) {
        const double scaled = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
        store<int16_t>(out, static_cast<int16_t>(scaled));
      } else {
        store<float>(out, static_cast<float>(x));
      }
    }
  }
  if (!out) throw std::runtime_error("failed writing WAV file: " + path);
}

}  // namespace mcse
