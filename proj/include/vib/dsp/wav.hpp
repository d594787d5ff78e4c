#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "vib/core/errors.hpp"

namespace vib::dsp {

struct AudioClip {
  std::vector<double> samples;  // mono, nominally in [-1, 1]
  double sample_rate = 0.0;
  std::string source_path;

  double seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

namespace detail {

inline std::uint32_t le_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}
inline std::uint16_t le_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

}  // namespace detail

/// Decodes a PCM (8/16/24/32-bit integer) or 32-bit IEEE float WAV file.
/// Channels are averaged to mono; integers are scaled by the type's maximum
/// magnitude (2^(bits-1)).
inline AudioClip load_wav(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError(where + ": cannot open file");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw IngestionError(where + ": not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* id = buf.data() + pos;
    std::size_t len = detail::le_u32(buf.data() + pos + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = buf.size() - body;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16 || len > avail) throw IngestionError(where + ": truncated fmt chunk");
      const unsigned char* f = buf.data() + body;
      format = detail::le_u16(f);
      channels = detail::le_u16(f + 2);
      rate = detail::le_u32(f + 4);
      bits = detail::le_u16(f + 14);
      if (format == 0xFFFE && len >= 26) format = detail::le_u16(f + 24);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = buf.data() + body;
      data_len = std::min(len, avail);  // tolerate writers that leave len unset
    }
    pos = body + len + (len & 1);
  }

  if (!have_fmt) throw IngestionError(where + ": missing fmt chunk");
  if (format != 1 && format != 3) {
    throw IngestionError(where + ": unsupported (compressed) WAV format tag " +
                         std::to_string(format));
  }
  if (format == 3 && bits != 32) {
    throw IngestionError(where + ": only 32-bit float WAV is supported");
  }
  if (format == 1 && bits != 8 && bits != 16 && bits != 24 && bits != 32) {
    throw IngestionError(where + ": unsupported PCM bit depth " + std::to_string(bits));
  }
  if (channels == 0 || rate == 0) throw IngestionError(where + ": invalid channel count or rate");
  if (data == nullptr || data_len == 0) throw IngestionError(where + ": no audio samples");

  const std::size_t width = bits / 8;
  const std::size_t frames = data_len / (width * channels);
  if (frames == 0) throw IngestionError(where + ": no audio samples");

  AudioClip clip;
  clip.sample_rate = rate;
  clip.source_path = where;
  clip.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + (f * channels + c) * width;
      double v = 0.0;
      if (format == 3) {
        float x;
        std::uint32_t u = detail::le_u32(p);
        std::memcpy(&x, &u, 4);
        v = x;
      } else if (bits == 8) {
        v = (static_cast<int>(p[0]) - 128) / 128.0;
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(detail::le_u16(p)) / 32768.0;
      } else if (bits == 24) {
        std::int32_t x = std::int32_t(p[0]) | (std::int32_t(p[1]) << 8) |
                         (std::int32_t(p[2]) << 16);
        if (x & 0x800000) x -= 0x1000000;
        v = x / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(detail::le_u32(p)) / 2147483648.0;
      }
      acc += v;
    }
    const double mono = acc / channels;
    if (!std::isfinite(mono)) throw IngestionError(where + ": non-finite sample");
    clip.samples[f] = mono;
  }
  return clip;
}

enum class WavEncoding { pcm16, float32 };

/// Writes interleaved frames (`channels` samples per frame).
inline void write_wav(const std::filesystem::path& path,
                      const std::vector<double>& interleaved, std::uint32_t rate,
                      std::uint16_t channels = 1,
                      WavEncoding enc = WavEncoding::pcm16) {
  const std::uint16_t bits = enc == WavEncoding::pcm16 ? 16 : 32;
  const std::uint32_t data_len =
      static_cast<std::uint32_t>(interleaved.size() * (bits / 8));
  std::vector<unsigned char> out;
  out.reserve(44 + data_len);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  detail::put_u32(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::put_u32(out, 16);
  detail::put_u16(out, enc == WavEncoding::pcm16 ? 1 : 3);
  detail::put_u16(out, channels);
  detail::put_u32(out, rate);
  detail::put_u32(out, rate * channels * (bits / 8));
  detail::put_u16(out, static_cast<std::uint16_t>(channels * (bits / 8)));
  detail::put_u16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  detail::put_u32(out, data_len);
  for (double s : interleaved) {
    if (enc == WavEncoding::pcm16) {
      const double c = std::clamp(s, -1.0, 32767.0 / 32768.0);
      detail::put_u16(out, static_cast<std::uint16_t>(
                               static_cast<std::int16_t>(std::lround(c * 32768.0))));
    } else {
      float f = static_cast<float>(s);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      detail::put_u32(out, u);
    }
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IngestionError(path.string() + ": cannot open for writing");
  os.write(reinterpret_cast<const char*>(out.data()),
           static_cast<std::streamsize>(out.size()));
  if (!os) throw IngestionError(path.string() + ": write failed");
}

}  // namespace vib::dsp
