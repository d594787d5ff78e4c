#pragma once

// Little-endian tensor container shared by the feature cache and model
// checkpoints:
//
//   "VIBF" | u32 version = 1 | u32 ndim | ndim x u64 dims | f32 payload
//
// Feature files hold exactly one 2-D tensor (40, T).

#include <atomic>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "vib/core/errors.hpp"
#include "vib/dsp/features.hpp"

namespace vib::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

inline constexpr char kTensorMagic[4] = {'V', 'I', 'B', 'F'};
inline constexpr std::uint32_t kTensorVersion = 1;

struct RawTensor {
  std::vector<std::uint64_t> dims;
  std::vector<float> data;
};

template <class V>
void put(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

// Tracks the absolute byte offset so errors can point into the file.
class Reader {
 public:
  Reader(std::istream& is, std::string name) : is_(is), name_(std::move(name)) {}

  template <class V>
  V get(const char* what) {
    V v;
    bytes(&v, sizeof(V), what);
    return v;
  }

  void bytes(void* dst, std::size_t n, const char* what) {
    is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      fail(std::string("truncated while reading ") + what);
    }
    offset_ += n;
  }

  bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }
  std::uint64_t offset() const { return offset_; }

  [[noreturn]] void fail(const std::string& msg) const { fail_at(offset_, msg); }
  [[noreturn]] void fail_at(std::uint64_t offset, const std::string& msg) const {
    throw FormatError(name_ + ": " + msg + " at byte offset " + std::to_string(offset));
  }

 private:
  std::istream& is_;
  std::string name_;
  std::uint64_t offset_ = 0;
};

inline void write_tensor(std::ostream& os, const std::vector<std::uint64_t>& dims,
                         const float* data, std::size_t count) {
  os.write(kTensorMagic, 4);
  put<std::uint32_t>(os, kTensorVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(dims.size()));
  for (std::uint64_t d : dims) put<std::uint64_t>(os, d);
  os.write(reinterpret_cast<const char*>(data),
           static_cast<std::streamsize>(count * sizeof(float)));
}

inline RawTensor read_tensor(Reader& r) {
  char magic[4];
  const std::uint64_t start = r.offset();
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kTensorMagic, 4) != 0) {
    r.fail_at(start, "bad tensor magic");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kTensorVersion) r.fail("unsupported tensor version " + std::to_string(version));
  const auto ndim = r.get<std::uint32_t>("ndim");
  if (ndim == 0 || ndim > 8) r.fail("implausible ndim " + std::to_string(ndim));
  RawTensor t;
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    const auto d = r.get<std::uint64_t>("dims");
    if (d == 0 || d > (1ULL << 32)) r.fail("implausible dimension " + std::to_string(d));
    t.dims.push_back(d);
    count *= d;
    if (count > (1ULL << 30)) r.fail("tensor too large");
  }
  t.data.resize(count);
  r.bytes(t.data.data(), count * sizeof(float), "payload");
  return t;
}

/// Writes to a sibling temp file and renames over the destination, so
/// readers never observe a partial file.
template <class WriteFn>
void write_atomically(const std::filesystem::path& path, WriteFn&& fn) {
  static std::atomic<std::uint64_t> counter{0};
  auto tmp = path;
  std::ostringstream suffix;
  suffix << ".tmp." << std::hash<std::string>{}(path.string()) << '.' << counter++;
  tmp += suffix.str();
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError(tmp.string() + ": cannot open for writing");
    fn(os);
    os.flush();
    if (!os) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw FormatError(tmp.string() + ": write failed");
    }
  }
  std::filesystem::rename(tmp, path);
}

inline void write_cache(const dsp::FeatureMatrix& fm, const std::filesystem::path& path) {
  if (fm.values.size() != fm.bands * fm.frames) {
    throw DimensionError("write_cache: feature grid size does not match dims");
  }
  write_atomically(path, [&](std::ostream& os) {
    write_tensor(os, {fm.bands, fm.frames}, fm.values.data(), fm.values.size());
  });
}

/// Reads a feature cache. Provenance fields (clip_seconds, dataset_id) are
/// not part of the format and come back empty.
inline dsp::FeatureMatrix read_cache(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(path.string() + ": cannot open feature cache");
  Reader r(is, path.string());
  RawTensor t = read_tensor(r);
  if (t.dims.size() != 2) r.fail("feature cache must be 2-D");
  if (!r.at_end()) r.fail("trailing bytes after payload");
  dsp::FeatureMatrix fm;
  fm.bands = t.dims[0];
  fm.frames = t.dims[1];
  fm.values = std::move(t.data);
  return fm;
}

inline std::uintmax_t cache_file_size(std::size_t bands, std::size_t frames) {
  return 4 + 4 + 4 + 2 * 8 + bands * frames * 4;
}

}  // namespace vib::io
