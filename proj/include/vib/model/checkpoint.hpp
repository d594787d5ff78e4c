#pragma once

// Checkpoint layout (little-endian):
//
//   "VIBM" | u32 version | u32 mode (0 baseline, 1 vib) | u32 K | u32 C |
//   f64 beta | parameter tensors in model order, each in VIBF tensor format
//
// The encoder widths and head size are recovered from the tensor shapes.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vib/core/errors.hpp"
#include "vib/dsp/cache.hpp"
#include "vib/model/vib_model.hpp"

namespace vib::model {

inline constexpr char kCheckpointMagic[4] = {'V', 'I', 'B', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void save_checkpoint(const VibModel<T>& m, const std::filesystem::path& path) {
  io::write_atomically(path, [&](std::ostream& os) {
    os.write(kCheckpointMagic, 4);
    io::put<std::uint32_t>(os, kCheckpointVersion);
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(m.mode()));
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(m.is_vib() ? m.config().K : 0));
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(m.classes()));
    io::put<double>(os, m.is_vib() ? m.config().beta : 0.0);
    for (const auto& p : m.params()) {
      std::vector<std::uint64_t> dims(p.value.shape().begin(), p.value.shape().end());
      std::vector<float> f(p.value.data().begin(), p.value.data().end());
      io::write_tensor(os, dims, f.data(), f.size());
    }
  });
}

template <class T>
VibModel<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError(path.string() + ": checkpoint not found");
  io::Reader r(is, path.string());
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) r.fail_at(0, "bad checkpoint magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  const auto mode = r.get<std::uint32_t>("mode");
  if (mode > 1) r.fail("invalid mode flag " + std::to_string(mode));
  const auto K = r.get<std::uint32_t>("K");
  const auto C = r.get<std::uint32_t>("C");
  const auto beta = r.get<double>("beta");

  std::vector<io::RawTensor> tensors;
  while (!r.at_end()) tensors.push_back(io::read_tensor(r));
  const std::size_t expected = 2 * kConvLayers + (mode == 1 ? 6 : 2);
  if (tensors.size() != expected) {
    r.fail("expected " + std::to_string(expected) + " parameter tensors, found " +
           std::to_string(tensors.size()));
  }

  ModelConfig cfg;
  cfg.mode = static_cast<Mode>(mode);
  cfg.classes = C;
  cfg.K = mode == 1 ? K : 0;
  cfg.beta = beta;
  for (std::size_t i = 0; i < kConvLayers; ++i) {
    const auto& d = tensors[2 * i].dims;
    if (d.size() != 4) r.fail("conv kernel " + std::to_string(i + 1) + " is not 4-D");
    cfg.encoder.channels[i] = d[0];
    cfg.encoder.kernel_h[i] = d[2];
    cfg.encoder.kernel_w[i] = d[3];
  }
  // Smallest input extent whose pooled grid matches the head's fan-in.
  const std::size_t flat = tensors[2 * kConvLayers].dims.back();
  const std::size_t pooled_h = (cfg.bands - (min_bands(cfg.encoder) - 2)) / 2;
  const std::size_t per_col = cfg.encoder.channels.back() * pooled_h;
  if (per_col == 0 || flat % per_col != 0) r.fail("head fan-in inconsistent with encoder");
  cfg.frames = 2 * (flat / per_col) + min_frames(cfg.encoder) - 2;

  VibModel<T> m(cfg);
  auto& params = m.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Shape want = params[i].value.shape();
    const Shape got(tensors[i].dims.begin(), tensors[i].dims.end());
    if (want != got) {
      r.fail("parameter " + params[i].name + " has shape " + shape_str(got) +
             ", expected " + shape_str(want));
    }
    std::vector<T> v(tensors[i].data.begin(), tensors[i].data.end());
    params[i].value = Tensor<T>(want, std::move(v));
  }
  return m;
}

}  // namespace vib::model
