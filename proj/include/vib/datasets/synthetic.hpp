#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "vib/core/errors.hpp"
#include "vib/core/rng.hpp"
#include "vib/dsp/resample.hpp"
#include "vib/dsp/wav.hpp"
#include "vib/eval/manifest.hpp"

namespace vib::datasets {

// Tone-in-noise toy corpus: class c is a sinusoid near centre_hz[c] buried
// in white noise. Frequency jitter and a random SNR make neighbouring
// classes overlap, so a small training set can be memorised but not solved.
struct ToneSpec {
  std::vector<double> centre_hz{500.0, 700.0, 950.0, 1250.0, 1650.0};
  double jitter = 0.08;        // relative frequency spread (uniform +-)
  double snr_db_lo = -30.0;    // tone power over total noise power
  double snr_db_hi = -18.0;
  double seconds = 0.66;  // 32 frames, the encoder minimum
  double sample_rate = 44100.0;
  double noise_rms = 0.1;

  std::size_t classes() const { return centre_hz.size(); }
};

/// Clip `index` of class `label`; a pure function of (spec, seed, label, index).
inline dsp::AudioClip tone_clip(const ToneSpec& spec, std::uint64_t seed, std::size_t label,
                                std::uint64_t index) {
  if (label >= spec.classes()) throw InputError("tone_clip: label out of range");
  Rng rng = make_rng(seed, "synthetic", index * 1000003ULL + label);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, spec.noise_rms);
  const double f = spec.centre_hz[label] * (1.0 + spec.jitter * (2.0 * u(rng) - 1.0));
  const double snr_db = spec.snr_db_lo + (spec.snr_db_hi - spec.snr_db_lo) * u(rng);
  const double phase = 2.0 * std::numbers::pi * u(rng);
  // Sine power is A^2/2.
  const double amp = spec.noise_rms * std::sqrt(2.0 * std::pow(10.0, snr_db / 10.0));
  const auto n = static_cast<std::size_t>(std::llround(spec.seconds * spec.sample_rate));
  dsp::AudioClip clip;
  clip.sample_rate = spec.sample_rate;
  clip.samples.resize(n);
  const double w = 2.0 * std::numbers::pi * f / spec.sample_rate;
  for (std::size_t i = 0; i < n; ++i) {
    clip.samples[i] = amp * std::sin(w * static_cast<double>(i) + phase) + nd(rng);
  }
  clip.source_path = "tone-" + std::to_string(label) + "-" + std::to_string(index);
  return clip;
}

struct LabeledClip {
  dsp::AudioClip clip;
  std::size_t label = 0;
};

/// `per_class` clips of every class, class-major. `offset` shifts the clip
/// indices so train and validation draws never coincide.
inline std::vector<LabeledClip> tone_set(const ToneSpec& spec, std::uint64_t seed,
                                         std::size_t per_class, std::uint64_t offset) {
  std::vector<LabeledClip> out;
  for (std::size_t c = 0; c < spec.classes(); ++c) {
    for (std::size_t i = 0; i < per_class; ++i) out.push_back({tone_clip(spec, seed, c, offset + i), c});
  }
  return out;
}

/// Writes train/valid/test clips as 16-bit WAV files under `dir` and returns
/// the matching manifest (paths relative to nothing, i.e. as written).
inline eval::Manifest write_tone_corpus(const ToneSpec& spec, std::uint64_t seed,
                                        const std::filesystem::path& dir, std::size_t train,
                                        std::size_t valid, std::size_t test) {
  std::filesystem::create_directories(dir);
  eval::Manifest m;
  m.dataset_id = "custom";
  m.class_count = spec.classes();
  m.clip_seconds = spec.seconds;
  const std::pair<eval::Split, std::size_t> parts[] = {
      {eval::Split::train, train}, {eval::Split::valid, valid}, {eval::Split::test, test}};
  std::uint64_t offset = 0;
  for (const auto& [split, count] : parts) {
    for (const auto& lc : tone_set(spec, seed, count, offset)) {
      const auto path = dir / (lc.clip.source_path + ".wav");
      dsp::write_wav(path, lc.clip.samples, static_cast<std::uint32_t>(lc.clip.sample_rate), 1,
                     dsp::WavEncoding::pcm16);
      m.rows.push_back({path.generic_string(), lc.label, split});
    }
    offset += 100000;
  }
  return m;
}

}  // namespace vib::datasets
