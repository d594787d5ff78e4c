#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <vector>

#include "vib/core/errors.hpp"
#include "vib/dsp/wav.hpp"

namespace vib::dsp {

inline constexpr double kTargetRate = 44100.0;
inline constexpr int kResampleTaps = 64;
inline constexpr double kResampleKaiserBeta = 8.0;

namespace detail {

inline double kaiser(double x, double half_width, double beta) {
  const double r = x / half_width;
  if (r <= -1.0 || r >= 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - r * r)) /
         std::cyl_bessel_i(0.0, beta);
}

inline double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace detail

/// Rational-ratio polyphase resampler with a Kaiser-windowed sinc kernel.
///
/// Output sample n sits at input time t = n * M / L (L/M = out/in rate in
/// lowest terms). Each of the L phases owns a 64-tap filter whose cutoff is
/// the lower of the two Nyquist frequencies; taps are normalised to unit DC
/// gain.
inline AudioClip resample(const AudioClip& clip, double target_rate = kTargetRate) {
  if (!(clip.sample_rate > 0.0)) {
    throw InputError("resample: source rate must be positive");
  }
  if (clip.sample_rate == target_rate) return clip;
  const auto in_rate = static_cast<std::uint64_t>(std::llround(clip.sample_rate));
  const auto out_rate = static_cast<std::uint64_t>(std::llround(target_rate));
  if (static_cast<double>(in_rate) != clip.sample_rate ||
      static_cast<double>(out_rate) != target_rate) {
    throw InputError("resample: sample rates must be whole numbers of Hz");
  }
  const std::uint64_t g = std::gcd(in_rate, out_rate);
  const std::uint64_t L = out_rate / g;
  const std::uint64_t M = in_rate / g;

  const double cutoff = std::min(1.0, static_cast<double>(L) / static_cast<double>(M));
  constexpr int half = kResampleTaps / 2;
  // Taps for phase p cover input offsets k = -half+1 .. half relative to
  // floor(t); fractional position of phase p is p / L.
  std::vector<double> bank(L * kResampleTaps);
  for (std::uint64_t p = 0; p < L; ++p) {
    const double frac = static_cast<double>(p) / static_cast<double>(L);
    double dc = 0.0;
    for (int j = 0; j < kResampleTaps; ++j) {
      const double x = frac - static_cast<double>(j - half + 1);
      const double h = cutoff * detail::sinc(cutoff * x) *
                       detail::kaiser(x, half, kResampleKaiserBeta);
      bank[p * kResampleTaps + j] = h;
      dc += h;
    }
    for (int j = 0; j < kResampleTaps; ++j) bank[p * kResampleTaps + j] /= dc;
  }

  const std::size_t n_in = clip.samples.size();
  const auto n_out = static_cast<std::size_t>(std::llround(
      static_cast<double>(n_in) * static_cast<double>(L) / static_cast<double>(M)));
  AudioClip out;
  out.sample_rate = target_rate;
  out.source_path = clip.source_path;
  out.samples.resize(n_out);
  const auto* src = clip.samples.data();
  for (std::size_t n = 0; n < n_out; ++n) {
    const std::uint64_t num = static_cast<std::uint64_t>(n) * M;
    const auto base = static_cast<std::int64_t>(num / L);
    const std::uint64_t phase = num % L;
    const double* h = bank.data() + phase * kResampleTaps;
    double acc = 0.0;
    for (int j = 0; j < kResampleTaps; ++j) {
      const std::int64_t k = base + j - half + 1;
      if (k >= 0 && k < static_cast<std::int64_t>(n_in)) acc += h[j] * src[k];
    }
    out.samples[n] = acc;
  }
  return out;
}

/// Zero-pads or truncates at the end to round(rate * seconds) samples.
inline AudioClip fix_length(const AudioClip& clip, double seconds) {
  if (!(seconds > 0.0)) throw InputError("fix_length: seconds must be positive");
  const auto n = static_cast<std::size_t>(std::llround(clip.sample_rate * seconds));
  AudioClip out = clip;
  out.samples.resize(n, 0.0);
  return out;
}

}  // namespace vib::dsp
