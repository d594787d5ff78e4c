#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "vib/core/errors.hpp"
#include "vib/dsp/resample.hpp"
#include "vib/dsp/wav.hpp"

namespace vib::dsp {

inline constexpr std::size_t kWindow = 1764;  // 40 ms at 44.1 kHz
inline constexpr std::size_t kHop = 882;      // 20 ms at 44.1 kHz
inline constexpr std::size_t kBins = kWindow / 2 + 1;
inline constexpr std::size_t kMelBands = 40;
inline constexpr double kLogFloor = 1e-10;

inline std::size_t frame_count(std::size_t n_samples) {
  if (n_samples < kWindow) return 0;
  return (n_samples - kWindow) / kHop + 1;
}

inline std::size_t frames_for_seconds(double seconds) {
  return frame_count(static_cast<std::size_t>(std::llround(kTargetRate * seconds)));
}

// Magnitudes laid out [frame][bin].
struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = kBins;
  std::vector<double> magnitude;

  double at(std::size_t frame, std::size_t bin) const {
    return magnitude[frame * bins + bin];
  }
};

// 40 x T log-mel grid, row-major with bands as rows.
struct FeatureMatrix {
  std::size_t bands = kMelBands;
  std::size_t frames = 0;
  std::vector<float> values;
  double clip_seconds = 0.0;
  std::string dataset_id;

  float at(std::size_t band, std::size_t frame) const {
    return values[band * frames + frame];
  }
};

/// Periodic Hann window of length kWindow.
inline const std::vector<double>& hann_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kWindow);
    for (std::size_t i = 0; i < kWindow; ++i) {
      v[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(kWindow));
    }
    return v;
  }();
  return w;
}

/// Hann-windowed STFT magnitude, 1764-sample window, 882-sample hop, no
/// centering: T = floor((N - 1764) / 882) + 1 frames of 883 bins.
inline Spectrogram stft(const AudioClip& clip) {
  if (clip.sample_rate != kTargetRate) {
    throw InputError("stft: clip must be at 44100 Hz, got " +
                     std::to_string(clip.sample_rate));
  }
  if (clip.samples.size() < kWindow) {
    throw InputError("stft: clip of " + std::to_string(clip.samples.size()) +
                     " samples is shorter than one window (" +
                     std::to_string(kWindow) + ")");
  }
  Spectrogram spec;
  spec.frames = frame_count(clip.samples.size());
  spec.magnitude.resize(spec.frames * kBins);
  const auto& win = hann_window();
  Eigen::FFT<double> fft;
  std::vector<double> frame(kWindow);
  std::vector<std::complex<double>> out;
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const double* src = clip.samples.data() + t * kHop;
    for (std::size_t i = 0; i < kWindow; ++i) frame[i] = src[i] * win[i];
    fft.fwd(out, frame);
    for (std::size_t k = 0; k < kBins; ++k) spec.magnitude[t * kBins + k] = std::abs(out[k]);
  }
  return spec;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct MelFilterbank {
  std::vector<double> centers_hz;  // kMelBands
  std::vector<double> weights;     // [band][bin]
};

/// Triangular HTK-scale filters spanning 0..22050 Hz, each peaking at 1.
inline const MelFilterbank& mel_filterbank() {
  static const MelFilterbank fb = [] {
    MelFilterbank b;
    const double nyquist = kTargetRate / 2.0;
    const double mel_max = hz_to_mel(nyquist);
    std::vector<double> edges(kMelBands + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      edges[i] = mel_to_hz(mel_max * static_cast<double>(i) /
                           static_cast<double>(kMelBands + 1));
    }
    b.centers_hz.assign(edges.begin() + 1, edges.end() - 1);
    b.weights.assign(kMelBands * kBins, 0.0);
    const double bin_hz = kTargetRate / static_cast<double>(kWindow);
    for (std::size_t m = 0; m < kMelBands; ++m) {
      const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
      for (std::size_t k = 0; k < kBins; ++k) {
        const double f = static_cast<double>(k) * bin_hz;
        double w = 0.0;
        if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
        else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
        b.weights[m * kBins + k] = w;
      }
    }
    return b;
  }();
  return fb;
}

/// Mel energies of squared magnitudes followed by ln(x + 1e-10).
inline FeatureMatrix logmel(const Spectrogram& spec) {
  if (spec.bins != kBins) {
    throw DimensionError("logmel: spectrogram has " + std::to_string(spec.bins) +
                         " bins, expected " + std::to_string(kBins));
  }
  const auto& fb = mel_filterbank();
  FeatureMatrix fm;
  fm.frames = spec.frames;
  fm.values.resize(kMelBands * spec.frames);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const double* mag = spec.magnitude.data() + t * kBins;
    for (std::size_t m = 0; m < kMelBands; ++m) {
      const double* w = fb.weights.data() + m * kBins;
      double e = 0.0;
      for (std::size_t k = 0; k < kBins; ++k) e += w[k] * mag[k] * mag[k];
      fm.values[m * spec.frames + t] = static_cast<float>(std::log(e + kLogFloor));
    }
  }
  return fm;
}

/// Fixed clip length per dataset id.
inline double dataset_seconds(const std::string& dataset_id) {
  if (dataset_id == "audio-mnist") return 4.0;
  if (dataset_id == "esc50") return 5.0;
  if (dataset_id == "tess") return 2.0;
  if (dataset_id == "tut") return 10.0;
  throw InputError("unknown dataset '" + dataset_id +
                   "' (expected audio-mnist, esc50, tess or tut)");
}

/// Resample to 44.1 kHz, fix length, STFT, log-mel.
inline FeatureMatrix featurize_clip(const AudioClip& clip, double seconds,
                                    const std::string& dataset_id = {}) {
  FeatureMatrix fm = logmel(stft(fix_length(resample(clip), seconds)));
  fm.clip_seconds = seconds;
  fm.dataset_id = dataset_id;
  return fm;
}

}  // namespace vib::dsp
