#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include "support.hpp"
#include "vib/dsp/cache.hpp"
#include "vib/dsp/features.hpp"
#include "vib/dsp/resample.hpp"
#include "vib/dsp/wav.hpp"

using namespace vib;
using namespace vib::dsp;

namespace {

// Hand-assembled RIFF file, independent of write_wav.
void raw_wav(const std::filesystem::path& p, std::uint16_t format, std::uint16_t channels,
             std::uint32_t rate, std::uint16_t bits, const std::vector<unsigned char>& payload) {
  std::vector<unsigned char> b;
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
  };
  auto u16 = [&](std::uint16_t v) {
    b.push_back(static_cast<unsigned char>(v));
    b.push_back(static_cast<unsigned char>(v >> 8));
  };
  auto tag = [&](const char* s) { b.insert(b.end(), s, s + 4); };
  tag("RIFF");
  u32(static_cast<std::uint32_t>(36 + payload.size()));
  tag("WAVE");
  tag("fmt ");
  u32(16);
  u16(format);
  u16(channels);
  u32(rate);
  u32(rate * channels * bits / 8);
  u16(static_cast<std::uint16_t>(channels * bits / 8));
  u16(bits);
  tag("data");
  u32(static_cast<std::uint32_t>(payload.size()));
  b.insert(b.end(), payload.begin(), payload.end());
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()),
                                           static_cast<std::streamsize>(b.size()));
}

AudioClip sine(double hz, double rate, double seconds, double amp = 0.5) {
  AudioClip c;
  c.sample_rate = rate;
  const auto n = static_cast<std::size_t>(std::llround(rate * seconds));
  for (std::size_t i = 0; i < n; ++i) {
    c.samples.push_back(amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate));
  }
  return c;
}

std::size_t peak_bin(const Spectrogram& s, std::size_t frame) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < s.bins; ++k) {
    if (s.at(frame, k) > s.at(frame, best)) best = k;
  }
  return best;
}

}  // namespace

TEST(LoadWav, Pcm16Scaling) {
  auto dir = test::scratch_dir("wav16");
  raw_wav(dir / "a.wav", 1, 1, 8000, 16, {0x00, 0x40, 0x00, 0x80});  // 16384, -32768
  AudioClip c = load_wav(dir / "a.wav");
  ASSERT_EQ(c.samples.size(), 2u);
  EXPECT_EQ(c.samples[0], 16384.0 / 32768.0);
  EXPECT_EQ(c.samples[1], -1.0);
  EXPECT_EQ(c.sample_rate, 8000.0);
}

TEST(LoadWav, StereoAveragedToMono) {
  auto dir = test::scratch_dir("wavst");
  std::vector<unsigned char> pay(8);
  const float l = 1.0f, r = 0.0f;
  std::memcpy(pay.data(), &l, 4);
  std::memcpy(pay.data() + 4, &r, 4);
  raw_wav(dir / "s.wav", 3, 2, 44100, 32, pay);
  AudioClip c = load_wav(dir / "s.wav");
  ASSERT_EQ(c.samples.size(), 1u);
  EXPECT_EQ(c.samples[0], 0.5);
}

TEST(LoadWav, OtherDepths) {
  auto dir = test::scratch_dir("wavdepth");
  raw_wav(dir / "8.wav", 1, 1, 8000, 8, {192, 0});
  EXPECT_EQ(load_wav(dir / "8.wav").samples, (std::vector<double>{0.5, -1.0}));
  raw_wav(dir / "24.wav", 1, 1, 8000, 24, {0x00, 0x00, 0x40});
  EXPECT_EQ(load_wav(dir / "24.wav").samples, (std::vector<double>{0.5}));
  raw_wav(dir / "32.wav", 1, 1, 8000, 32, {0x00, 0x00, 0x00, 0xC0});
  EXPECT_EQ(load_wav(dir / "32.wav").samples, (std::vector<double>{-0.5}));
}

TEST(LoadWav, ErrorsNameThePath) {
  auto dir = test::scratch_dir("wavbad");
  raw_wav(dir / "empty.wav", 1, 1, 8000, 16, {});
  try {
    load_wav(dir / "empty.wav");
    FAIL();
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("empty.wav"), std::string::npos);
  }
  raw_wav(dir / "mp3.wav", 0x55, 1, 8000, 16, {0, 0});
  EXPECT_THROW(load_wav(dir / "mp3.wav"), IngestionError);
  std::ofstream(dir / "junk.wav") << "not audio";
  EXPECT_THROW(load_wav(dir / "junk.wav"), IngestionError);
  EXPECT_THROW(load_wav(dir / "missing.wav"), IngestionError);
}

TEST(LoadWav, RoundTripsWriter) {
  auto dir = test::scratch_dir("wavrt");
  std::vector<double> v{0.25, -0.5, 0.125};
  write_wav(dir / "f.wav", v, 16000, 1, WavEncoding::float32);
  EXPECT_EQ(load_wav(dir / "f.wav").samples, v);
}

TEST(Resample, IdentityAtTargetRate) {
  AudioClip c = sine(300.0, 44100.0, 0.1);
  EXPECT_EQ(resample(c).samples, c.samples);
}

TEST(Resample, LengthFormula) {
  EXPECT_EQ(resample(sine(100.0, 22050.0, 2.0)).samples.size(), 88200u);
  EXPECT_EQ(resample(sine(100.0, 48000.0, 1.0)).samples.size(), 44100u);
  AudioClip odd;
  odd.sample_rate = 16000;
  odd.samples.assign(12345, 0.1);
  EXPECT_EQ(resample(odd).samples.size(),
            static_cast<std::size_t>(std::llround(12345.0 * 44100.0 / 16000.0)));
}

TEST(Resample, ToneLandsInExpectedBin) {
  AudioClip out = resample(sine(440.0, 48000.0, 1.0));
  ASSERT_EQ(out.sample_rate, 44100.0);
  Spectrogram s = stft(out);
  const auto expect = static_cast<std::size_t>(std::llround(440.0 * kWindow / 44100.0));
  for (std::size_t t = 0; t < s.frames; ++t) EXPECT_EQ(peak_bin(s, t), expect);
}

TEST(Resample, ToneAmplitudePreserved) {
  for (double rate : {8000.0, 16000.0, 22050.0, 48000.0}) {
    const double hz = 0.4 * std::min(rate, 44100.0);
    AudioClip out = resample(sine(hz, rate, 0.5, 0.8));
    // Amplitude from the steady-state RMS, away from the filter edges.
    double ss = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 2000; i + 2000 < out.samples.size(); ++i, ++n) ss += out.samples[i] * out.samples[i];
    const double amp = std::sqrt(2.0 * ss / static_cast<double>(n));
    EXPECT_NEAR(amp, 0.8, 0.008) << rate;
  }
}

TEST(FixLength, PadAndTruncate) {
  AudioClip three;
  three.sample_rate = 44100;
  three.samples.assign(3 * 44100, 0.3);
  AudioClip p = fix_length(three, 5.0);
  ASSERT_EQ(p.samples.size(), 220500u);
  for (std::size_t i = 220500 - 88200; i < 220500; ++i) ASSERT_EQ(p.samples[i], 0.0);
  EXPECT_EQ(p.samples[132299], 0.3);

  AudioClip six = sine(50.0, 44100.0, 6.0);
  AudioClip t = fix_length(six, 5.0);
  EXPECT_TRUE(std::equal(t.samples.begin(), t.samples.end(), six.samples.begin()));
  EXPECT_EQ(t.samples.size(), 220500u);

  AudioClip exact = sine(50.0, 44100.0, 5.0);
  EXPECT_EQ(fix_length(exact, 5.0).samples, exact.samples);
}

TEST(Stft, FrameCounts) {
  for (auto [sec, frames] : {std::pair{2.0, 99u}, {4.0, 199u}, {5.0, 249u}, {10.0, 499u}}) {
    const auto n = static_cast<std::size_t>(44100 * sec);
    EXPECT_EQ(frame_count(n), (n - 1764) / 882 + 1);
    EXPECT_EQ(frames_for_seconds(sec), frames);
  }
  AudioClip five;
  five.sample_rate = 44100;
  five.samples.assign(220500, 0.0);
  Spectrogram s = stft(five);
  EXPECT_EQ(s.frames, 249u);
  EXPECT_EQ(s.bins, 883u);
}

TEST(Stft, DcAndBinSine) {
  AudioClip dc;
  dc.sample_rate = 44100;
  dc.samples.assign(5000, 0.7);
  Spectrogram s = stft(dc);
  for (std::size_t t = 0; t < s.frames; ++t) EXPECT_EQ(peak_bin(s, t), 0u);
  for (std::size_t k : {5u, 40u, 300u}) {
    Spectrogram b = stft(sine(k * 44100.0 / 1764.0, 44100.0, 0.3));
    for (std::size_t t = 0; t < b.frames; ++t) EXPECT_EQ(peak_bin(b, t), k);
  }
}

TEST(Stft, RejectsShortOrWrongRate) {
  AudioClip c;
  c.sample_rate = 44100;
  c.samples.assign(1763, 0.0);
  EXPECT_THROW(stft(c), InputError);
  c.samples.assign(4000, 0.0);
  c.sample_rate = 16000;
  EXPECT_THROW(stft(c), InputError);
}

TEST(Stft, HannMatchesDirectDft) {
  // Direct O(N^2) DFT on one frame as the oracle.
  AudioClip c = sine(1234.5, 44100.0, 0.1);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 0.1);
  for (auto& v : c.samples) v += nd(rng);
  Spectrogram s = stft(c);
  for (std::size_t k : {0u, 17u, 50u, 882u}) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < kWindow; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / kWindow);
      acc += c.samples[kHop + i] * w *
             std::polar(1.0, -2.0 * std::numbers::pi * double(k) * double(i) / kWindow);
    }
    EXPECT_NEAR(s.at(1, k), std::abs(acc), 1e-9 * (1.0 + std::abs(acc)));
  }
}

TEST(Logmel, SilenceHitsFloor) {
  Spectrogram s;
  s.frames = 3;
  s.magnitude.assign(3 * kBins, 0.0);
  FeatureMatrix fm = logmel(s);
  ASSERT_EQ(fm.bands, 40u);
  for (float v : fm.values) EXPECT_FLOAT_EQ(v, static_cast<float>(std::log(1e-10)));
}

TEST(Logmel, FilterCentresIncreaseWithinRange) {
  const auto& fb = mel_filterbank();
  ASSERT_EQ(fb.centers_hz.size(), 40u);
  EXPECT_GE(fb.centers_hz.front(), 0.0);
  EXPECT_LE(fb.centers_hz.back(), 22050.0);
  for (std::size_t i = 1; i < 40; ++i) EXPECT_GT(fb.centers_hz[i], fb.centers_hz[i - 1]);
  for (std::size_t m = 0; m < 40; ++m) {
    double peak = 0.0;
    for (std::size_t k = 0; k < kBins; ++k) peak = std::max(peak, fb.weights[m * kBins + k]);
    EXPECT_LE(peak, 1.0);
    EXPECT_GT(peak, 0.0);
  }
}

TEST(Logmel, HtkScaleRoundTrip) {
  EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-9);
  for (double f : {0.0, 100.0, 1000.0, 22050.0}) EXPECT_NEAR(mel_to_hz(hz_to_mel(f)), f, 1e-7);
}

TEST(Logmel, GainShiftsByLogHundred) {
  AudioClip a = sine(1000.0, 44100.0, 0.2, 0.05);
  AudioClip b = a;
  for (auto& v : b.samples) v *= 10.0;
  FeatureMatrix fa = logmel(stft(a)), fb = logmel(stft(b));
  std::size_t checked = 0;
  for (std::size_t i = 0; i < fa.values.size(); ++i) {
    if (fa.values[i] > -10.0f) {
      EXPECT_NEAR(fb.values[i] - fa.values[i], std::log(100.0), 1e-3);
      ++checked;
    }
  }
  EXPECT_GT(checked, 0u);
}

TEST(Logmel, ToneEnergySteadyAcrossFrames) {
  FeatureMatrix fm = logmel(stft(sine(2000.0, 44100.0, 1.0)));
  std::vector<double> tot(fm.frames, 0.0);
  for (std::size_t t = 0; t < fm.frames; ++t)
    for (std::size_t m = 0; m < fm.bands; ++m) tot[t] += std::exp(double(fm.at(m, t)));
  const auto [lo, hi] = std::minmax_element(tot.begin(), tot.end());
  EXPECT_LT(10.0 * std::log10(*hi / *lo), 3.0);
}

TEST(Features, PipelineDeterministicAndShaped) {
  AudioClip c = sine(700.0, 16000.0, 1.3);
  FeatureMatrix a = featurize_clip(c, 2.0, "tess"), b = featurize_clip(c, 2.0, "tess");
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.frames, 99u);
  EXPECT_EQ(a.bands, 40u);
  EXPECT_EQ(a.dataset_id, "tess");
  EXPECT_EQ(dataset_seconds("audio-mnist"), 4.0);
  EXPECT_EQ(dataset_seconds("tut"), 10.0);
  EXPECT_THROW(dataset_seconds("nope"), InputError);
}

TEST(Cache, RoundTripAndSize) {
  auto dir = test::scratch_dir("cache");
  std::mt19937 rng(3);
  std::normal_distribution<float> nd;
  FeatureMatrix fm;
  fm.frames = 249;
  for (std::size_t i = 0; i < 40 * 249; ++i) fm.values.push_back(nd(rng));
  fm.values[5] = -0.0f;
  io::write_cache(fm, dir / "x.vibf");
  EXPECT_EQ(std::filesystem::file_size(dir / "x.vibf"), 4u + 4 + 4 + 2 * 8 + 40 * 249 * 4);
  EXPECT_EQ(io::cache_file_size(40, 249), std::filesystem::file_size(dir / "x.vibf"));
  FeatureMatrix back = io::read_cache(dir / "x.vibf");
  EXPECT_EQ(back.bands, 40u);
  EXPECT_EQ(back.frames, 249u);
  ASSERT_EQ(back.values.size(), fm.values.size());
  EXPECT_EQ(std::memcmp(back.values.data(), fm.values.data(), fm.values.size() * 4), 0);
  std::size_t leftovers = 0;
  for (auto& e : std::filesystem::directory_iterator(dir)) leftovers += e.path().extension() != ".vibf";
  EXPECT_EQ(leftovers, 0u);
}

TEST(Cache, FormatErrorsCarryOffset) {
  auto dir = test::scratch_dir("cachebad");
  FeatureMatrix fm;
  fm.frames = 2;
  fm.values.assign(80, 1.0f);
  io::write_cache(fm, dir / "ok.vibf");
  std::string bytes;
  {
    std::ifstream in(dir / "ok.vibf", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& name, const std::string& b) {
    std::ofstream(dir / name, std::ios::binary) << b;
    return dir / name;
  };
  std::string magic = bytes;
  magic[0] = 'X';
  try {
    io::read_cache(write("magic.vibf", magic));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos) << e.what();
  }
  std::string version = bytes;
  version[4] = 9;
  EXPECT_THROW(io::read_cache(write("ver.vibf", version)), FormatError);
  try {
    io::read_cache(write("trunc.vibf", bytes.substr(0, bytes.size() - 3)));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
  }
  EXPECT_THROW(io::read_cache(write("extra.vibf", bytes + "z")), FormatError);
}
