#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vib/core/errors.hpp"
#include "vib/core/ops.hpp"
#include "vib/core/rng.hpp"
#include "vib/core/tape.hpp"
#include "vib/core/tensor.hpp"
#include "vib/dsp/features.hpp"

namespace vib::model {

enum class Mode : std::uint32_t { baseline = 0, vib = 1 };

inline constexpr std::size_t kConvLayers = 4;
inline constexpr double kSigmaFloor = 1e-6;

// Four stride-1 valid convolutions. Kernels are (mel rows, time columns).
struct EncoderConfig {
  std::array<std::size_t, kConvLayers> channels{32, 96, 96, 160};
  std::array<std::size_t, kConvLayers> kernel_h{4, 4, 4, 4};
  std::array<std::size_t, kConvLayers> kernel_w{4, 10, 10, 10};

  static EncoderConfig table2() { return {}; }
  bool is_table2() const {
    const EncoderConfig ref;
    return channels == ref.channels && kernel_h == ref.kernel_h &&
           kernel_w == ref.kernel_w;
  }
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct ShapeChain {
  std::array<Shape, kConvLayers> conv;  // [C,H,W] after each conv+relu
  Shape pooled;                         // [C,H/2,W/2]
  std::size_t flat = 0;
};

/// Smallest frame count for which every conv and the pooling fit.
inline std::size_t min_frames(const EncoderConfig& enc) {
  std::size_t t = 2;
  for (std::size_t i = 0; i < kConvLayers; ++i) t += enc.kernel_w[i] - 1;
  return t;
}

inline std::size_t min_bands(const EncoderConfig& enc) {
  std::size_t h = 2;
  for (std::size_t i = 0; i < kConvLayers; ++i) h += enc.kernel_h[i] - 1;
  return h;
}

/// Closed-form shapes through the encoder for a bands x frames input.
inline ShapeChain shape_chain(const EncoderConfig& enc, std::size_t bands,
                              std::size_t frames) {
  if (frames < min_frames(enc)) {
    throw DimensionError("encoder needs at least " + std::to_string(min_frames(enc)) +
                         " frames, got " + std::to_string(frames));
  }
  if (bands < min_bands(enc)) {
    throw DimensionError("encoder needs at least " + std::to_string(min_bands(enc)) +
                         " mel bands, got " + std::to_string(bands));
  }
  ShapeChain sc;
  std::size_t h = bands, w = frames;
  for (std::size_t i = 0; i < kConvLayers; ++i) {
    h = conv_out_extent(h, enc.kernel_h[i], 1);
    w = conv_out_extent(w, enc.kernel_w[i], 1);
    sc.conv[i] = {enc.channels[i], h, w};
  }
  sc.pooled = {enc.channels.back(), h / 2, w / 2};
  sc.flat = shape_size(sc.pooled);
  return sc;
}

struct ModelConfig {
  Mode mode = Mode::vib;
  std::size_t classes = 10;
  std::size_t K = 20;    // bottleneck size (vib mode only)
  double beta = 5e-3;    // KL weight (vib mode only)
  std::size_t bands = dsp::kMelBands;
  std::size_t frames = 0;  // input frames used to size the head
  EncoderConfig encoder;
};

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
};

// Per-example noise for a training-mode forward pass. Empty members mean the
// corresponding mechanism is off.
template <class T>
struct Noise {
  std::vector<T> epsilon;                               // K standard normals
  std::array<std::vector<T>, kConvLayers> dropout_masks;  // per-channel factors
};

/// Reparameterised draw z = mu + sigma * epsilon.
template <class T>
Var<T> sample_z(Var<T> mu, Var<T> sigma, Var<T> epsilon) {
  return add(mu, mul(sigma, epsilon));
}

template <class T>
struct Forward {
  Var<T> logits;
  Var<T> mu;     // vib mode only
  Var<T> sigma;  // vib mode only
  Var<T> z;      // vib mode only
};

/// Table 2 CNN encoder with either a direct dense classifier (baseline) or a
/// stochastic bottleneck head (mu, sigma) followed by a linear decoder.
template <class T>
class VibModel {
 public:
  explicit VibModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.classes < 2) throw InputError("model needs at least 2 classes");
    if (cfg_.mode == Mode::vib && cfg_.K == 0) throw InputError("bottleneck size K must be positive");
    if (cfg_.beta < 0) throw InputError("beta must be non-negative");
    chain_ = shape_chain(cfg_.encoder, cfg_.bands, cfg_.frames);
    std::size_t cin = 1;
    for (std::size_t i = 0; i < kConvLayers; ++i) {
      const std::string base = "conv" + std::to_string(i + 1);
      const std::size_t co = cfg_.encoder.channels[i];
      add(base + ".weight", {co, cin, cfg_.encoder.kernel_h[i], cfg_.encoder.kernel_w[i]});
      add(base + ".bias", {co});
      cin = co;
    }
    const std::size_t F = chain_.flat;
    if (cfg_.mode == Mode::baseline) {
      add("head.weight", {cfg_.classes, F});
      add("head.bias", {cfg_.classes});
    } else {
      add("head_mu.weight", {cfg_.K, F});
      add("head_mu.bias", {cfg_.K});
      add("head_sigma.weight", {cfg_.K, F});
      add("head_sigma.bias", {cfg_.K});
      add("decoder.weight", {cfg_.classes, cfg_.K});
      add("decoder.bias", {cfg_.classes});
    }
  }

  const ModelConfig& config() const { return cfg_; }
  const ShapeChain& chain() const { return chain_; }
  Mode mode() const { return cfg_.mode; }
  bool is_vib() const { return cfg_.mode == Mode::vib; }
  std::size_t classes() const { return cfg_.classes; }

  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }

  Parameter<T>& param(const std::string& name) {
    for (auto& p : params_) {
      if (p.name == name) return p;
    }
    throw UsageError("no parameter named '" + name + "'");
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  /// Conv and dense weight matrices subject to weight decay. Biases and the
  /// sigma branch of the bottleneck head are excluded.
  std::vector<std::size_t> decay_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const std::string& n = params_[i].name;
      if (n.ends_with(".weight") && n != "head_sigma.weight") idx.push_back(i);
    }
    return idx;
  }

  /// He-normal weights (std = sqrt(2 / fan_in)), zero biases.
  void init_params(std::uint64_t seed) {
    Rng rng = make_rng(seed, "init");
    for (auto& p : params_) {
      if (p.name.ends_with(".bias")) {
        p.value.fill(T{0});
        continue;
      }
      const Shape& s = p.value.shape();
      const std::size_t fan_in = shape_size(s) / s[0];
      std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      for (auto& v : p.value.data()) v = static_cast<T>(nd(rng));
    }
  }

  void zero_params() {
    for (auto& p : params_) p.value.fill(T{0});
  }

  void set_requires_grad(bool on) {
    for (auto& p : params_) p.value.set_requires_grad(on);
  }

  void zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
  }

  /// Registers the parameters on `tape` and runs the network on a
  /// [1, bands, frames] input. `noise == nullptr` selects inference mode
  /// (no dropout, z = mu).
  Forward<T> forward(Tape<T>& tape, const Tensor<T>& input,
                     const Noise<T>* noise = nullptr) {
    std::vector<Var<T>> p;
    p.reserve(params_.size());
    for (auto& prm : params_) p.push_back(tape.leaf(prm.value, prm.name));
    Var<T> h = features(tape.constant(input, "input"), p, noise);

    Forward<T> out;
    const std::size_t head = 2 * kConvLayers;
    if (!is_vib()) {
      out.logits = dense(h, p[head], p[head + 1]);
      return out;
    }
    out.mu = dense(h, p[head], p[head + 1]);
    Var<T> raw = dense(h, p[head + 2], p[head + 3]);
    out.sigma = add_scalar(softplus(raw), static_cast<T>(kSigmaFloor));
    if (noise != nullptr) {
      if (noise->epsilon.size() != cfg_.K) {
        throw DimensionError("epsilon has " + std::to_string(noise->epsilon.size()) +
                             " entries, bottleneck has " + std::to_string(cfg_.K));
      }
      out.z = sample_z(out.mu, out.sigma,
                       tape.constant(Tensor<T>::vector(noise->epsilon), "epsilon"));
    } else {
      out.z = out.mu;
    }
    out.logits = dense(out.z, p[head + 4], p[head + 5]);
    return out;
  }

  /// Inference-mode (mu, sigma) for one example. Vib mode only.
  std::pair<Tensor<T>, Tensor<T>> encode(const Tensor<T>& input) {
    if (!is_vib()) throw UsageError("encode: model is in baseline mode");
    Tape<T> tape;
    tape.set_grad_enabled(false);
    Forward<T> f = forward(tape, input);
    return {f.mu.value(), f.sigma.value()};
  }

  /// Deterministic logits: decoder(mu(x)) in vib mode, dense head otherwise.
  Tensor<T> infer_logits(const Tensor<T>& input) {
    Tape<T> tape;
    tape.set_grad_enabled(false);
    return forward(tape, input).logits.value();
  }

  /// Per-channel spatial dropout factors (0 or 1/(1-p)) for every conv layer.
  Noise<T> sample_dropout(Rng& rng, double p) const {
    Noise<T> n;
    std::bernoulli_distribution keep(1.0 - p);
    const T scale = static_cast<T>(1.0 / (1.0 - p));
    for (std::size_t i = 0; i < kConvLayers; ++i) {
      n.dropout_masks[i].resize(cfg_.encoder.channels[i]);
      for (auto& m : n.dropout_masks[i]) m = keep(rng) ? scale : T{0};
    }
    return n;
  }

 private:
  void add(std::string name, Shape shape) {
    params_.push_back({std::move(name), Tensor<T>(std::move(shape))});
  }

  Var<T> features(Var<T> x, const std::vector<Var<T>>& p, const Noise<T>* noise) {
    const Shape& xs = x.shape();
    if (xs.size() != 3 || xs[0] != 1) {
      throw DimensionError("model input must be [1, bands, frames], got " + shape_str(xs));
    }
    // Validates the minimum frame count with a readable message.
    const ShapeChain sc = shape_chain(cfg_.encoder, xs[1], xs[2]);
    if (sc.flat != chain_.flat) {
      throw DimensionError("input " + shape_str(xs) + " flattens to " +
                           std::to_string(sc.flat) + " features, head expects " +
                           std::to_string(chain_.flat));
    }
    Var<T> h = x;
    for (std::size_t i = 0; i < kConvLayers; ++i) {
      h = relu(conv2d(h, p[2 * i], p[2 * i + 1], 1));
      if (noise != nullptr && !noise->dropout_masks[i].empty()) {
        h = channel_scale(h, noise->dropout_masks[i]);
      }
    }
    return flatten(maxpool2d(h));
  }

  ModelConfig cfg_;
  ShapeChain chain_;
  std::vector<Parameter<T>> params_;
};

/// [1, bands, frames] network input from a feature grid, standardised per
/// clip to zero mean and unit variance. A constant grid maps to zeros.
template <class T>
Tensor<T> to_input(const dsp::FeatureMatrix& fm) {
  if (fm.values.empty()) throw DimensionError("to_input: empty feature grid");
  double mean = 0.0;
  for (float v : fm.values) mean += v;
  mean /= static_cast<double>(fm.values.size());
  double var = 0.0;
  for (float v : fm.values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(fm.values.size());
  const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
  std::vector<T> out(fm.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>((fm.values[i] - mean) * inv);
  return Tensor<T>(Shape{1, fm.bands, fm.frames}, std::move(out));
}

}  // namespace vib::model
