#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <type_traits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vib/core/errors.hpp"
#include "vib/core/ops.hpp"
#include "vib/core/rng.hpp"
#include "vib/core/tape.hpp"
#include "vib/eval/metrics.hpp"
#include "vib/model/vib_model.hpp"
#include "vib/objective/objective.hpp"
#include "vib/training/adam.hpp"
#include "vib/training/config.hpp"
#include "vib/training/parallel.hpp"

namespace vib::training {

struct Example {
  Tensor<float> input;  // [1, 40, T]
  std::size_t label = 0;
};

struct TrainData {
  std::vector<Example> train;
  std::vector<Example> valid;
  std::size_t classes = 0;
};

struct EvalResult {
  double ce = 0.0;
  double kl = 0.0;
  double total = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
  std::vector<std::size_t> predictions;
};

inline model::ModelConfig model_config_for(const TrainConfig& cfg, std::size_t classes,
                                           std::size_t frames) {
  model::ModelConfig mc;
  mc.mode = cfg.method == Method::vib ? model::Mode::vib : model::Mode::baseline;
  mc.classes = classes;
  mc.K = cfg.K;
  mc.beta = cfg.beta;
  mc.frames = frames;
  mc.encoder = cfg.encoder;
  return mc;
}

/// Inference-mode metrics (z = mu, no dropout) over a set of examples. Mean
/// CE and KL per example; total adds beta * KL and, when given, the weight
/// penalty. Examples may be spread over `jobs` threads; per-example terms are
/// reduced in index order so the result does not depend on `jobs`.
template <class T>
EvalResult evaluate(model::VibModel<T>& m, const std::vector<Example>& examples,
                    double weight_penalty = 0.0, unsigned jobs = 1) {
  if (examples.empty()) throw InputError("evaluate: no examples");
  const std::size_t n = examples.size();
  std::vector<double> ce(n), kl(n, 0.0);
  EvalResult r;
  r.predictions.resize(n);
  auto one = [&](std::size_t i) {
    const Example& ex = examples[i];
    Tape<T> tape;
    tape.set_grad_enabled(false);
    const Tensor<T> input = [&] {
      if constexpr (std::is_same_v<T, float>) return ex.input;
      else return ex.input.template cast<T>();
    }();
    model::Forward<T> f = m.forward(tape, input);
    ce[i] = softmax_cross_entropy(f.logits, ex.label).value().item();
    if (m.is_vib()) {
      kl[i] = objective::kl_gaussian_value<T>(f.mu.value().data(), f.sigma.value().data());
    }
    r.predictions[i] = argmax<T>(f.logits.value().data());
  };
  parallel_for(n, jobs, one);
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    r.ce += ce[i];
    r.kl += kl[i];
    labels[i] = examples[i].label;
  }
  r.ce /= static_cast<double>(n);
  r.kl /= static_cast<double>(n);
  r.total = r.ce + (m.is_vib() ? m.config().beta * r.kl : 0.0) + weight_penalty;
  r.accuracy = eval::accuracy(r.predictions, labels);
  r.f1 = eval::macro_f1(r.predictions, labels, m.classes());
  return r;
}

struct TrainResult {
  model::VibModel<float> model;
  std::vector<eval::MetricsRecord> log;
  std::uint64_t optimizer_steps = 0;
};

using RecordSink = std::function<void(const eval::MetricsRecord&)>;

/// Runs the fixed epoch budget with Adam and per-epoch exponential decay.
///
/// Train-split metrics are running means over the epoch's training-mode
/// forward passes; valid-split metrics come from an inference pass after the
/// epoch's last update. Every random draw comes from named substreams of
/// cfg.seed, so equal inputs give bit-identical logs.
inline TrainResult train(const TrainConfig& cfg, const TrainData& data,
                         const RecordSink& sink = {}) {
  if (data.train.empty()) throw DataError("train: empty training set");
  if (cfg.batch_size == 0) throw UsageError("train: batch size must be positive");
  if (cfg.epochs <= 0) throw UsageError("train: epochs must be positive");
  const Shape& in_shape = data.train.front().input.shape();
  if (in_shape.size() != 3) throw DimensionError("train: inputs must be [1, bands, frames]");
  for (const auto* set : {&data.train, &data.valid}) {
    for (const auto& ex : *set) {
      if (ex.input.shape() != in_shape) {
        throw DimensionError("train: example shape " + shape_str(ex.input.shape()) +
                             " differs from " + shape_str(in_shape));
      }
      if (ex.label >= data.classes) {
        throw DataError("train: label " + std::to_string(ex.label) + " out of range");
      }
    }
  }

  model::ModelConfig mc = model_config_for(cfg, data.classes, in_shape[2]);
  mc.bands = in_shape[1];
  TrainResult result{model::VibModel<float>(mc), {}, 0};
  auto& net = result.model;
  net.init_params(cfg.seed);
  net.set_requires_grad(true);
  Adam<float> adam;

  Rng eps_rng = make_rng(cfg.seed, "epsilon");
  Rng drop_rng = make_rng(cfg.seed, "dropout");
  const bool vib = cfg.method == Method::vib;
  const bool use_dropout = cfg.method == Method::dropout;
  const bool use_decay = cfg.method == Method::weight_decay;
  const auto decay_idx = net.decay_indices();

  auto make_record = [&](int epoch, const char* split) {
    eval::MetricsRecord r;
    r.run_id = cfg.run_id;
    r.dataset = cfg.dataset;
    r.method = method_name(cfg.method);
    r.K = vib ? cfg.K : 0;
    r.beta = vib ? cfg.beta : 0.0;
    r.subsample_pct = cfg.subsample_pct;
    r.seed = cfg.seed;
    r.epoch = epoch;
    r.split = split;
    return r;
  };
  auto emit = [&](eval::MetricsRecord r) {
    if (sink) sink(r);
    result.log.push_back(std::move(r));
  };

  std::vector<std::size_t> order(data.train.size());
  std::uint64_t batch_index = 0;
  std::normal_distribution<double> normal(0.0, 1.0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng = make_rng(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(shuffle_rng)]);
    }
    const double lr = lr_at(epoch, cfg);

    double sum_ce = 0.0, sum_kl = 0.0, sum_penalty = 0.0;
    std::size_t n_batches = 0;
    std::vector<std::size_t> preds, labels;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const float inv_b = 1.0f / static_cast<float>(end - start);
      net.zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const Example& ex = data.train[order[k]];
        model::Noise<float> noise;
        if (use_dropout) noise = net.sample_dropout(drop_rng, cfg.dropout_p);
        if (vib) {
          noise.epsilon.resize(cfg.K);
          for (auto& e : noise.epsilon) e = static_cast<float>(normal(eps_rng));
        }
        Tape<float> tape;
        model::Forward<float> f = net.forward(tape, ex.input, &noise);
        Var<float> loss;
        if (vib) {
          auto terms = objective::vib_loss_from_logits(f.logits, f.mu, f.sigma, ex.label, cfg.beta);
          loss = terms.total;
          sum_ce += terms.values.ce;
          sum_kl += terms.values.kl;
        } else {
          loss = softmax_cross_entropy(f.logits, ex.label);
          sum_ce += loss.value().item();
        }
        preds.push_back(argmax<float>(f.logits.value().data()));
        labels.push_back(ex.label);
        tape.backward(scale(loss, inv_b));
      }
      if (use_decay) {
        Tape<float> tape;
        std::vector<Var<float>> ws;
        for (std::size_t i : decay_idx) {
          ws.push_back(tape.leaf(net.params()[i].value, net.params()[i].name));
        }
        Var<float> pen = objective::weight_decay_penalty(tape, ws, cfg.weight_decay);
        sum_penalty += pen.value().item();
        tape.backward(pen);
      }
      adam.step(net.params(), lr, batch_index++);
      ++n_batches;
    }

    const auto n = static_cast<double>(order.size());
    eval::MetricsRecord tr = make_record(epoch + 1, "train");
    tr.ce = sum_ce / n;
    tr.kl = vib ? sum_kl / n : 0.0;
    const double penalty = use_decay ? sum_penalty / static_cast<double>(n_batches) : 0.0;
    tr.total_loss = tr.ce + (vib ? cfg.beta * tr.kl : 0.0) + penalty;
    tr.accuracy = eval::accuracy(preds, labels);
    tr.f1 = eval::macro_f1(preds, labels, data.classes);
    emit(tr);

    if (!data.valid.empty()) {
      std::vector<const Tensor<float>*> ws;
      for (std::size_t i : decay_idx) ws.push_back(&net.params()[i].value);
      const double pen_now = use_decay ? objective::weight_decay_value(ws, cfg.weight_decay) : 0.0;
      const EvalResult ev = evaluate(net, data.valid, pen_now);
      eval::MetricsRecord vr = make_record(epoch + 1, "valid");
      vr.ce = ev.ce;
      vr.kl = ev.kl;
      vr.total_loss = ev.total;
      vr.accuracy = ev.accuracy;
      vr.f1 = ev.f1;
      emit(vr);
    }
  }
  net.set_requires_grad(false);
  result.optimizer_steps = adam.steps();
  return result;
}

}  // namespace vib::training
