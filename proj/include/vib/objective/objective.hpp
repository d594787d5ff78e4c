#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vib/core/errors.hpp"
#include "vib/core/ops.hpp"
#include "vib/core/tape.hpp"
#include "vib/model/vib_model.hpp"

namespace vib::objective {

struct LossBreakdown {
  double ce = 0.0;
  double kl = 0.0;
  double weight_penalty = 0.0;
  double total = 0.0;
};

/// KL(N(mu, diag sigma^2) || N(0, I)) = sum_i 0.5 (mu^2 + sigma^2 - ln sigma^2 - 1).
template <class T>
double kl_gaussian_value(std::span<const T> mu, std::span<const T> sigma) {
  if (mu.size() != sigma.size()) {
    throw DimensionError("kl_gaussian: mu has " + std::to_string(mu.size()) +
                         " entries, sigma has " + std::to_string(sigma.size()));
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double s = static_cast<double>(sigma[i]);
    if (!(s > 0.0)) {
      throw InputError("kl_gaussian: sigma[" + std::to_string(i) + "] = " +
                       std::to_string(s) + " is not positive");
    }
    const double m = static_cast<double>(mu[i]);
    kl += 0.5 * (m * m + s * s - 2.0 * std::log(s) - 1.0);
  }
  return kl;
}

/// Tape op for the closed-form KL; d/dmu = mu, d/dsigma = sigma - 1/sigma.
template <class T>
Var<T> kl_gaussian(Var<T> mu, Var<T> sigma) {
  if (mu.shape() != sigma.shape()) {
    throw DimensionError("kl_gaussian: shape " + shape_str(mu.shape()) + " vs " +
                         shape_str(sigma.shape()));
  }
  const T kl = static_cast<T>(kl_gaussian_value<T>(mu.value().data(), sigma.value().data()));
  const std::size_t mi = mu.id(), si = sigma.id();
  return mu.tape().record(
      "kl_gaussian", Tensor<T>::scalar(kl), {mi, si},
      [mi, si](Tape<T>& tape, const std::vector<T>& g) {
        if (tape.needs_grad(mi)) {
          const Tensor<T>& m = tape.value(mi);
          auto& gm = tape.adjoint(mi);
          for (std::size_t i = 0; i < gm.size(); ++i) gm[i] += g[0] * m[i];
        }
        if (tape.needs_grad(si)) {
          const Tensor<T>& s = tape.value(si);
          auto& gs = tape.adjoint(si);
          for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += g[0] * (s[i] - T{1} / s[i]);
        }
      });
}

template <class T>
struct VibLoss {
  Var<T> ce;
  Var<T> kl;
  Var<T> total;
  LossBreakdown values;
};

/// Same loss when the decoder has already been applied to the sampled z.
template <class T>
VibLoss<T> vib_loss_from_logits(Var<T> logits, Var<T> mu, Var<T> sigma,
                                std::size_t label, double beta) {
  if (beta < 0) throw InputError("vib_loss: beta must be non-negative");
  VibLoss<T> out;
  out.ce = softmax_cross_entropy(logits, label);
  out.kl = kl_gaussian(mu, sigma);
  out.total = beta == 0.0 ? out.ce : add(out.ce, scale(out.kl, static_cast<T>(beta)));
  out.values.ce = out.ce.value().item();
  out.values.kl = out.kl.value().item();
  out.values.total = out.total.value().item();
  return out;
}

/// Single-sample estimate of beta * KL(p(z|x) || r(z)) + E[-log q(y|z)]:
/// z = mu + sigma * epsilon is decoded and scored against `label`.
template <class T>
VibLoss<T> vib_loss(model::VibModel<T>& m, Var<T> mu, Var<T> sigma,
                    const std::vector<T>& epsilon, std::size_t label) {
  if (!m.is_vib()) throw UsageError("vib_loss: model is in baseline mode");
  Tape<T>& tape = mu.tape();
  Var<T> eps = tape.constant(Tensor<T>::vector(epsilon), "epsilon");
  Var<T> z = model::sample_z(mu, sigma, eps);
  auto& w = m.param("decoder.weight");
  auto& b = m.param("decoder.bias");
  Var<T> logits = dense(z, tape.leaf(w.value, w.name), tape.leaf(b.value, b.name));
  return vib_loss_from_logits(logits, mu, sigma, label, m.config().beta);
}

/// (lambda / 2) * sum of squared entries over the given weight tensors.
template <class T>
Var<T> weight_decay_penalty(Tape<T>& tape, const std::vector<Var<T>>& weights,
                            double lambda) {
  if (lambda < 0) throw InputError("weight decay lambda must be non-negative");
  Var<T> acc;
  for (const auto& w : weights) {
    Var<T> s = sum_squares(w);
    acc = acc.valid() ? add(acc, s) : s;
  }
  if (!acc.valid()) return tape.constant(Tensor<T>::scalar(T{0}), "penalty");
  return scale(acc, static_cast<T>(lambda / 2.0));
}

template <class T>
double weight_decay_value(const std::vector<const Tensor<T>*>& weights, double lambda) {
  if (lambda < 0) throw InputError("weight decay lambda must be non-negative");
  double s = 0.0;
  for (const auto* w : weights) {
    for (T v : w->data()) s += static_cast<double>(v) * static_cast<double>(v);
  }
  return 0.5 * lambda * s;
}

}  // namespace vib::objective
