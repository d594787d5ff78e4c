#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vib/core/errors.hpp"
#include "vib/model/vib_model.hpp"

namespace vib::training {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam. Moments are zero-initialised on the first step and
// `t` counts completed updates.
template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  std::uint64_t steps() const { return t_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

  /// Applies one update from the gradients stored on `params`. Aborts with
  /// NumericError before touching anything if a gradient is not finite.
  void step(std::vector<model::Parameter<T>>& params, double lr,
            std::uint64_t batch_index = 0) {
    for (const auto& p : params) {
      for (T g : p.value.grad()) {
        if (!std::isfinite(static_cast<double>(g))) {
          throw NumericError("non-finite gradient in parameter '" + p.name +
                             "' at batch " + std::to_string(batch_index));
        }
      }
    }
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.value.size(), T{0});
        v_.emplace_back(p.value.size(), T{0});
      }
    }
    if (m_.size() != params.size()) {
      throw UsageError("Adam: parameter list changed between steps");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k].value;
      auto data = p.data();
      auto grad = p.grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < data.size(); ++i) {
        const T g = grad.empty() ? T{0} : grad[i];
        m[i] = b1 * m[i] + (T{1} - b1) * g;
        v[i] = b2 * v[i] + (T{1} - b2) * g * g;
        const double mhat = static_cast<double>(m[i]) / c1;
        const double vhat = static_cast<double>(v[i]) / c2;
        data[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg_.epsilon));
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<std::vector<T>> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace vib::training
