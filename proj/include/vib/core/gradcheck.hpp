#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "vib/core/errors.hpp"
#include "vib/core/tape.hpp"
#include "vib/core/tensor.hpp"

namespace vib {

struct GradcheckReport {
  double max_rel_error = 0.0;
  bool pass = false;
  std::size_t checked = 0;
  // Coordinates whose +/- step evaluations straddle a non-smooth point
  // (relu sign flip, pooling argmax change) and were skipped.
  std::size_t excluded = 0;
  std::string worst;  // "<tensor>#<index>" of the largest error
};

inline double gradcheck_rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

// Builds a scalar loss on the given tape. It must register every checked
// tensor with tape.leaf() and be deterministic.
using TapeFunction = std::function<Var<double>(Tape<double>&)>;

/// Compares reverse-mode gradients of `f` with respect to each tensor in
/// `params` against central differences with the given step.
inline GradcheckReport gradcheck_params(const TapeFunction& f,
                                        const std::vector<Tensor<double>*>& params,
                                        const std::vector<std::string>& names,
                                        double step, double tolerance) {
  struct Eval {
    double value;
    std::uint64_t signature;
  };
  auto eval = [&] {
    Tape<double> tape;
    tape.set_grad_enabled(false);
    Var<double> out = f(tape);
    return Eval{out.value().item(), tape.branch_signature()};
  };

  for (Tensor<double>* p : params) {
    p->set_requires_grad(true);
    p->zero_grad();
  }
  {
    Tape<double> tape;
    Var<double> loss = f(tape);
    tape.backward(loss);
  }
  const Eval base = eval();
  const Eval again = eval();
  if (base.value != again.value || base.signature != again.signature) {
    throw UsageError(
        "gradcheck: function is not deterministic (freeze stochastic inputs)");
  }

  GradcheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<double>& t = *params[p];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double x0 = t[i];
      t[i] = x0 + step;
      const Eval plus = eval();
      t[i] = x0 - step;
      const Eval minus = eval();
      t[i] = x0;
      if (plus.signature != base.signature || minus.signature != base.signature) {
        ++report.excluded;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * step);
      const double err = gradcheck_rel_error(t.grad()[i], numeric);
      ++report.checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst = (p < names.size() ? names[p] : std::to_string(p)) + "#" +
                       std::to_string(i);
      }
    }
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

/// Single-tensor form: f maps a leaf Var to a scalar Var.
template <class F>
GradcheckReport gradcheck(F&& f, const Tensor<double>& point, double step,
                          double tolerance) {
  Tensor<double> x = point;
  TapeFunction g = [&](Tape<double>& tape) { return f(tape.leaf(x, "x")); };
  return gradcheck_params(g, {&x}, {"x"}, step, tolerance);
}

}  // namespace vib
