#pragma once

// Differentiable primitives recorded on a Tape.
//
// Every op validates shapes, computes its forward value eagerly and registers
// a closure that adds into the adjoints of its inputs. Heavy linear algebra
// (convolution as im2col + GEMM, dense layers) is delegated to Eigen.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vib/core/errors.hpp"
#include "vib/core/tape.hpp"
#include "vib/core/tensor.hpp"

namespace vib {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

inline std::uint64_t fnv_step(std::uint64_t h, std::uint64_t v) {
  return (h ^ v) * 0x100000001b3ULL;
}

template <class T>
void require_same_tape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (&a.tape() != &b.tape()) {
    throw UsageError(std::string(op) + ": operands live on different tapes");
  }
}

template <class T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  require_same_tape(a, b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

// Lays out every receptive field of `x` ([C,H,W]) as a column:
// rows index (c, ki, kj), columns index output position (oi, oj).
template <class T>
RowMat<T> im2col(const T* x, std::size_t C, std::size_t H, std::size_t W,
                 std::size_t kh, std::size_t kw, std::size_t stride,
                 std::size_t Ho, std::size_t Wo) {
  RowMat<T> cols(static_cast<Eigen::Index>(C * kh * kw),
                 static_cast<Eigen::Index>(Ho * Wo));
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        T* row = cols.row(static_cast<Eigen::Index>((c * kh + ki) * kw + kj)).data();
        for (std::size_t oi = 0; oi < Ho; ++oi) {
          const T* src = x + (c * H + oi * stride + ki) * W + kj;
          T* dst = row + oi * Wo;
          if (stride == 1) {
            for (std::size_t oj = 0; oj < Wo; ++oj) dst[oj] = src[oj];
          } else {
            for (std::size_t oj = 0; oj < Wo; ++oj) dst[oj] = src[oj * stride];
          }
        }
      }
    }
  }
  return cols;
}

template <class T>
void col2im_add(const RowMat<T>& cols, T* dx, std::size_t C, std::size_t H,
                std::size_t W, std::size_t kh, std::size_t kw,
                std::size_t stride, std::size_t Ho, std::size_t Wo) {
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const T* row =
            cols.row(static_cast<Eigen::Index>((c * kh + ki) * kw + kj)).data();
        for (std::size_t oi = 0; oi < Ho; ++oi) {
          T* dst = dx + (c * H + oi * stride + ki) * W + kj;
          const T* src = row + oi * Wo;
          for (std::size_t oj = 0; oj < Wo; ++oj) dst[oj * stride] += src[oj];
        }
      }
    }
  }
}

}  // namespace detail

/// Output spatial extent of a valid (unpadded) convolution.
inline std::size_t conv_out_extent(std::size_t in, std::size_t k,
                                   std::size_t stride) {
  return (in - k) / stride + 1;
}

/// Valid 2-D cross-correlation: input [C_in,H,W], kernels [C_out,C_in,kh,kw],
/// bias [C_out] -> [C_out, (H-kh)/stride+1, (W-kw)/stride+1].
template <class T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, std::size_t stride = 1) {
  detail::require_same_tape(x, w, "conv2d");
  detail::require_same_tape(x, b, "conv2d");
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 3) {
    throw DimensionError("conv2d: input must be [C,H,W], got " + shape_str(xs));
  }
  if (ws.size() != 4) {
    throw DimensionError("conv2d: kernels must be [C_out,C_in,kh,kw], got " +
                         shape_str(ws));
  }
  if (stride == 0) throw DimensionError("conv2d: stride must be >= 1");
  const std::size_t C = xs[0], H = xs[1], W = xs[2];
  const std::size_t Co = ws[0], kh = ws[2], kw = ws[3];
  if (ws[1] != C) {
    throw DimensionError("conv2d: channel axis mismatch, input has " +
                         std::to_string(C) + " channels but kernels expect " +
                         std::to_string(ws[1]));
  }
  if (H < kh) {
    throw DimensionError("conv2d: height axis " + std::to_string(H) +
                         " smaller than kernel height " + std::to_string(kh));
  }
  if (W < kw) {
    throw DimensionError("conv2d: width axis " + std::to_string(W) +
                         " smaller than kernel width " + std::to_string(kw));
  }
  if (b.shape() != Shape{Co}) {
    throw DimensionError("conv2d: bias shape " + shape_str(b.shape()) +
                         " does not match output channels " + std::to_string(Co));
  }
  const std::size_t Ho = conv_out_extent(H, kh, stride);
  const std::size_t Wo = conv_out_extent(W, kw, stride);
  const auto K = static_cast<Eigen::Index>(C * kh * kw);
  const auto P = static_cast<Eigen::Index>(Ho * Wo);
  const auto CoI = static_cast<Eigen::Index>(Co);

  using Mat = detail::RowMat<T>;
  Tensor<T> out(Shape{Co, Ho, Wo});
  {
    Mat cols = detail::im2col(x.value().data().data(), C, H, W, kh, kw, stride,
                              Ho, Wo);
    Eigen::Map<const Mat> wm(w.value().data().data(), CoI, K);
    Eigen::Map<Mat> om(out.data().data(), CoI, P);
    om.noalias() = wm * cols;
    const T* bias = b.value().data().data();
    for (Eigen::Index c = 0; c < CoI; ++c) om.row(c).array() += bias[c];
  }

  const std::size_t xi = x.id(), wi = w.id(), bi = b.id();
  return x.tape().record(
      "conv2d", std::move(out), {xi, wi, bi},
      [=](Tape<T>& tape, const std::vector<T>& gout) {
        Eigen::Map<const Mat> gm(gout.data(), CoI, P);
        const Tensor<T>& xv = tape.value(xi);
        if (tape.needs_grad(wi) || tape.needs_grad(xi)) {
          Mat cols = detail::im2col(xv.data().data(), C, H, W, kh, kw, stride,
                                    Ho, Wo);
          if (tape.needs_grad(wi)) {
            Eigen::Map<Mat> gw(tape.adjoint(wi).data(), CoI, K);
            gw.noalias() += gm * cols.transpose();
          }
          if (tape.needs_grad(xi)) {
            Eigen::Map<const Mat> wm(tape.value(wi).data().data(), CoI, K);
            Mat gcols = wm.transpose() * gm;
            detail::col2im_add(gcols, tape.adjoint(xi).data(), C, H, W, kh, kw,
                               stride, Ho, Wo);
          }
        }
        if (tape.needs_grad(bi)) {
          auto& gb = tape.adjoint(bi);
          // fixed summation order, independent of buffer alignment
          for (Eigen::Index c = 0; c < CoI; ++c) {
            const T* row = gout.data() + c * P;
            T acc = 0;
            for (Eigen::Index p = 0; p < P; ++p) acc += row[p];
            gb[c] += acc;
          }
        }
      });
}

/// Affine map: input [n], weight [m,n], bias [m] -> weight*input + bias.
template <class T>
Var<T> dense(Var<T> x, Var<T> w, Var<T> b) {
  detail::require_same_tape(x, w, "dense");
  detail::require_same_tape(x, b, "dense");
  const Shape& ws = w.shape();
  if (x.shape().size() != 1) {
    throw DimensionError("dense: input must be a vector, got " +
                         shape_str(x.shape()));
  }
  if (ws.size() != 2) {
    throw DimensionError("dense: weight must be [m,n], got " + shape_str(ws));
  }
  const std::size_t m = ws[0], n = ws[1];
  if (x.shape()[0] != n) {
    throw DimensionError("dense: inner axis mismatch, input length " +
                         std::to_string(x.shape()[0]) + " vs weight columns " +
                         std::to_string(n));
  }
  if (b.shape() != Shape{m}) {
    throw DimensionError("dense: bias shape " + shape_str(b.shape()) +
                         " does not match output length " + std::to_string(m));
  }
  using Mat = detail::RowMat<T>;
  using Vec = detail::ColVec<T>;
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ni = static_cast<Eigen::Index>(n);
  Tensor<T> out(Shape{m});
  {
    Eigen::Map<const Mat> wm(w.value().data().data(), mi, ni);
    Eigen::Map<const Vec> xv(x.value().data().data(), ni);
    Eigen::Map<const Vec> bv(b.value().data().data(), mi);
    Eigen::Map<Vec> ov(out.data().data(), mi);
    ov.noalias() = wm * xv;
    ov += bv;
  }
  const std::size_t xi = x.id(), wi = w.id(), bi = b.id();
  return x.tape().record(
      "dense", std::move(out), {xi, wi, bi},
      [=](Tape<T>& tape, const std::vector<T>& gout) {
        Eigen::Map<const Vec> g(gout.data(), mi);
        if (tape.needs_grad(wi)) {
          Eigen::Map<const Vec> xv(tape.value(xi).data().data(), ni);
          Eigen::Map<Mat> gw(tape.adjoint(wi).data(), mi, ni);
          gw.noalias() += g * xv.transpose();
        }
        if (tape.needs_grad(xi)) {
          Eigen::Map<const Mat> wm(tape.value(wi).data().data(), mi, ni);
          Eigen::Map<Vec> gx(tape.adjoint(xi).data(), ni);
          gx.noalias() += wm.transpose() * g;
        }
        if (tape.needs_grad(bi)) {
          auto& gb = tape.adjoint(bi);
          for (std::size_t i = 0; i < m; ++i) gb[i] += gout[i];
        }
      });
}

/// Elementwise max(0, x). Subgradient at 0 is 0.
template <class T>
Var<T> relu(Var<T> x) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  std::uint64_t sig = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const bool on = xv[i] > T{0};
    out[i] = on ? xv[i] : T{0};
    // Exact zeros hash differently from both sides so kinks are detectable.
    sig = detail::fnv_step(sig, on ? 1u : (xv[i] == T{0} ? 2u : 0u));
  }
  x.tape().note_branch(sig);
  const std::size_t xi = x.id();
  return x.tape().record("relu", std::move(out), {xi},
                         [xi](Tape<T>& tape, const std::vector<T>& gout) {
                           const Tensor<T>& v = tape.value(xi);
                           auto& gx = tape.adjoint(xi);
                           for (std::size_t i = 0; i < gout.size(); ++i) {
                             if (v[i] > T{0}) gx[i] += gout[i];
                           }
                         });
}

/// Non-overlapping 2x2 max pooling over [C,H,W]; odd trailing rows/columns
/// are dropped. Gradient goes to the first maximum in row-major order.
template <class T>
Var<T> maxpool2d(Var<T> x) {
  const Shape& xs = x.shape();
  if (xs.size() != 3) {
    throw DimensionError("maxpool2d: input must be [C,H,W], got " + shape_str(xs));
  }
  const std::size_t C = xs[0], H = xs[1], W = xs[2];
  if (H < 2) throw DimensionError("maxpool2d: height axis " + std::to_string(H) + " < 2");
  if (W < 2) throw DimensionError("maxpool2d: width axis " + std::to_string(W) + " < 2");
  const std::size_t Ho = H / 2, Wo = W / 2;
  const Tensor<T>& xv = x.value();
  Tensor<T> out(Shape{C, Ho, Wo});
  std::vector<std::size_t> argmax(out.size());
  std::uint64_t sig = 0xcbf29ce484222325ULL;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < Ho; ++i) {
      for (std::size_t j = 0; j < Wo; ++j) {
        std::size_t best = (c * H + 2 * i) * W + 2 * j;
        std::uint64_t tie = 0;
        for (std::size_t di = 0; di < 2; ++di) {
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = (c * H + 2 * i + di) * W + 2 * j + dj;
            if (xv[idx] > xv[best]) best = idx;
            else if (idx != best && xv[idx] == xv[best]) tie = 1;
          }
        }
        const std::size_t o = (c * Ho + i) * Wo + j;
        out[o] = xv[best];
        argmax[o] = best;
        sig = detail::fnv_step(sig, best * 2 + tie);
      }
    }
  }
  x.tape().note_branch(sig);
  const std::size_t xi = x.id();
  return x.tape().record(
      "maxpool2d", std::move(out), {xi},
      [xi, argmax = std::move(argmax)](Tape<T>& tape, const std::vector<T>& gout) {
        auto& gx = tape.adjoint(xi);
        for (std::size_t o = 0; o < gout.size(); ++o) gx[argmax[o]] += gout[o];
      });
}

/// -log softmax(logits)[label], via max-subtracted log-sum-exp.
template <class T>
Var<T> softmax_cross_entropy(Var<T> logits, std::size_t label) {
  const Tensor<T>& z = logits.value();
  if (z.rank() != 1) {
    throw DimensionError("softmax_cross_entropy: logits must be a vector, got " +
                         shape_str(z.shape()));
  }
  const std::size_t C = z.size();
  if (label >= C) {
    throw InputError("softmax_cross_entropy: label " + std::to_string(label) +
                     " out of range for " + std::to_string(C) + " classes");
  }
  T zmax = z[0];
  for (std::size_t i = 1; i < C; ++i) zmax = std::max(zmax, z[i]);
  T sum = 0;
  for (std::size_t i = 0; i < C; ++i) sum += std::exp(z[i] - zmax);
  const T lse = zmax + std::log(sum);
  const T loss = std::max(T{0}, lse - z[label]);
  const std::size_t zi = logits.id();
  return logits.tape().record(
      "softmax_ce", Tensor<T>::scalar(loss), {zi},
      [zi, label, lse](Tape<T>& tape, const std::vector<T>& gout) {
        const Tensor<T>& zv = tape.value(zi);
        auto& gz = tape.adjoint(zi);
        for (std::size_t i = 0; i < zv.size(); ++i) {
          T p = std::exp(zv[i] - lse);
          if (i == label) p -= T{1};
          gz[i] += gout[0] * p;
        }
      });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record("add", std::move(out), {ai, bi},
                         [ai, bi](Tape<T>& tape, const std::vector<T>& g) {
                           if (tape.needs_grad(ai)) {
                             auto& ga = tape.adjoint(ai);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                           }
                           if (tape.needs_grad(bi)) {
                             auto& gb = tape.adjoint(bi);
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                           }
                         });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape().record("mul", std::move(out), {ai, bi},
                         [ai, bi](Tape<T>& tape, const std::vector<T>& g) {
                           const Tensor<T>& av = tape.value(ai);
                           const Tensor<T>& bv = tape.value(bi);
                           if (tape.needs_grad(ai)) {
                             auto& ga = tape.adjoint(ai);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                           }
                           if (tape.needs_grad(bi)) {
                             auto& gb = tape.adjoint(bi);
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                           }
                         });
}

template <class T>
Var<T> scale(Var<T> a, T c) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * c;
  const std::size_t ai = a.id();
  return a.tape().record("scale", std::move(out), {ai},
                         [ai, c](Tape<T>& tape, const std::vector<T>& g) {
                           auto& ga = tape.adjoint(ai);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
                         });
}

template <class T>
Var<T> add_scalar(Var<T> a, T c) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + c;
  const std::size_t ai = a.id();
  return a.tape().record("add_scalar", std::move(out), {ai},
                         [ai](Tape<T>& tape, const std::vector<T>& g) {
                           auto& ga = tape.adjoint(ai);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                         });
}

template <class T>
Var<T> sum(Var<T> a) {
  T s = 0;
  for (T v : a.value().data()) s += v;
  const std::size_t ai = a.id();
  return a.tape().record("sum", Tensor<T>::scalar(s), {ai},
                         [ai](Tape<T>& tape, const std::vector<T>& g) {
                           auto& ga = tape.adjoint(ai);
                           for (auto& v : ga) v += g[0];
                         });
}

/// Σ x_i².
template <class T>
Var<T> sum_squares(Var<T> a) {
  T s = 0;
  for (T v : a.value().data()) s += v * v;
  const std::size_t ai = a.id();
  return a.tape().record("sum_squares", Tensor<T>::scalar(s), {ai},
                         [ai](Tape<T>& tape, const std::vector<T>& g) {
                           const Tensor<T>& av = tape.value(ai);
                           auto& ga = tape.adjoint(ai);
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2 * av[i] * g[0];
                         });
}

/// Numerically stable log(1 + e^x).
template <class T>
T softplus_value(T x) {
  return std::max(x, T{0}) + std::log1p(std::exp(-std::abs(x)));
}

template <class T>
Var<T> softplus(Var<T> a) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = softplus_value(a.value()[i]);
  const std::size_t ai = a.id();
  return a.tape().record("softplus", std::move(out), {ai},
                         [ai](Tape<T>& tape, const std::vector<T>& g) {
                           const Tensor<T>& av = tape.value(ai);
                           auto& ga = tape.adjoint(ai);
                           for (std::size_t i = 0; i < ga.size(); ++i) {
                             const T x = av[i];
                             // logistic(x), evaluated without overflow
                             const T s = x >= 0 ? T{1} / (T{1} + std::exp(-x))
                                                : std::exp(x) / (T{1} + std::exp(x));
                             ga[i] += g[i] * s;
                           }
                         });
}

template <class T>
Var<T> reshape(Var<T> a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
  }
  Tensor<T> out = a.value().reshaped(std::move(shape));
  const std::size_t ai = a.id();
  return a.tape().record("reshape", std::move(out), {ai},
                         [ai](Tape<T>& tape, const std::vector<T>& g) {
                           auto& ga = tape.adjoint(ai);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                         });
}

template <class T>
Var<T> flatten(Var<T> a) {
  return reshape(a, Shape{a.size()});
}

/// Contiguous range [offset, offset+len) of a vector.
template <class T>
Var<T> slice(Var<T> a, std::size_t offset, std::size_t len) {
  if (a.shape().size() != 1 || offset + len > a.size() || len == 0) {
    throw DimensionError("slice: range [" + std::to_string(offset) + ", " +
                         std::to_string(offset + len) + ") invalid for shape " +
                         shape_str(a.shape()));
  }
  std::vector<T> d(a.value().data().begin() + offset,
                   a.value().data().begin() + offset + len);
  const std::size_t ai = a.id();
  return a.tape().record("slice", Tensor<T>(Shape{len}, std::move(d)), {ai},
                         [ai, offset](Tape<T>& tape, const std::vector<T>& g) {
                           auto& ga = tape.adjoint(ai);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
                         });
}

/// Multiplies channel c of [C,H,W] by factors[c]. Spatial dropout masks are
/// passed in as fixed factors (0 or 1/(1-p)).
template <class T>
Var<T> channel_scale(Var<T> x, std::vector<T> factors) {
  const Shape& xs = x.shape();
  if (xs.size() != 3 || factors.size() != xs[0]) {
    throw DimensionError("channel_scale: " + std::to_string(factors.size()) +
                         " factors for input " + shape_str(xs));
  }
  const std::size_t plane = xs[1] * xs[2];
  Tensor<T> out(xs);
  for (std::size_t c = 0; c < xs[0]; ++c) {
    for (std::size_t k = 0; k < plane; ++k) {
      out[c * plane + k] = x.value()[c * plane + k] * factors[c];
    }
  }
  const std::size_t xi = x.id();
  return x.tape().record(
      "channel_scale", std::move(out), {xi},
      [xi, plane, factors = std::move(factors)](Tape<T>& tape, const std::vector<T>& g) {
        auto& gx = tape.adjoint(xi);
        for (std::size_t c = 0; c < factors.size(); ++c) {
          for (std::size_t k = 0; k < plane; ++k) gx[c * plane + k] += g[c * plane + k] * factors[c];
        }
      });
}

/// Index of the largest logit; ties resolve to the lowest index.
template <class T>
std::size_t argmax(std::span<const T> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace vib
