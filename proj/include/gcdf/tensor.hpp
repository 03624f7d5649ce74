#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "gcdf/errors.hpp"

namespace gcdf {

using i64 = std::int64_t;

// Dense row-major tensor. Rank 1 and 2 are what the model uses; the shape is
// kept general so tests can express scalars and small blocks uniformly.
template <class Real>
struct TensorT {
  std::vector<i64> shape;
  std::vector<Real> data;
  bool requires_grad = false;

  TensorT() = default;
  explicit TensorT(std::vector<i64> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(numel_of(shape)), Real(0));
  }
  TensorT(std::vector<i64> s, std::vector<Real> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel_of(shape) != static_cast<i64>(data.size()))
      throw shape_error("tensor: shape/data size mismatch");
  }

  static i64 numel_of(const std::vector<i64>& s) {
    i64 n = 1;
    for (i64 e : s) {
      if (e <= 0) throw shape_error("tensor: non-positive extent");
      n *= e;
    }
    return n;
  }

  i64 numel() const { return static_cast<i64>(data.size()); }
  i64 rows() const { return shape.empty() ? 1 : shape[0]; }
  i64 cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  bool is_scalar() const { return numel() == 1; }

  Real& at(i64 r, i64 c) { return data[static_cast<std::size_t>(r * cols() + c)]; }
  Real at(i64 r, i64 c) const { return data[static_cast<std::size_t>(r * cols() + c)]; }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (Real v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
  }
};

using Tensor = TensorT<double>;

// ---------------------------------------------------------------------------
// Matmul kernels. Accumulating forms so backward passes can add in place.
// Loop orders are chosen so the inner loop walks contiguous memory.
// ---------------------------------------------------------------------------

// C(m x n) += A(m x k) * B(k x n)
template <class Real>
void addmm_nn(const Real* a, i64 m, i64 k, const Real* b, i64 n, Real* c) {
  for (i64 i = 0; i < m; ++i) {
    const Real* arow = a + i * k;
    Real* crow = c + i * n;
    for (i64 p = 0; p < k; ++p) {
      const Real av = arow[p];
      const Real* brow = b + p * n;
      for (i64 j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(m x n) += A(m x k) * B(n x k)^T   (dot of contiguous rows)
template <class Real>
void addmm_nt(const Real* a, i64 m, i64 k, const Real* b, i64 n, Real* c) {
  for (i64 i = 0; i < m; ++i) {
    const Real* arow = a + i * k;
    Real* crow = c + i * n;
    for (i64 j = 0; j < n; ++j) {
      const Real* brow = b + j * k;
      Real s = 0;
      for (i64 p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
}

// C(m x n) += A(k x m)^T * B(k x n)
template <class Real>
void addmm_tn(const Real* a, i64 k, i64 m, const Real* b, i64 n, Real* c) {
  for (i64 p = 0; p < k; ++p) {
    const Real* arow = a + p * m;
    const Real* brow = b + p * n;
    for (i64 i = 0; i < m; ++i) {
      const Real av = arow[i];
      Real* crow = c + i * n;
      for (i64 j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class Real>
TensorT<Real> matmul_value(const TensorT<Real>& a, const TensorT<Real>& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2)
    throw shape_error("matmul: expects rank-2 tensors, got " + a.shape_str() + " and " + b.shape_str());
  if (a.cols() != b.rows())
    throw shape_error("matmul: inner dimensions disagree: " + a.shape_str() + " * " + b.shape_str());
  TensorT<Real> c({a.rows(), b.cols()});
  addmm_nn(a.data.data(), a.rows(), a.cols(), b.data.data(), b.cols(), c.data.data());
  return c;
}

// x (m x n) += row-broadcast bias (n entries).
template <class Real>
void add_bias_rows(Real* x, i64 m, i64 n, const Real* bias) {
  for (i64 i = 0; i < m; ++i) {
    Real* row = x + i * n;
    for (i64 j = 0; j < n; ++j) row[j] += bias[j];
  }
}

// Row softmax, stabilized by row-max subtraction.

template <class Real>
void softmax_rows_inplace(Real* x, i64 m, i64 n) {
  for (i64 i = 0; i < m; ++i) {
    Real* row = x + i * n;
    Real mx = row[0];
    for (i64 j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    Real s = 0;
    for (i64 j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      s += row[j];
    }
    const Real inv = Real(1) / s;
    for (i64 j = 0; j < n; ++j) row[j] *= inv;
  }
}

// GELU, tanh approximation (GPT-2 lineage).
template <class Real>
Real gelu_scalar(Real x) {
  const Real c = Real(0.7978845608028654);  // sqrt(2/pi)
  const Real u = c * (x + Real(0.044715) * x * x * x);
  return Real(0.5) * x * (Real(1) + std::tanh(u));
}

template <class Real>
Real gelu_grad_scalar(Real x) {
  const Real c = Real(0.7978845608028654);
  const Real u = c * (x + Real(0.044715) * x * x * x);
  const Real t = std::tanh(u);
  const Real du = c * (Real(1) + Real(3) * Real(0.044715) * x * x);
  return Real(0.5) * (Real(1) + t) + Real(0.5) * x * (Real(1) - t * t) * du;
}

constexpr double kLayerNormEps = 1e-5;

// Per-row normalization followed by the gamma/beta affine. xhat_out and
// rstd_out are optional caches for the backward pass. The graph op and the
// streaming inference path both call this, which keeps them bit-identical.
template <class Real>
void layer_norm_forward(const Real* x, i64 m, i64 n, const Real* gamma, const Real* beta,
                        Real* out, Real* xhat_out = nullptr, Real* rstd_out = nullptr) {
  for (i64 i = 0; i < m; ++i) {
    const Real* row = x + i * n;
    Real mu = 0;
    for (i64 j = 0; j < n; ++j) mu += row[j];
    mu /= Real(n);
    Real var = 0;
    for (i64 j = 0; j < n; ++j) {
      const Real d = row[j] - mu;
      var += d * d;
    }
    var /= Real(n);
    const Real rs = Real(1) / std::sqrt(var + Real(kLayerNormEps));
    if (rstd_out) rstd_out[i] = rs;
    for (i64 j = 0; j < n; ++j) {
      const Real xh = (row[j] - mu) * rs;
      if (xhat_out) xhat_out[i * n + j] = xh;
      out[i * n + j] = xh * gamma[j] + beta[j];
    }
  }
}

// dst (m x w) = src columns [off, off+w).
template <class Real>
void copy_cols(const Real* src, i64 m, i64 n, i64 off, i64 w, Real* dst) {
  for (i64 i = 0; i < m; ++i)
    for (i64 j = 0; j < w; ++j) dst[i * w + j] = src[i * n + off + j];
}

// dst columns [off, off+w) = src (m x w).
template <class Real>
void paste_cols(const Real* src, i64 m, i64 w, Real* dst, i64 n, i64 off) {
  for (i64 i = 0; i < m; ++i)
    for (i64 j = 0; j < w; ++j) dst[i * n + off + j] = src[i * w + j];
}

// Mean over all unique pairs (j < k) of: squared distance when labels match,
// squared hinge max(0, margin - distance)^2 when they differ.
template <class Real>
Real contrastive_pair_loss(const Real* z, i64 n, i64 d, const i64* labels, Real margin) {
  const i64 npairs = n * (n - 1) / 2;
  Real total = 0;
  for (i64 j = 0; j < n; ++j) {
    for (i64 k = j + 1; k < n; ++k) {
      Real d2 = 0;
      for (i64 c = 0; c < d; ++c) {
        const Real diff = z[j * d + c] - z[k * d + c];
        d2 += diff * diff;
      }
      if (labels[j] == labels[k]) {
        total += d2;
      } else {
        const Real h = margin - std::sqrt(d2);
        if (h > 0) total += h * h;
      }
    }
  }
  return total / Real(npairs);
}

}  // namespace gcdf
