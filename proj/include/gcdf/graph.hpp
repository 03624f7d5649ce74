#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "gcdf/tensor.hpp"

namespace gcdf {

// Reverse-mode tape. Ops evaluate eagerly; each records a closure that scatters
// the output gradient back to its inputs. backward() walks the tape once in
// reverse creation order, which is a valid reverse topological order because
// ops can only consume already-created nodes.
template <class Real>
class GraphT {
 public:
  using T = TensorT<Real>;

  GraphT() = default;
  GraphT(const GraphT&) = delete;
  GraphT& operator=(const GraphT&) = delete;

  int leaf(T t) {
    const bool rg = t.requires_grad;
    return push(std::move(t), rg, {});
  }
  int constant(T t) {
    t.requires_grad = false;
    return push(std::move(t), false, {});
  }

  const T& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  T& value(int id) { return nodes_[static_cast<std::size_t>(id)].value; }
  const T& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

  // ---- arithmetic -----------------------------------------------------------

  int add(int a, int b) {
    check_same_shape("add", a, b);
    T out = value(a);
    const T& vb = value(b);
    for (i64 i = 0; i < out.numel(); ++i) out.data[i] += vb.data[i];
    return push(std::move(out), any_grad({a, b}), {a, b}, [a, b](GraphT& g, int o) {
      g.accumulate(a, g.grad(o).data.data(), 1);
      g.accumulate(b, g.grad(o).data.data(), 1);
    });
  }

  int sub(int a, int b) {
    check_same_shape("sub", a, b);
    T out = value(a);
    const T& vb = value(b);
    for (i64 i = 0; i < out.numel(); ++i) out.data[i] -= vb.data[i];
    return push(std::move(out), any_grad({a, b}), {a, b}, [a, b](GraphT& g, int o) {
      g.accumulate(a, g.grad(o).data.data(), 1);
      g.accumulate(b, g.grad(o).data.data(), -1);
    });
  }

  int mul(int a, int b) {
    check_same_shape("mul", a, b);
    T out = value(a);
    const T& vb = value(b);
    for (i64 i = 0; i < out.numel(); ++i) out.data[i] *= vb.data[i];
    return push(std::move(out), any_grad({a, b}), {a, b}, [a, b](GraphT& g, int o) {
      const T& go = g.grad(o);
      if (g.needs_grad(a)) {
        T tmp = go;
        const T& vb2 = g.value(b);
        for (i64 i = 0; i < tmp.numel(); ++i) tmp.data[i] *= vb2.data[i];
        g.accumulate(a, tmp.data.data(), 1);
      }
      if (g.needs_grad(b)) {
        T tmp = go;
        const T& va2 = g.value(a);
        for (i64 i = 0; i < tmp.numel(); ++i) tmp.data[i] *= va2.data[i];
        g.accumulate(b, tmp.data.data(), 1);
      }
    });
  }

  int scale(int a, Real s) {
    T out = value(a);
    for (Real& v : out.data) v *= s;
    return push(std::move(out), any_grad({a}), {a}, [a, s](GraphT& g, int o) {
      if (!g.needs_grad(a)) return;
      T tmp = g.grad(o);
      for (Real& v : tmp.data) v *= s;
      g.accumulate(a, tmp.data.data(), 1);
    });
  }

  // x (m x n) + bias broadcast over rows; bias numel == n.
  int add_bias(int a, int bias) {
    const T& va = value(a);
    const T& vb = value(bias);
    if (vb.numel() != va.cols())
      throw shape_error("add_bias: bias numel " + vb.shape_str() + " vs cols of " + va.shape_str());
    T out = va;
    const i64 m = va.rows(), n = va.cols();
    add_bias_rows(out.data.data(), m, n, vb.data.data());
    return push(std::move(out), any_grad({a, bias}), {a, bias}, [a, bias, m, n](GraphT& g, int o) {
      const T& go = g.grad(o);
      g.accumulate(a, go.data.data(), 1);
      if (g.needs_grad(bias)) {
        std::vector<Real> db(static_cast<std::size_t>(n), Real(0));
        for (i64 i = 0; i < m; ++i)
          for (i64 j = 0; j < n; ++j) db[static_cast<std::size_t>(j)] += go.data[i * n + j];
        g.accumulate(bias, db.data(), 1);
      }
    });
  }

  // ---- linear algebra -------------------------------------------------------

  int matmul(int a, int b) {
    T out = matmul_value(value(a), value(b));
    return push(std::move(out), any_grad({a, b}), {a, b}, [a, b](GraphT& g, int o) {
      const T& va = g.value(a);
      const T& vb = g.value(b);
      const T& go = g.grad(o);
      const i64 m = va.rows(), k = va.cols(), n = vb.cols();
      if (g.needs_grad(a)) {
        std::vector<Real> da(static_cast<std::size_t>(m * k), Real(0));
        addmm_nt(go.data.data(), m, n, vb.data.data(), k, da.data());
        g.accumulate(a, da.data(), 1);
      }
      if (g.needs_grad(b)) {
        std::vector<Real> db(static_cast<std::size_t>(k * n), Real(0));
        addmm_tn(va.data.data(), m, k, go.data.data(), n, db.data());
        g.accumulate(b, db.data(), 1);
      }
    });
  }

  // a (m x k) * b(n x k)^T -> (m x n)
  int matmul_nt(int a, int b) {
    const T& va = value(a);
    const T& vb = value(b);
    if (va.cols() != vb.cols())
      throw shape_error("matmul_nt: " + va.shape_str() + " vs " + vb.shape_str());
    T out({va.rows(), vb.rows()});
    addmm_nt(va.data.data(), va.rows(), va.cols(), vb.data.data(), vb.rows(), out.data.data());
    return push(std::move(out), any_grad({a, b}), {a, b}, [a, b](GraphT& g, int o) {
      const T& va2 = g.value(a);
      const T& vb2 = g.value(b);
      const T& go = g.grad(o);
      const i64 m = va2.rows(), k = va2.cols(), n = vb2.rows();
      if (g.needs_grad(a)) {
        std::vector<Real> da(static_cast<std::size_t>(m * k), Real(0));
        addmm_nn(go.data.data(), m, n, vb2.data.data(), k, da.data());
        g.accumulate(a, da.data(), 1);
      }
      if (g.needs_grad(b)) {
        std::vector<Real> db(static_cast<std::size_t>(n * k), Real(0));
        addmm_tn(go.data.data(), m, n, va2.data.data(), k, db.data());
        g.accumulate(b, db.data(), 1);
      }
    });
  }

  // ---- nonlinearities -------------------------------------------------------

  int softmax_rows(int a) {
    T out = value(a);
    softmax_rows_inplace(out.data.data(), out.rows(), out.cols());
    return push(std::move(out), any_grad({a}), {a}, [a](GraphT& g, int o) {
      if (!g.needs_grad(a)) return;
      const T& y = g.value(o);
      const T& go = g.grad(o);
      const i64 m = y.rows(), n = y.cols();
      std::vector<Real> dx(static_cast<std::size_t>(m * n));
      for (i64 i = 0; i < m; ++i) {
        const Real* yr = y.data.data() + i * n;
        const Real* gr = go.data.data() + i * n;
        Real dot = 0;
        for (i64 j = 0; j < n; ++j) dot += yr[j] * gr[j];
        Real* dr = dx.data() + i * n;
        for (i64 j = 0; j < n; ++j) dr[j] = yr[j] * (gr[j] - dot);
      }
      g.accumulate(a, dx.data(), 1);
    });
  }

  int layer_norm(int x, int gamma, int beta) {
    const T& vx = value(x);
    const i64 m = vx.rows(), n = vx.cols();
    if (value(gamma).numel() != n || value(beta).numel() != n)
      throw shape_error("layer_norm: gamma/beta must have " + std::to_string(n) + " entries");
    // Cache xhat and 1/std per row for the backward pass.
    auto xhat = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(m * n));
    auto rstd = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(m));
    T out({m, n});
    layer_norm_forward(vx.data.data(), m, n, value(gamma).data.data(), value(beta).data.data(),
                       out.data.data(), xhat->data(), rstd->data());
    return push(std::move(out), any_grad({x, gamma, beta}), {x, gamma, beta},
                [x, gamma, beta, m, n, xhat, rstd](GraphT& g, int o) {
      const T& go = g.grad(o);
      const Real* gm = g.value(gamma).data.data();
      if (g.needs_grad(gamma)) {
        std::vector<Real> dg(static_cast<std::size_t>(n), Real(0));
        for (i64 i = 0; i < m; ++i)
          for (i64 j = 0; j < n; ++j)
            dg[static_cast<std::size_t>(j)] += go.data[i * n + j] * (*xhat)[static_cast<std::size_t>(i * n + j)];
        g.accumulate(gamma, dg.data(), 1);
      }
      if (g.needs_grad(beta)) {
        std::vector<Real> db(static_cast<std::size_t>(n), Real(0));
        for (i64 i = 0; i < m; ++i)
          for (i64 j = 0; j < n; ++j) db[static_cast<std::size_t>(j)] += go.data[i * n + j];
        g.accumulate(beta, db.data(), 1);
      }
      if (g.needs_grad(x)) {
        std::vector<Real> dx(static_cast<std::size_t>(m * n));
        for (i64 i = 0; i < m; ++i) {
          const Real* gr = go.data.data() + i * n;
          const Real* xh = xhat->data() + i * n;
          Real s1 = 0, s2 = 0;
          for (i64 j = 0; j < n; ++j) {
            const Real dxh = gr[j] * gm[j];
            s1 += dxh;
            s2 += dxh * xh[j];
          }
          s1 /= Real(n);
          s2 /= Real(n);
          const Real rs = (*rstd)[static_cast<std::size_t>(i)];
          Real* dr = dx.data() + i * n;
          for (i64 j = 0; j < n; ++j) dr[j] = rs * (gr[j] * gm[j] - s1 - xh[j] * s2);
        }
        g.accumulate(x, dx.data(), 1);
      }
    });
  }

  int gelu(int a) {
    T out = value(a);
    for (Real& v : out.data) v = gelu_scalar(v);
    return push(std::move(out), any_grad({a}), {a}, [a](GraphT& g, int o) {
      if (!g.needs_grad(a)) return;
      const T& vx = g.value(a);
      const T& go = g.grad(o);
      std::vector<Real> dx(vx.data.size());
      for (std::size_t i = 0; i < dx.size(); ++i)
        dx[i] = go.data[i] * gelu_grad_scalar(vx.data[i]);
      g.accumulate(a, dx.data(), 1);
    });
  }

  // ---- structure ------------------------------------------------------------

  int concat_cols(const std::vector<int>& parts) {
    if (parts.empty()) throw contract_error("concat_cols: empty part list");
    const i64 m = value(parts[0]).rows();
    i64 n = 0;
    for (int p : parts) {
      if (value(p).rows() != m) throw shape_error("concat_cols: row count mismatch");
      n += value(p).cols();
    }
    T out({m, n});
    i64 off = 0;
    for (int p : parts) {
      const T& vp = value(p);
      paste_cols(vp.data.data(), m, vp.cols(), out.data.data(), n, off);
      off += vp.cols();
    }
    std::vector<int> ins = parts;
    bool ng = any_grad(ins);
    return push(std::move(out), ng, ins, [parts, m, n](GraphT& g, int o) {
      const T& go = g.grad(o);
      i64 off2 = 0;
      for (int p : parts) {
        const i64 w = g.value(p).cols();
        if (g.needs_grad(p)) {
          std::vector<Real> dp(static_cast<std::size_t>(m * w));
          for (i64 i = 0; i < m; ++i)
            for (i64 j = 0; j < w; ++j) dp[static_cast<std::size_t>(i * w + j)] = go.data[i * n + off2 + j];
          g.accumulate(p, dp.data(), 1);
        }
        off2 += w;
      }
    });
  }

  int slice_cols(int a, i64 off, i64 w) {
    const T& va = value(a);
    const i64 m = va.rows(), n = va.cols();
    if (off < 0 || w <= 0 || off + w > n) throw shape_error("slice_cols: window out of range");
    T out({m, w});
    copy_cols(va.data.data(), m, n, off, w, out.data.data());
    return push(std::move(out), any_grad({a}), {a}, [a, off, w, m, n](GraphT& g, int o) {
      if (!g.needs_grad(a)) return;
      const T& go = g.grad(o);
      std::vector<Real> da(static_cast<std::size_t>(m * n), Real(0));
      for (i64 i = 0; i < m; ++i)
        for (i64 j = 0; j < w; ++j) da[static_cast<std::size_t>(i * n + off + j)] = go.data[i * w + j];
      g.accumulate(a, da.data(), 1);
    });
  }

  // out row i = input row idx[i]; idx need not be a permutation.
  int gather_rows(int a, std::vector<i64> idx) {
    const T& va = value(a);
    const i64 n = va.cols(), m = static_cast<i64>(idx.size());
    for (i64 r : idx)
      if (r < 0 || r >= va.rows()) throw shape_error("gather_rows: index out of range");
    T out({m, n});
    for (i64 i = 0; i < m; ++i)
      for (i64 j = 0; j < n; ++j) out.data[i * n + j] = va.data[idx[static_cast<std::size_t>(i)] * n + j];
    auto ix = std::make_shared<std::vector<i64>>(std::move(idx));
    const i64 rows_a = va.rows();
    return push(std::move(out), any_grad({a}), {a}, [a, ix, rows_a, n, m](GraphT& g, int o) {
      if (!g.needs_grad(a)) return;
      const T& go = g.grad(o);
      std::vector<Real> da(static_cast<std::size_t>(rows_a * n), Real(0));
      for (i64 i = 0; i < m; ++i) {
        const i64 r = (*ix)[static_cast<std::size_t>(i)];
        for (i64 j = 0; j < n; ++j) da[static_cast<std::size_t>(r * n + j)] += go.data[i * n + j];
      }
      g.accumulate(a, da.data(), 1);
    });
  }

  // ---- reductions -----------------------------------------------------------

  int sum_all(int a) {
    const T& va = value(a);
    Real s = 0;
    for (Real v : va.data) s += v;
    T out({1});
    out.data[0] = s;
    return push(std::move(out), any_grad({a}), {a}, [a](GraphT& g, int o) {
      if (!g.needs_grad(a)) return;
      const Real gy = g.grad(o).data[0];
      std::vector<Real> da(g.value(a).data.size(), gy);
      g.accumulate(a, da.data(), 1);
    });
  }

  int mean_all(int a) {
    const i64 n = value(a).numel();
    return scale(sum_all(a), Real(1) / Real(n));
  }

  // Pairwise contrastive margin loss over all unique pairs (j < k):
  // same label -> squared distance, different label -> squared hinge
  // max(0, m - distance)^2; result is the mean over pairs. At distance 0
  // between different labels the hinge subgradient is taken as 0.
  int contrastive_loss(int z, std::vector<i64> labels, Real margin) {
    const T& vz = value(z);
    const i64 n = vz.rows(), d = vz.cols();
    if (n < 2) throw contract_error("contrastive_loss: need at least 2 points");
    if (static_cast<i64>(labels.size()) != n)
      throw contract_error("contrastive_loss: labels size must match rows");
    const i64 npairs = n * (n - 1) / 2;
    T out({1});
    out.data[0] = contrastive_pair_loss(vz.data.data(), n, d, labels.data(), margin);
    auto lab = std::make_shared<std::vector<i64>>(std::move(labels));
    return push(std::move(out), any_grad({z}), {z}, [z, lab, margin, n, d, npairs](GraphT& g, int o) {
      if (!g.needs_grad(z)) return;
      const Real gy = g.grad(o).data[0] / Real(npairs);
      const T& vz2 = g.value(z);
      std::vector<Real> dz(static_cast<std::size_t>(n * d), Real(0));
      for (i64 j = 0; j < n; ++j) {
        for (i64 k = j + 1; k < n; ++k) {
          Real d2 = 0;
          for (i64 c = 0; c < d; ++c) {
            const Real diff = vz2.data[j * d + c] - vz2.data[k * d + c];
            d2 += diff * diff;
          }
          if ((*lab)[static_cast<std::size_t>(j)] == (*lab)[static_cast<std::size_t>(k)]) {
            for (i64 c = 0; c < d; ++c) {
              const Real diff = vz2.data[j * d + c] - vz2.data[k * d + c];
              dz[static_cast<std::size_t>(j * d + c)] += gy * 2 * diff;
              dz[static_cast<std::size_t>(k * d + c)] -= gy * 2 * diff;
            }
          } else {
            const Real dist = std::sqrt(d2);
            const Real h = margin - dist;
            if (h > 0 && dist > 0) {
              const Real coef = gy * (-2) * h / dist;
              for (i64 c = 0; c < d; ++c) {
                const Real diff = vz2.data[j * d + c] - vz2.data[k * d + c];
                dz[static_cast<std::size_t>(j * d + c)] += coef * diff;
                dz[static_cast<std::size_t>(k * d + c)] -= coef * diff;
              }
            }
          }
        }
      }
      g.accumulate(z, dz.data(), 1);
    });
  }

  // ---- backward -------------------------------------------------------------

  void backward(int loss_id) {
    Node& ln = nodes_[static_cast<std::size_t>(loss_id)];
    if (!ln.value.is_scalar()) throw contract_error("backward: loss node must be scalar");
    for (Node& nd : nodes_) {
      nd.grad = T();
      nd.grad_ready = false;
    }
    ensure_grad(loss_id);
    ln.grad.data[0] = 1;
    for (int id = loss_id; id >= 0; --id) {
      Node& nd = nodes_[static_cast<std::size_t>(id)];
      if (!nd.needs_grad || !nd.grad_ready || !nd.backprop) continue;
      nd.backprop(*this, id);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    T value;
    T grad;
    bool grad_ready = false;
    bool needs_grad = false;
    std::function<void(GraphT&, int)> backprop;
  };
  std::vector<Node> nodes_;

  bool any_grad(const std::vector<int>& ids) const {
    for (int id : ids)
      if (nodes_[static_cast<std::size_t>(id)].needs_grad) return true;
    return false;
  }

  void check_same_shape(const char* op, int a, int b) const {
    if (!value(a).same_shape(value(b)))
      throw shape_error(std::string(op) + ": shape mismatch " + value(a).shape_str() + " vs " +
                        value(b).shape_str());
  }

  void ensure_grad(int id) {
    Node& nd = nodes_[static_cast<std::size_t>(id)];
    if (!nd.grad_ready) {
      nd.grad = T(nd.value.shape);
      nd.grad_ready = true;
    }
  }

  void accumulate(int id, const Real* g, int sign) {
    Node& nd = nodes_[static_cast<std::size_t>(id)];
    if (!nd.needs_grad) return;
    ensure_grad(id);
    const std::size_t n = nd.grad.data.size();
    if (sign > 0)
      for (std::size_t i = 0; i < n; ++i) nd.grad.data[i] += g[i];
    else
      for (std::size_t i = 0; i < n; ++i) nd.grad.data[i] -= g[i];
  }

  int push(T value, bool needs_grad, std::vector<int> /*inputs*/,
           std::function<void(GraphT&, int)> backprop = nullptr) {
    Node nd;
    nd.value = std::move(value);
    nd.needs_grad = needs_grad;
    nd.backprop = std::move(backprop);
    nodes_.push_back(std::move(nd));
    return static_cast<int>(nodes_.size()) - 1;
  }
};

using Graph = GraphT<double>;

}  // namespace gcdf
