#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "gcdf/errors.hpp"
#include "gcdf/tensor.hpp"

namespace gcdf {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled-weight-decay Adam with bias correction. Moments are kept per
// parameter tensor, in the order the parameters were registered.
template <class Real>
struct AdamWStateT {
  AdamWConfig cfg;
  std::int64_t step = 0;
  std::vector<std::vector<Real>> m;
  std::vector<std::vector<Real>> v;

  void init(const std::vector<TensorT<Real>>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.data.size(), Real(0));
      v.emplace_back(p.data.size(), Real(0));
    }
    step = 0;
  }

  void apply(std::vector<TensorT<Real>>& params, const std::vector<TensorT<Real>>& grads) {
    if (params.size() != grads.size() || params.size() != m.size())
      throw contract_error("adamw: parameter/gradient/moment count mismatch");
    ++step;
    const Real bc1 = Real(1) - static_cast<Real>(std::pow(cfg.beta1, static_cast<double>(step)));
    const Real bc2 = Real(1) - static_cast<Real>(std::pow(cfg.beta2, static_cast<double>(step)));
    const Real lr = static_cast<Real>(cfg.lr);
    const Real b1 = static_cast<Real>(cfg.beta1);
    const Real b2 = static_cast<Real>(cfg.beta2);
    const Real eps = static_cast<Real>(cfg.eps);
    const Real wd = static_cast<Real>(cfg.weight_decay);
    for (std::size_t t = 0; t < params.size(); ++t) {
      auto& p = params[t].data;
      const auto& g = grads[t].data;
      if (p.size() != g.size()) throw contract_error("adamw: gradient shape mismatch");
      auto& mt = m[t];
      auto& vt = v[t];
      for (std::size_t i = 0; i < p.size(); ++i) {
        mt[i] = b1 * mt[i] + (Real(1) - b1) * g[i];
        vt[i] = b2 * vt[i] + (Real(1) - b2) * g[i] * g[i];
        const Real mhat = mt[i] / bc1;
        const Real vhat = vt[i] / bc2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[i]);
      }
    }
  }
};

using AdamWState = AdamWStateT<double>;

}  // namespace gcdf
