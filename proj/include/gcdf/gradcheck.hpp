#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "gcdf/graph.hpp"
#include "gcdf/rng.hpp"
#include "gcdf/tensor.hpp"

namespace gcdf {

// Builder receives a fresh graph plus the leaf ids of `params` (registered in
// order, requires_grad on) and returns the scalar loss node id.
using ScalarBuilder = std::function<int(Graph&, const std::vector<int>&)>;

// Central-difference check of backward(). Returns the max normalized error
// |fd - analytic| / max(1, |fd|, |analytic|) over the checked coordinates.
// max_coords_per_param == 0 checks every coordinate; a positive value checks
// that many seeded-random coordinates per parameter tensor, which keeps large
// models inside a test-time budget while still touching every tensor.
inline double gradient_check(std::vector<Tensor> params, const ScalarBuilder& build, double h,
                             i64 max_coords_per_param = 0, std::uint64_t seed = 17) {
  for (auto& p : params) p.requires_grad = true;

  Graph g;
  std::vector<int> ids;
  ids.reserve(params.size());
  for (const auto& p : params) ids.push_back(g.leaf(p));
  const int loss = build(g, ids);
  g.backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (int id : ids) analytic.push_back(g.grad(id));

  auto loss_at = [&](const std::vector<Tensor>& ps) {
    Graph gg;
    std::vector<int> iids;
    iids.reserve(ps.size());
    for (const auto& p : ps) iids.push_back(gg.leaf(p));
    return gg.value(build(gg, iids)).data[0];
  };

  Rng rng(seed);
  double max_err = 0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    const i64 numel = params[t].numel();
    std::vector<i64> coords;
    if (max_coords_per_param <= 0 || numel <= max_coords_per_param) {
      coords.resize(static_cast<std::size_t>(numel));
      for (i64 i = 0; i < numel; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      for (i64 i = 0; i < max_coords_per_param; ++i)
        coords.push_back(rng.uniform_int(0, numel - 1));
    }
    for (i64 c : coords) {
      const double orig = params[t].data[static_cast<std::size_t>(c)];
      params[t].data[static_cast<std::size_t>(c)] = orig + h;
      const double fp = loss_at(params);
      params[t].data[static_cast<std::size_t>(c)] = orig - h;
      const double fm = loss_at(params);
      params[t].data[static_cast<std::size_t>(c)] = orig;
      const double fd = (fp - fm) / (2 * h);
      const double an = analytic[t].data[static_cast<std::size_t>(c)];
      const double denom = std::max({1.0, std::abs(fd), std::abs(an)});
      max_err = std::max(max_err, std::abs(fd - an) / denom);
    }
  }
  return max_err;
}

}  // namespace gcdf
