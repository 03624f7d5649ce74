#include "gcdf/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gcdf/errors.hpp"

namespace gcdf {

const char* family_name(Family f) {
  switch (f) {
    case Family::normal: return "normal";
    case Family::laplace: return "laplace";
    case Family::von_mises: return "von_mises";
    case Family::uniform: return "uniform";
  }
  throw config_error("family_name: unknown family id");
}

Family family_from_name(const std::string& s) {
  if (s == "normal") return Family::normal;
  if (s == "laplace") return Family::laplace;
  if (s == "von_mises") return Family::von_mises;
  if (s == "uniform") return Family::uniform;
  throw config_error("unknown distribution family: " + s);
}

void GenConfig::validate() const {
  if (d < 1) throw config_error("gen: d must be >= 1");
  if (min_clusters < 1) throw config_error("gen: min_clusters must be >= 1");
  if (min_clusters > max_clusters) throw config_error("gen: min_clusters > max_clusters");
  if (max_clusters > 999) throw config_error("gen: max_clusters must be <= 999 (labels are 1..1000)");
  if (min_points_per_cluster < 1) throw config_error("gen: min_points_per_cluster must be >= 1");
  if (max_clusters * min_points_per_cluster > max_points)
    throw config_error("gen: max_clusters * min_points_per_cluster exceeds max_points");
  if (!(scale_range.first <= scale_range.second) || scale_range.first < 0)
    throw config_error("gen: scale_range must satisfy 0 <= low <= high");
  if (!(point_mask_range.first <= point_mask_range.second) || point_mask_range.first < 0 ||
      point_mask_range.second > 1)
    throw config_error("gen: point_mask_range must be within [0,1] and well-ordered");
  if (!(cluster_mask_range.first <= cluster_mask_range.second) || cluster_mask_range.first < 0 ||
      cluster_mask_range.second >= 1)
    throw config_error("gen: cluster_mask_range must be within [0,1) and well-ordered");
}

i64 GcdTask::observed_count() const {
  i64 c = 0;
  for (std::uint8_t o : observed) c += o ? 1 : 0;
  return c;
}

void GcdTask::recompute_class_sets() {
  old_classes.clear();
  all_classes.clear();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    all_classes.push_back(labels[i]);
    if (observed[i]) old_classes.push_back(labels[i]);
  }
  auto uniq = [](std::vector<i64>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  uniq(old_classes);
  uniq(all_classes);
}

TensorT<double> sample_cluster(Rng& rng, Family family, const std::vector<double>& center,
                               double scale, i64 count) {
  const i64 d = static_cast<i64>(center.size());
  if (count < 1) throw contract_error("sample_cluster: count must be >= 1");
  if (d < 1) throw contract_error("sample_cluster: center must be non-empty");
  if (scale < 0) throw contract_error("sample_cluster: scale must be >= 0");
  for (double c : center)
    if (c < -1.0 || c > 1.0) throw contract_error("sample_cluster: center outside [-1,1]^d");

  TensorT<double> pts({count, d});
  switch (family) {
    case Family::normal:
      for (i64 i = 0; i < count; ++i)
        for (i64 c = 0; c < d; ++c) pts.data[i * d + c] = center[c] + rng.normal(0.0, scale);
      break;
    case Family::laplace:
      for (i64 i = 0; i < count; ++i)
        for (i64 c = 0; c < d; ++c) pts.data[i * d + c] = center[c] + rng.laplace(0.0, scale);
      break;
    case Family::uniform:
      for (i64 i = 0; i < count; ++i)
        for (i64 c = 0; c < d; ++c)
          pts.data[i * d + c] = rng.uniform(center[c] - scale, center[c] + scale);
      break;
    case Family::von_mises: {
      // Angular construction in a 2-plane spanned by u, v: the standard basis
      // in d=2, a random orthonormal pair for d>2.
      std::vector<double> u(static_cast<std::size_t>(d), 0.0);
      std::vector<double> v(static_cast<std::size_t>(d), 0.0);
      if (d == 2) {
        u[0] = 1.0;
        v[1] = 1.0;
      } else if (d == 1) {
        u[0] = 1.0;
      } else {
        for (;;) {
          double nu = 0.0;
          for (i64 c = 0; c < d; ++c) {
            u[static_cast<std::size_t>(c)] = rng.normal(0.0, 1.0);
            nu += u[static_cast<std::size_t>(c)] * u[static_cast<std::size_t>(c)];
          }
          if (nu < 1e-12) continue;
          nu = std::sqrt(nu);
          for (i64 c = 0; c < d; ++c) u[static_cast<std::size_t>(c)] /= nu;
          double dot = 0.0, nv = 0.0;
          for (i64 c = 0; c < d; ++c) {
            v[static_cast<std::size_t>(c)] = rng.normal(0.0, 1.0);
            dot += v[static_cast<std::size_t>(c)] * u[static_cast<std::size_t>(c)];
          }
          for (i64 c = 0; c < d; ++c) {
            v[static_cast<std::size_t>(c)] -= dot * u[static_cast<std::size_t>(c)];
            nv += v[static_cast<std::size_t>(c)] * v[static_cast<std::size_t>(c)];
          }
          if (nv < 1e-12) continue;
          nv = std::sqrt(nv);
          for (i64 c = 0; c < d; ++c) v[static_cast<std::size_t>(c)] /= nv;
          break;
        }
      }
      const double mu = rng.uniform(-M_PI, M_PI);
      const double kappa = (scale > 0.0) ? 1.0 / (scale * scale) : 1e18;
      for (i64 i = 0; i < count; ++i) {
        const double theta = rng.von_mises(mu, kappa);
        const double r = std::fabs(rng.normal(0.0, scale));
        const double x = r * std::cos(theta), y = r * std::sin(theta);
        for (i64 c = 0; c < d; ++c)
          pts.data[i * d + c] =
              center[c] + x * u[static_cast<std::size_t>(c)] + y * v[static_cast<std::size_t>(c)];
      }
      break;
    }
  }
  for (double& x : pts.data) x = std::clamp(x, -1.0, 1.0);
  return pts;
}

namespace {

struct ClusterView {
  i64 label;
  std::vector<i64> point_idx;  // in first-appearance order
};

std::vector<ClusterView> clusters_of(const GcdTask& task) {
  std::vector<ClusterView> out;
  for (i64 i = 0; i < task.n(); ++i) {
    const i64 lab = task.labels[static_cast<std::size_t>(i)];
    auto it = std::find_if(out.begin(), out.end(),
                           [lab](const ClusterView& c) { return c.label == lab; });
    if (it == out.end()) {
      out.push_back({lab, {i}});
    } else {
      it->point_idx.push_back(i);
    }
  }
  return out;
}

}  // namespace

MaskReport apply_masking(GcdTask& task, Rng& rng, double point_lo, double point_hi,
                         double cluster_mask_frac) {
  if (!(point_lo <= point_hi) || point_lo < 0.0 || point_hi > 1.0)
    throw contract_error("apply_masking: point mask range must be within [0,1] and well-ordered");
  if (cluster_mask_frac < 0.0 || cluster_mask_frac >= 1.0)
    throw contract_error("apply_masking: cluster_mask_frac must be in [0,1)");

  std::vector<ClusterView> clusters = clusters_of(task);
  const i64 k = static_cast<i64>(clusters.size());
  MaskReport report;

  // At least one cluster stays partially observed, so the fully-masked count
  // is capped at k-1.
  i64 n_masked = std::llround(cluster_mask_frac * static_cast<double>(k));
  n_masked = std::clamp<i64>(n_masked, 0, k - 1);
  std::vector<i64> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), i64{0});
  for (i64 i = 0; i < n_masked; ++i) {
    const i64 j = rng.uniform_int(i, k - 1);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  std::vector<std::uint8_t> fully(static_cast<std::size_t>(k), 0);
  for (i64 i = 0; i < n_masked; ++i) fully[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;

  for (i64 ci = 0; ci < k; ++ci) {
    ClusterView& cv = clusters[static_cast<std::size_t>(ci)];
    if (fully[static_cast<std::size_t>(ci)]) {
      for (i64 p : cv.point_idx) task.observed[static_cast<std::size_t>(p)] = 0;
      report.fully_masked_labels.push_back(cv.label);
      continue;
    }
    const i64 size = static_cast<i64>(cv.point_idx.size());
    const double frac = rng.uniform(point_lo, point_hi);
    i64 m = std::llround(frac * static_cast<double>(size));
    m = std::clamp<i64>(m, 0, size - 1);
    for (i64 i = 0; i < m; ++i) {
      const i64 j = rng.uniform_int(i, size - 1);
      std::swap(cv.point_idx[static_cast<std::size_t>(i)], cv.point_idx[static_cast<std::size_t>(j)]);
    }
    for (i64 i = 0; i < size; ++i)
      task.observed[static_cast<std::size_t>(cv.point_idx[static_cast<std::size_t>(i)])] =
          (i < m) ? 0 : 1;
    report.partial_labels.push_back(cv.label);
    report.drawn_fracs.push_back(frac);
    report.masked_counts.push_back(m);
    report.cluster_sizes.push_back(size);
  }

  task.recompute_class_sets();
  return report;
}

GcdTask generate_task(const GenConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  const i64 k = rng.uniform_int(cfg.min_clusters, cfg.max_clusters);

  // Unique labels via partial Fisher-Yates over 1..1000.
  std::vector<i64> pool(1000);
  std::iota(pool.begin(), pool.end(), i64{1});
  for (i64 i = 0; i < k; ++i) {
    const i64 j = rng.uniform_int(i, 999);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }

  // Log-uniform sizes between the per-cluster minimum and max_points / k, so
  // the total stays within max_points while sizes span the allowed range.
  const i64 cap = cfg.max_points / k;
  std::vector<i64> counts(static_cast<std::size_t>(k));
  for (i64 i = 0; i < k; ++i) {
    const double lo = std::log(static_cast<double>(cfg.min_points_per_cluster));
    const double hi = std::log(static_cast<double>(cap));
    const i64 c = std::llround(std::exp(rng.uniform(lo, hi)));
    counts[static_cast<std::size_t>(i)] = std::clamp<i64>(c, cfg.min_points_per_cluster, cap);
  }

  i64 total = 0;
  for (i64 c : counts) total += c;
  GcdTask task;
  task.points = TensorT<double>({total, cfg.d});
  task.labels.resize(static_cast<std::size_t>(total));
  task.observed.assign(static_cast<std::size_t>(total), 1);

  i64 row = 0;
  for (i64 i = 0; i < k; ++i) {
    const Family fam = static_cast<Family>(rng.uniform_int(0, 3));
    std::vector<double> center(static_cast<std::size_t>(cfg.d));
    for (double& c : center) c = rng.uniform(-0.9, 0.9);
    const double scale = rng.uniform(cfg.scale_range.first, cfg.scale_range.second) * 2.0;
    TensorT<double> pts = sample_cluster(rng, fam, center, scale, counts[static_cast<std::size_t>(i)]);
    for (i64 p = 0; p < pts.rows(); ++p) {
      for (i64 c = 0; c < cfg.d; ++c) task.points.at(row, c) = pts.at(p, c);
      task.labels[static_cast<std::size_t>(row)] = pool[static_cast<std::size_t>(i)];
      ++row;
    }
  }
  task.recompute_class_sets();

  // Retry masking until the task has at least one unobserved point; with
  // all-zero mask ranges every attempt is all-observed and the last one wins.
  GcdTask masked = task;
  for (int attempt = 0; attempt < 100; ++attempt) {
    masked = task;
    const double cf = rng.uniform(cfg.cluster_mask_range.first, cfg.cluster_mask_range.second);
    apply_masking(masked, rng, cfg.point_mask_range.first, cfg.point_mask_range.second, cf);
    if (masked.observed_count() < masked.n()) break;
  }
  return masked;
}

}  // namespace gcdf
