#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "gcdf/rng.hpp"
#include "gcdf/tensor.hpp"

namespace gcdf {

enum class Family { normal, laplace, von_mises, uniform };

const char* family_name(Family f);
Family family_from_name(const std::string& s);

// Synthetic task generator parameters. scale_range is expressed as a fraction
// of the sampling-space extent (2 for [-1,1]), so the actual cluster standard
// deviation is frac * 2.
struct GenConfig {
  i64 d = 2;
  i64 max_clusters = 200;
  i64 max_points = 3000;
  i64 min_clusters = 2;
  i64 min_points_per_cluster = 5;
  std::pair<double, double> scale_range{0.02, 0.15};
  std::pair<double, double> point_mask_range{0.1, 0.9};
  std::pair<double, double> cluster_mask_range{0.0, 0.5};
  std::uint64_t seed = 0;

  void validate() const;
};

// One GCD latent space. labels are ground truth and always retained; observed
// marks membership in the labeled subset D_L. Class sets are kept sorted.
struct GcdTask {
  TensorT<double> points;  // n x d, every coordinate in [-1,1]
  std::vector<i64> labels;
  std::vector<std::uint8_t> observed;
  std::vector<i64> old_classes;  // Y_L: classes with at least one observed point
  std::vector<i64> all_classes;  // Y_U: all classes present

  i64 n() const { return points.rows(); }
  i64 dim() const { return points.cols(); }
  i64 observed_count() const;
  void recompute_class_sets();
};

// Bookkeeping emitted by apply_masking so tests can audit the draws.
struct MaskReport {
  std::vector<i64> fully_masked_labels;
  std::vector<i64> partial_labels;
  std::vector<double> drawn_fracs;  // per partial cluster, in draw order
  std::vector<i64> masked_counts;   // per partial cluster
  std::vector<i64> cluster_sizes;   // per partial cluster
};

// Draw `count` points around `center` (length d) with spread `scale`, clamped
// to [-1,1]^d. scale is the standard deviation for normal, the Laplace scale b,
// the half-width for uniform; von Mises places points at angle theta ~
// vM(mu, kappa=1/scale^2) in a 2-plane with radius |Normal(0, scale)|.
TensorT<double> sample_cluster(Rng& rng, Family family, const std::vector<double>& center,
                               double scale, i64 count);

// Mask round(cluster_mask_frac * k) clusters fully (capped at k-1), then an
// independently drawn fraction from [point_lo, point_hi] of each remaining
// cluster's points (capped at size-1). Labels survive masking.
MaskReport apply_masking(GcdTask& task, Rng& rng, double point_lo, double point_hi,
                         double cluster_mask_frac);
inline MaskReport apply_masking(GcdTask& task, Rng& rng, double point_mask_frac,
                                double cluster_mask_frac) {
  return apply_masking(task, rng, point_mask_frac, point_mask_frac, cluster_mask_frac);
}

// Pure function of cfg (seed included): k ~ uniform{min..max_clusters} clusters,
// unique labels from 1..1000, per-cluster family/center/scale/count, masking.
GcdTask generate_task(const GenConfig& cfg);

}  // namespace gcdf
