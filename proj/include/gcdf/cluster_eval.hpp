#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "gcdf/synthgen.hpp"
#include "gcdf/tensor.hpp"

namespace gcdf {

struct ClusterAssignment {
  i64 k = 0;
  std::vector<i64> assignments;  // n ids in 0..k-1
  TensorT<double> centroids;     // k x d
  double inertia = 0.0;
  std::vector<double> inertia_trace;     // winning restart, one entry per Lloyd pass
  std::vector<double> restart_inertias;  // final inertia of every restart
};

// k-means++ seeding, Lloyd iterations until centroid shift < 1e-8 (or 300
// passes), best of `restarts` by inertia with ties going to the lowest
// restart index. Empty clusters are re-seeded to the farthest point.
ClusterAssignment kmeans(const TensorT<double>& points, i64 k, int restarts = 10,
                         std::uint64_t seed = 0);

struct HungarianResult {
  double accuracy = 0.0;
  std::vector<std::pair<i64, i64>> matching;  // (pred value, truth value) pairs
};

// Maximum-weight one-to-one matching of predicted clusters to truth classes
// over the contingency table; unmatched predictions score zero.
HungarianResult hungarian_accuracy(const std::vector<i64>& pred, const std::vector<i64>& truth);

struct EvalReport {
  double acc_all = 0.0;
  std::optional<double> acc_old;  // absent when no known-class instances
  std::optional<double> acc_new;  // absent when no novel-class instances
  double ari = 0.0;
  double nmi = 0.0;
  i64 n_all = 0;
  i64 n_old = 0;
  i64 n_new = 0;
};

// Scores predictions for exactly the unobserved instances of `task`, in row
// order. One global Hungarian matching; Old/New split under that matching.
EvalReport gcd_metrics(const std::vector<i64>& pred, const GcdTask& task);

double ari(const std::vector<i64>& pred, const std::vector<i64>& truth);
double nmi(const std::vector<i64>& pred, const std::vector<i64>& truth);

// KL(P_a || P_b) between bins x bins histograms over [-1,1]^2 with additive
// smoothing. Both point sets must already be normalized into the unit box.
double kl_alignment(const TensorT<double>& a, const TensorT<double>& b, int bins = 20,
                    double smoothing = 1e-6);

struct QualityReport {
  double separation = 0.0;
  double spread = 0.0;
  double overlap = 0.0;
  std::optional<double> kl_alignment;
};

// Diameter-normalized centroid separation and intra-class spread, plus the
// mean fraction of each point's 10 nearest neighbors with a different label
// (x100). Points whose class has no other member contribute zero overlap.
QualityReport cluster_quality(const TensorT<double>& points, const std::vector<i64>& labels);

}  // namespace gcdf
