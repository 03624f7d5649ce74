#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcdf/tensor.hpp"

namespace gcdf {

// Externally supplied encoder features, one row per instance.
struct FeatureMatrix {
  TensorT<double> values;  // n x d
  std::string provenance;  // free-text encoder tag

  i64 n() const { return values.rows(); }
  i64 dim() const { return values.cols(); }
};

struct TsneConfig {
  i64 d_out = 2;
  double perplexity = 30.0;
  int iterations = 1000;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
  double learning_rate = 0.0;  // 0 = auto: max(n/12, 50)
  double momentum_start = 0.5;
  double momentum_final = 0.8;
  int momentum_switch_iter = 250;
  bool l2_normalize = true;  // unit-norm rows before distance computation
  std::uint64_t seed = 0;

  void validate(i64 n) const;
};

struct PcaResult {
  TensorT<double> embedding;       // n x d_out
  TensorT<double> components;      // d x d_out, eigenvector columns
  std::vector<double> explained;   // top-d_out variance ratios, non-increasing
};

struct TsneResult {
  TensorT<double> embedding;  // n x d_out, passed through normalize_latent
  double kl_initial = 0.0;    // KL(P||Q) at iteration 0, un-exaggerated P
  double kl_final = 0.0;
};

// Cyclic Jacobi eigendecomposition of a symmetric matrix.
// Eigenvalues descending; eigenvectors (columns of `vectors`) orthonormal.
void jacobi_eigen_symmetric(const TensorT<double>& a, std::vector<double>& values,
                            TensorT<double>& vectors);

PcaResult pca_reduce(const FeatureMatrix& f, i64 d_out);

// One calibrated t-SNE conditional: p over the n-1 neighbors of a point.
struct CalibratedRow {
  std::vector<double> p;
  double sigma = 0.0;
  bool converged = false;
};

// Binary search on the Gaussian bandwidth so the conditional's perplexity
// (2^H) hits `target_perplexity` within 1e-5 in at most 100 iterations.
// Non-convergence falls back to the bracket midpoint with converged=false.
// `sq_dists` holds SQUARED distances to the other points.
CalibratedRow perplexity_calibrate(const std::vector<double>& sq_dists,
                                   double target_perplexity);

TsneResult tsne_reduce(const FeatureMatrix& f, const TsneConfig& cfg);

}  // namespace gcdf
