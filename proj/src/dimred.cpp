#include "gcdf/dimred.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "gcdf/errors.hpp"
#include "gcdf/rng.hpp"
#include "gcdf/tokenizer.hpp"

namespace gcdf {

namespace {

void check_features(const FeatureMatrix& f) {
  if (f.n() < 2) throw contract_error("reduction needs at least 2 rows, got " + std::to_string(f.n()));
  if (!f.values.all_finite()) throw contract_error("feature matrix contains non-finite values");
}

// Squared Euclidean distances between all row pairs; diagonal zero.
TensorT<double> pairwise_sq_dists(const TensorT<double>& x) {
  const i64 n = x.rows(), d = x.cols();
  TensorT<double> dist({n, n});
  for (i64 i = 0; i < n; ++i)
    for (i64 j = i + 1; j < n; ++j) {
      double s = 0;
      for (i64 c = 0; c < d; ++c) {
        const double diff = x.at(i, c) - x.at(j, c);
        s += diff * diff;
      }
      dist.at(i, j) = s;
      dist.at(j, i) = s;
    }
  return dist;
}

// Conditional p_{j|i} for precision beta over squared distances, stabilized
// by the minimum distance. Returns the perplexity 2^H.
double conditional_given_beta(const std::vector<double>& dsq, double beta,
                              std::vector<double>& p) {
  const std::size_t m = dsq.size();
  p.resize(m);
  const double dmin = *std::min_element(dsq.begin(), dsq.end());
  double sum = 0;
  for (std::size_t j = 0; j < m; ++j) {
    p[j] = std::exp(-beta * (dsq[j] - dmin));
    sum += p[j];
  }
  double h_bits = 0;
  for (std::size_t j = 0; j < m; ++j) {
    p[j] /= sum;
    if (p[j] > 0) h_bits -= p[j] * std::log2(p[j]);
  }
  return std::exp2(h_bits);
}

}  // namespace

void TsneConfig::validate(i64 n) const {
  if (d_out < 1) throw config_error("d_out must be positive");
  if (perplexity <= 0) throw config_error("perplexity must be positive");
  if (perplexity >= static_cast<double>(n))
    throw config_error("perplexity " + std::to_string(perplexity) + " must be below n = " +
                       std::to_string(n));
  if (iterations < 1) throw config_error("iterations must be positive");
  if (early_exaggeration <= 0) throw config_error("early_exaggeration must be positive");
  if (exaggeration_iters < 0) throw config_error("exaggeration_iters must be non-negative");
  if (learning_rate < 0) throw config_error("learning_rate must be non-negative (0 = auto)");
  if (momentum_start < 0 || momentum_start >= 1 || momentum_final < 0 || momentum_final >= 1)
    throw config_error("momenta must lie in [0, 1)");
  if (momentum_switch_iter < 0) throw config_error("momentum_switch_iter must be non-negative");
}

void jacobi_eigen_symmetric(const TensorT<double>& a, std::vector<double>& values,
                            TensorT<double>& vectors) {
  if (a.rows() != a.cols()) throw shape_error("eigendecomposition needs a square matrix, got " + a.shape_str());
  const i64 d = a.rows();
  TensorT<double> m = a;
  vectors = TensorT<double>({d, d});
  for (i64 i = 0; i < d; ++i) vectors.at(i, i) = 1.0;

  double frob2 = 0;
  for (double v : m.data) frob2 += v * v;
  const double stop = 1e-24 * std::max(frob2, 1e-300);

  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off2 = 0;
    for (i64 p = 0; p < d; ++p)
      for (i64 q = p + 1; q < d; ++q) off2 += m.at(p, q) * m.at(p, q);
    if (off2 <= stop) break;

    for (i64 p = 0; p < d; ++p)
      for (i64 q = p + 1; q < d; ++q) {
        const double apq = m.at(p, q);
        if (apq == 0.0) continue;
        const double theta = (m.at(q, q) - m.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (i64 i = 0; i < d; ++i) {
          const double mip = m.at(i, p), miq = m.at(i, q);
          m.at(i, p) = c * mip - s * miq;
          m.at(i, q) = s * mip + c * miq;
        }
        for (i64 i = 0; i < d; ++i) {
          const double mpi = m.at(p, i), mqi = m.at(q, i);
          m.at(p, i) = c * mpi - s * mqi;
          m.at(q, i) = s * mpi + c * mqi;
        }
        for (i64 i = 0; i < d; ++i) {
          const double vip = vectors.at(i, p), viq = vectors.at(i, q);
          vectors.at(i, p) = c * vip - s * viq;
          vectors.at(i, q) = s * vip + c * viq;
        }
      }
  }

  std::vector<i64> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), i64{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](i64 x, i64 y) { return m.at(x, x) > m.at(y, y); });
  values.resize(static_cast<std::size_t>(d));
  TensorT<double> sorted({d, d});
  for (i64 j = 0; j < d; ++j) {
    values[static_cast<std::size_t>(j)] = m.at(order[static_cast<std::size_t>(j)], order[static_cast<std::size_t>(j)]);
    for (i64 i = 0; i < d; ++i) sorted.at(i, j) = vectors.at(i, order[static_cast<std::size_t>(j)]);
  }
  vectors = std::move(sorted);
}

PcaResult pca_reduce(const FeatureMatrix& f, i64 d_out) {
  check_features(f);
  const i64 n = f.n(), d = f.dim();
  if (d_out < 1 || d_out > std::min(n, d))
    throw contract_error("d_out must lie in [1, min(n, d)] = [1, " +
                         std::to_string(std::min(n, d)) + "], got " + std::to_string(d_out));

  TensorT<double> centered = f.values;
  for (i64 c = 0; c < d; ++c) {
    double mu = 0;
    for (i64 i = 0; i < n; ++i) mu += centered.at(i, c);
    mu /= static_cast<double>(n);
    for (i64 i = 0; i < n; ++i) centered.at(i, c) -= mu;
  }

  TensorT<double> cov({d, d});
  for (i64 a = 0; a < d; ++a)
    for (i64 b = a; b < d; ++b) {
      double s = 0;
      for (i64 i = 0; i < n; ++i) s += centered.at(i, a) * centered.at(i, b);
      s /= static_cast<double>(n - 1);
      cov.at(a, b) = s;
      cov.at(b, a) = s;
    }

  std::vector<double> eigenvalues;
  TensorT<double> eigenvectors;
  jacobi_eigen_symmetric(cov, eigenvalues, eigenvectors);

  PcaResult out;
  out.components = TensorT<double>({d, d_out});
  for (i64 a = 0; a < d; ++a)
    for (i64 j = 0; j < d_out; ++j) out.components.at(a, j) = eigenvectors.at(a, j);
  out.embedding = matmul_value(centered, out.components);

  // Negative eigenvalues are round-off from the zero ones of rank-deficient
  // covariances; clamp so ratios stay in [0, 1].
  double total = 0;
  for (double& v : eigenvalues) {
    v = std::max(v, 0.0);
    total += v;
  }
  out.explained.resize(static_cast<std::size_t>(d_out), 0.0);
  if (total > 0)
    for (i64 j = 0; j < d_out; ++j)
      out.explained[static_cast<std::size_t>(j)] = eigenvalues[static_cast<std::size_t>(j)] / total;
  return out;
}

CalibratedRow perplexity_calibrate(const std::vector<double>& sq_dists,
                                   double target_perplexity) {
  if (sq_dists.empty()) throw contract_error("perplexity calibration needs at least one neighbor");
  if (target_perplexity <= 0 || target_perplexity > static_cast<double>(sq_dists.size()))
    throw contract_error("target perplexity must lie in (0, n-1]");

  CalibratedRow out;
  double beta = 1.0;
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 100; ++it) {
    const double perp = conditional_given_beta(sq_dists, beta, out.p);
    if (std::fabs(perp - target_perplexity) <= 1e-5) {
      out.sigma = 1.0 / std::sqrt(2.0 * beta);
      out.converged = true;
      return out;
    }
    if (perp > target_perplexity) {
      lo = beta;
      beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (lo + hi);
    } else {
      hi = beta;
      beta = (lo == 0.0) ? beta * 0.5 : 0.5 * (lo + hi);
    }
  }
  beta = std::isinf(hi) ? beta : 0.5 * (lo + hi);
  conditional_given_beta(sq_dists, beta, out.p);
  out.sigma = 1.0 / std::sqrt(2.0 * beta);
  out.converged = false;
  return out;
}

TsneResult tsne_reduce(const FeatureMatrix& f, const TsneConfig& cfg) {
  check_features(f);
  const i64 n = f.n(), d = f.dim();
  cfg.validate(n);

  TensorT<double> x = f.values;
  if (cfg.l2_normalize) {
    for (i64 i = 0; i < n; ++i) {
      double norm = 0;
      for (i64 c = 0; c < d; ++c) norm += x.at(i, c) * x.at(i, c);
      norm = std::sqrt(norm);
      if (norm > 0)
        for (i64 c = 0; c < d; ++c) x.at(i, c) /= norm;
    }
  }

  const TensorT<double> dsq = pairwise_sq_dists(x);

  // Symmetrized joint P from per-point calibrated conditionals.
  TensorT<double> pmat({n, n});
  int fallbacks = 0;
  std::vector<double> row(static_cast<std::size_t>(n - 1));
  for (i64 i = 0; i < n; ++i) {
    std::size_t w = 0;
    for (i64 j = 0; j < n; ++j)
      if (j != i) row[w++] = dsq.at(i, j);
    const CalibratedRow cal = perplexity_calibrate(row, cfg.perplexity);
    if (!cal.converged) ++fallbacks;
    w = 0;
    for (i64 j = 0; j < n; ++j)
      if (j != i) pmat.at(i, j) = cal.p[w++];
  }
  if (fallbacks > 0)
    std::cerr << "warning: perplexity calibration fell back to bracket midpoint for "
              << fallbacks << " of " << n << " points\n";
  for (i64 i = 0; i < n; ++i)
    for (i64 j = i + 1; j < n; ++j) {
      const double p = std::max((pmat.at(i, j) + pmat.at(j, i)) / (2.0 * static_cast<double>(n)), 1e-12);
      pmat.at(i, j) = p;
      pmat.at(j, i) = p;
    }

  const double lr = cfg.learning_rate > 0
                        ? cfg.learning_rate
                        : std::max(static_cast<double>(n) / 12.0, 50.0);

  Rng rng(mix_seed(cfg.seed, 0x7473ULL));
  TensorT<double> y({n, cfg.d_out});
  for (double& v : y.data) v = rng.normal(0.0, 1e-4);

  TensorT<double> update({n, cfg.d_out});
  TensorT<double> gains({n, cfg.d_out});
  for (double& v : gains.data) v = 1.0;

  TensorT<double> num({n, n});
  TensorT<double> grad({n, cfg.d_out});

  // KL(P||Q) against the un-exaggerated P; both matrices are symmetric with
  // zero diagonal, so the upper triangle carries half of each sum.
  auto kl_true = [&](double qnorm) {
    double kl = 0;
    for (i64 i = 0; i < n; ++i)
      for (i64 j = i + 1; j < n; ++j) {
        const double p = pmat.at(i, j);
        const double q = std::max(num.at(i, j) / qnorm, 1e-12);
        kl += 2.0 * p * std::log(p / q);
      }
    return kl;
  };

  TsneResult out;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    double qnorm = 0;
    for (i64 i = 0; i < n; ++i)
      for (i64 j = i + 1; j < n; ++j) {
        double s = 0;
        for (i64 c = 0; c < cfg.d_out; ++c) {
          const double diff = y.at(i, c) - y.at(j, c);
          s += diff * diff;
        }
        const double v = 1.0 / (1.0 + s);
        num.at(i, j) = v;
        num.at(j, i) = v;
        qnorm += 2.0 * v;
      }
    if (iter == 0) out.kl_initial = kl_true(qnorm);

    const double exag = iter < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
    for (i64 i = 0; i < n; ++i) {
      for (i64 c = 0; c < cfg.d_out; ++c) grad.at(i, c) = 0;
      for (i64 j = 0; j < n; ++j) {
        if (j == i) continue;
        const double q = std::max(num.at(i, j) / qnorm, 1e-12);
        const double coeff = 4.0 * (exag * pmat.at(i, j) - q) * num.at(i, j);
        for (i64 c = 0; c < cfg.d_out; ++c)
          grad.at(i, c) += coeff * (y.at(i, c) - y.at(j, c));
      }
    }

    const double momentum = iter < cfg.momentum_switch_iter ? cfg.momentum_start : cfg.momentum_final;
    for (std::size_t k = 0; k < y.data.size(); ++k) {
      const bool same_dir = (grad.data[k] > 0) == (update.data[k] > 0);
      gains.data[k] = same_dir ? gains.data[k] * 0.8 : gains.data[k] + 0.2;
      gains.data[k] = std::max(gains.data[k], 0.01);
      update.data[k] = momentum * update.data[k] - lr * gains.data[k] * grad.data[k];
      y.data[k] += update.data[k];
    }
    for (i64 c = 0; c < cfg.d_out; ++c) {
      double mu = 0;
      for (i64 i = 0; i < n; ++i) mu += y.at(i, c);
      mu /= static_cast<double>(n);
      for (i64 i = 0; i < n; ++i) y.at(i, c) -= mu;
    }
    if (!y.all_finite())
      throw numeric_error("t-SNE produced non-finite coordinates at iteration " + std::to_string(iter));
  }

  double qnorm = 0;
  for (i64 i = 0; i < n; ++i)
    for (i64 j = i + 1; j < n; ++j) {
      double s = 0;
      for (i64 c = 0; c < cfg.d_out; ++c) {
        const double diff = y.at(i, c) - y.at(j, c);
        s += diff * diff;
      }
      const double v = 1.0 / (1.0 + s);
      num.at(i, j) = v;
      num.at(j, i) = v;
      qnorm += 2.0 * v;
    }
  out.kl_final = kl_true(qnorm);
  out.embedding = normalize_latent(y);
  return out;
}

}  // namespace gcdf
