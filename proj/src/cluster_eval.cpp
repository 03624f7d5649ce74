#include "gcdf/cluster_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "gcdf/errors.hpp"
#include "gcdf/rng.hpp"

namespace gcdf {

namespace {

double sq_dist_row(const TensorT<double>& a, i64 i, const TensorT<double>& b, i64 j) {
  double s = 0;
  for (i64 c = 0; c < a.cols(); ++c) {
    const double diff = a.at(i, c) - b.at(j, c);
    s += diff * diff;
  }
  return s;
}

// One k-means++ seeding plus Lloyd iterations.
ClusterAssignment kmeans_once(const TensorT<double>& points, i64 k, Rng& rng) {
  const i64 n = points.rows(), d = points.cols();
  ClusterAssignment out;
  out.k = k;
  out.centroids = TensorT<double>({k, d});
  out.assignments.assign(static_cast<std::size_t>(n), 0);

  std::vector<double> dist2(static_cast<std::size_t>(n));
  const i64 first = rng.uniform_int(0, n - 1);
  for (i64 c = 0; c < d; ++c) out.centroids.at(0, c) = points.at(first, c);
  for (i64 i = 0; i < n; ++i) dist2[static_cast<std::size_t>(i)] = sq_dist_row(points, i, out.centroids, 0);
  for (i64 j = 1; j < k; ++j) {
    double total = 0;
    for (double v : dist2) total += v;
    i64 pick = n - 1;
    if (total > 0) {
      const double r = rng.uniform(0.0, total);
      double cum = 0;
      for (i64 i = 0; i < n; ++i) {
        cum += dist2[static_cast<std::size_t>(i)];
        if (cum >= r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.uniform_int(0, n - 1);
    }
    for (i64 c = 0; c < d; ++c) out.centroids.at(j, c) = points.at(pick, c);
    for (i64 i = 0; i < n; ++i)
      dist2[static_cast<std::size_t>(i)] =
          std::min(dist2[static_cast<std::size_t>(i)], sq_dist_row(points, i, out.centroids, j));
  }

  auto assign_pass = [&]() {
    double inertia = 0;
    for (i64 i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      i64 best_j = 0;
      for (i64 j = 0; j < k; ++j) {
        const double d2 = sq_dist_row(points, i, out.centroids, j);
        if (d2 < best) {
          best = d2;
          best_j = j;
        }
      }
      out.assignments[static_cast<std::size_t>(i)] = best_j;
      inertia += best;
    }
    return inertia;
  };

  for (int pass = 0; pass < 300; ++pass) {
    out.inertia = assign_pass();
    out.inertia_trace.push_back(out.inertia);

    TensorT<double> next({k, d});
    std::vector<i64> counts(static_cast<std::size_t>(k), 0);
    for (i64 i = 0; i < n; ++i) {
      const i64 j = out.assignments[static_cast<std::size_t>(i)];
      ++counts[static_cast<std::size_t>(j)];
      for (i64 c = 0; c < d; ++c) next.at(j, c) += points.at(i, c);
    }
    std::vector<char> reseeded(static_cast<std::size_t>(n), 0);
    for (i64 j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        for (i64 c = 0; c < d; ++c) next.at(j, c) /= static_cast<double>(counts[static_cast<std::size_t>(j)]);
      } else {
        // Re-seed to the farthest point from its current centroid.
        double far = -1.0;
        i64 far_i = 0;
        for (i64 i = 0; i < n; ++i) {
          if (reseeded[static_cast<std::size_t>(i)]) continue;
          const double d2 = sq_dist_row(points, i, out.centroids,
                                        out.assignments[static_cast<std::size_t>(i)]);
          if (d2 > far) {
            far = d2;
            far_i = i;
          }
        }
        reseeded[static_cast<std::size_t>(far_i)] = 1;
        for (i64 c = 0; c < d; ++c) next.at(j, c) = points.at(far_i, c);
      }
    }

    double max_shift2 = 0;
    for (i64 j = 0; j < k; ++j) {
      double s = 0;
      for (i64 c = 0; c < d; ++c) {
        const double diff = next.at(j, c) - out.centroids.at(j, c);
        s += diff * diff;
      }
      max_shift2 = std::max(max_shift2, s);
    }
    out.centroids = std::move(next);
    if (max_shift2 < 1e-16) break;
  }
  out.inertia = assign_pass();
  out.inertia_trace.push_back(out.inertia);
  return out;
}

std::vector<i64> compact_ids(const std::vector<i64>& raw, std::map<i64, i64>& to_compact) {
  std::vector<i64> out;
  out.reserve(raw.size());
  for (i64 v : raw) {
    const auto [it, inserted] = to_compact.try_emplace(v, static_cast<i64>(to_compact.size()));
    out.push_back(it->second);
  }
  return out;
}

// Contingency counts[pred][truth] over compact ids.
std::vector<std::vector<i64>> contingency(const std::vector<i64>& pred_c,
                                          const std::vector<i64>& truth_c, i64 np, i64 nt) {
  std::vector<std::vector<i64>> counts(static_cast<std::size_t>(np),
                                       std::vector<i64>(static_cast<std::size_t>(nt), 0));
  for (std::size_t i = 0; i < pred_c.size(); ++i)
    ++counts[static_cast<std::size_t>(pred_c[i])][static_cast<std::size_t>(truth_c[i])];
  return counts;
}

// Minimum-cost assignment over a square cost matrix (augmenting paths with
// potentials). Returns column -> row.
std::vector<int> solve_assignment(const std::vector<std::vector<long long>>& cost) {
  const int s = static_cast<int>(cost.size());
  const long long inf = std::numeric_limits<long long>::max() / 4;
  std::vector<long long> u(static_cast<std::size_t>(s) + 1, 0), v(static_cast<std::size_t>(s) + 1, 0);
  std::vector<int> p(static_cast<std::size_t>(s) + 1, 0), way(static_cast<std::size_t>(s) + 1, 0);
  for (int i = 1; i <= s; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<long long> minv(static_cast<std::size_t>(s) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(s) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      long long delta = inf;
      int j1 = -1;
      for (int j = 1; j <= s; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const long long cur = cost[static_cast<std::size_t>(i0 - 1)][static_cast<std::size_t>(j - 1)] -
                              u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= s; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0);
  }
  return p;
}

double binom2(double m) { return m * (m - 1.0) / 2.0; }

}  // namespace

ClusterAssignment kmeans(const TensorT<double>& points, i64 k, int restarts, std::uint64_t seed) {
  const i64 n = points.rows();
  if (k < 1) throw contract_error("k must be positive, got " + std::to_string(k));
  if (k > n)
    throw contract_error("k = " + std::to_string(k) + " exceeds the number of points " + std::to_string(n));
  if (restarts < 1) throw contract_error("restarts must be positive");
  if (!points.all_finite()) throw contract_error("k-means input contains non-finite values");

  ClusterAssignment best;
  std::vector<double> restart_inertias;
  for (int r = 0; r < restarts; ++r) {
    Rng rng(mix_seed(seed, 0x6b6dULL, static_cast<std::uint64_t>(r)));
    ClusterAssignment cur = kmeans_once(points, k, rng);
    restart_inertias.push_back(cur.inertia);
    if (r == 0 || cur.inertia < best.inertia) best = std::move(cur);
  }
  best.restart_inertias = std::move(restart_inertias);
  return best;
}

HungarianResult hungarian_accuracy(const std::vector<i64>& pred, const std::vector<i64>& truth) {
  if (pred.size() != truth.size())
    throw contract_error("pred and truth lengths differ: " + std::to_string(pred.size()) + " vs " +
                         std::to_string(truth.size()));
  if (pred.empty()) throw contract_error("cannot score an empty assignment");

  std::map<i64, i64> pred_map, truth_map;
  const std::vector<i64> pred_c = compact_ids(pred, pred_map);
  const std::vector<i64> truth_c = compact_ids(truth, truth_map);
  const i64 np = static_cast<i64>(pred_map.size());
  const i64 nt = static_cast<i64>(truth_map.size());
  const auto counts = contingency(pred_c, truth_c, np, nt);

  // Maximize weight == minimize (maxw - weight) over the padded square table.
  const int s = static_cast<int>(std::max(np, nt));
  long long maxw = 0;
  for (const auto& row : counts)
    for (long long v : row) maxw = std::max(maxw, v);
  std::vector<std::vector<long long>> cost(static_cast<std::size_t>(s),
                                           std::vector<long long>(static_cast<std::size_t>(s), maxw));
  for (i64 i = 0; i < np; ++i)
    for (i64 j = 0; j < nt; ++j)
      cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          maxw - counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  const std::vector<int> col_to_row = solve_assignment(cost);

  std::vector<i64> pred_values(static_cast<std::size_t>(np)), truth_values(static_cast<std::size_t>(nt));
  for (const auto& [value, id] : pred_map) pred_values[static_cast<std::size_t>(id)] = value;
  for (const auto& [value, id] : truth_map) truth_values[static_cast<std::size_t>(id)] = value;

  HungarianResult out;
  long long matched = 0;
  for (int j = 1; j <= s; ++j) {
    const int i = col_to_row[static_cast<std::size_t>(j)];
    if (i < 1 || i > np || j > nt) continue;
    matched += counts[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j - 1)];
    out.matching.emplace_back(pred_values[static_cast<std::size_t>(i - 1)],
                              truth_values[static_cast<std::size_t>(j - 1)]);
  }
  std::sort(out.matching.begin(), out.matching.end());
  out.accuracy = static_cast<double>(matched) / static_cast<double>(pred.size());
  return out;
}

EvalReport gcd_metrics(const std::vector<i64>& pred, const GcdTask& task) {
  const i64 n_unobserved = task.n() - task.observed_count();
  if (n_unobserved == 0) throw contract_error("task has no unobserved instances to score");
  if (static_cast<i64>(pred.size()) != n_unobserved)
    throw contract_error("pred must cover exactly the unobserved instances: expected " +
                         std::to_string(n_unobserved) + ", got " + std::to_string(pred.size()));

  std::vector<i64> truth;
  truth.reserve(pred.size());
  for (i64 i = 0; i < task.n(); ++i)
    if (!task.observed[static_cast<std::size_t>(i)]) truth.push_back(task.labels[static_cast<std::size_t>(i)]);

  const HungarianResult match = hungarian_accuracy(pred, truth);
  std::map<i64, i64> pred_to_truth(match.matching.begin(), match.matching.end());

  EvalReport out;
  i64 correct_old = 0, correct_new = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool is_old = std::binary_search(task.old_classes.begin(), task.old_classes.end(), truth[i]);
    const auto it = pred_to_truth.find(pred[i]);
    const bool correct = it != pred_to_truth.end() && it->second == truth[i];
    if (is_old) {
      ++out.n_old;
      correct_old += correct;
    } else {
      ++out.n_new;
      correct_new += correct;
    }
  }
  out.n_all = static_cast<i64>(pred.size());
  out.acc_all = static_cast<double>(correct_old + correct_new) / static_cast<double>(out.n_all);
  if (out.n_old > 0) out.acc_old = static_cast<double>(correct_old) / static_cast<double>(out.n_old);
  if (out.n_new > 0) out.acc_new = static_cast<double>(correct_new) / static_cast<double>(out.n_new);
  out.ari = ari(pred, truth);
  out.nmi = nmi(pred, truth);
  return out;
}

double ari(const std::vector<i64>& pred, const std::vector<i64>& truth) {
  if (pred.size() != truth.size()) throw contract_error("ari: length mismatch");
  if (pred.empty()) throw contract_error("ari: empty input");
  std::map<i64, i64> pred_map, truth_map;
  const std::vector<i64> pred_c = compact_ids(pred, pred_map);
  const std::vector<i64> truth_c = compact_ids(truth, truth_map);
  const auto counts = contingency(pred_c, truth_c, static_cast<i64>(pred_map.size()),
                                  static_cast<i64>(truth_map.size()));

  double index = 0, sum_a = 0, sum_b = 0;
  std::vector<double> col_sums(truth_map.size(), 0.0);
  for (const auto& row : counts) {
    double a = 0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      index += binom2(static_cast<double>(row[j]));
      a += static_cast<double>(row[j]);
      col_sums[j] += static_cast<double>(row[j]);
    }
    sum_a += binom2(a);
  }
  for (double b : col_sums) sum_b += binom2(b);
  const double total_pairs = binom2(static_cast<double>(pred.size()));
  const double expected = total_pairs > 0 ? sum_a * sum_b / total_pairs : 0.0;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both partitions trivial
  return (index - expected) / (max_index - expected);
}

double nmi(const std::vector<i64>& pred, const std::vector<i64>& truth) {
  if (pred.size() != truth.size()) throw contract_error("nmi: length mismatch");
  if (pred.empty()) throw contract_error("nmi: empty input");
  std::map<i64, i64> pred_map, truth_map;
  const std::vector<i64> pred_c = compact_ids(pred, pred_map);
  const std::vector<i64> truth_c = compact_ids(truth, truth_map);
  const auto counts = contingency(pred_c, truth_c, static_cast<i64>(pred_map.size()),
                                  static_cast<i64>(truth_map.size()));
  const double n = static_cast<double>(pred.size());

  std::vector<double> row_sums(pred_map.size(), 0.0), col_sums(truth_map.size(), 0.0);
  for (std::size_t i = 0; i < counts.size(); ++i)
    for (std::size_t j = 0; j < counts[i].size(); ++j) {
      row_sums[i] += static_cast<double>(counts[i][j]);
      col_sums[j] += static_cast<double>(counts[i][j]);
    }
  double h_pred = 0, h_truth = 0, mutual = 0;
  for (double a : row_sums)
    if (a > 0) h_pred -= a / n * std::log(a / n);
  for (double b : col_sums)
    if (b > 0) h_truth -= b / n * std::log(b / n);
  for (std::size_t i = 0; i < counts.size(); ++i)
    for (std::size_t j = 0; j < counts[i].size(); ++j) {
      const double c = static_cast<double>(counts[i][j]);
      if (c > 0) mutual += c / n * std::log(c * n / (row_sums[i] * col_sums[j]));
    }
  if (h_pred + h_truth == 0) return 1.0;  // both single-cluster
  return 2.0 * mutual / (h_pred + h_truth);
}

double kl_alignment(const TensorT<double>& a, const TensorT<double>& b, int bins, double smoothing) {
  if (a.data.empty() || b.data.empty()) throw contract_error("kl_alignment: empty point set");
  if (a.cols() != 2 || b.cols() != 2) throw contract_error("kl_alignment expects 2-D points");
  if (bins < 1) throw contract_error("kl_alignment: bins must be positive");

  auto histogram = [bins](const TensorT<double>& pts) {
    std::vector<double> h(static_cast<std::size_t>(bins) * static_cast<std::size_t>(bins), 0.0);
    for (i64 i = 0; i < pts.rows(); ++i) {
      const double x = pts.at(i, 0), y = pts.at(i, 1);
      if (!(std::fabs(x) <= 1.0 && std::fabs(y) <= 1.0))
        throw contract_error("kl_alignment: points must lie in [-1,1]^2");
      const int bx = std::min(static_cast<int>((x + 1.0) / 2.0 * bins), bins - 1);
      const int by = std::min(static_cast<int>((y + 1.0) / 2.0 * bins), bins - 1);
      h[static_cast<std::size_t>(bx) * static_cast<std::size_t>(bins) + static_cast<std::size_t>(by)] += 1.0;
    }
    return h;
  };
  const std::vector<double> ha = histogram(a);
  const std::vector<double> hb = histogram(b);
  const double cells = static_cast<double>(bins) * static_cast<double>(bins);
  const double za = static_cast<double>(a.rows()) + smoothing * cells;
  const double zb = static_cast<double>(b.rows()) + smoothing * cells;
  double kl = 0;
  for (std::size_t c = 0; c < ha.size(); ++c) {
    const double p = (ha[c] + smoothing) / za;
    const double q = (hb[c] + smoothing) / zb;
    kl += p * std::log(p / q);
  }
  return kl;
}

QualityReport cluster_quality(const TensorT<double>& points, const std::vector<i64>& labels) {
  const i64 n = points.rows();
  if (n == 0 || labels.size() != static_cast<std::size_t>(n))
    throw contract_error("cluster_quality: labels must cover all points");

  QualityReport out;
  double diameter = 0;
  for (i64 i = 0; i < n; ++i)
    for (i64 j = i + 1; j < n; ++j) diameter = std::max(diameter, std::sqrt(sq_dist_row(points, i, points, j)));

  std::map<i64, std::vector<i64>> by_class;
  for (i64 i = 0; i < n; ++i) by_class[labels[static_cast<std::size_t>(i)]].push_back(i);
  const i64 n_classes = static_cast<i64>(by_class.size());

  std::map<i64, std::vector<double>> centroids;
  std::map<i64, std::size_t> class_size;
  for (const auto& [label, members] : by_class) {
    std::vector<double> c(static_cast<std::size_t>(points.cols()), 0.0);
    for (i64 i : members)
      for (i64 col = 0; col < points.cols(); ++col)
        c[static_cast<std::size_t>(col)] += points.at(i, col) / static_cast<double>(members.size());
    centroids[label] = std::move(c);
    class_size[label] = members.size();
  }

  if (n_classes > 1 && diameter > 0) {
    double sep = 0;
    i64 pairs = 0;
    for (auto it = centroids.begin(); it != centroids.end(); ++it)
      for (auto jt = std::next(it); jt != centroids.end(); ++jt) {
        double d2 = 0;
        for (std::size_t c = 0; c < it->second.size(); ++c) {
          const double diff = it->second[c] - jt->second[c];
          d2 += diff * diff;
        }
        sep += std::sqrt(d2);
        ++pairs;
      }
    out.separation = sep / static_cast<double>(pairs) / diameter;
  }

  if (diameter > 0) {
    double spread = 0;
    for (const auto& [label, members] : by_class) {
      double mean_dist = 0;
      for (i64 i : members) {
        double d2 = 0;
        for (i64 col = 0; col < points.cols(); ++col) {
          const double diff = points.at(i, col) - centroids[label][static_cast<std::size_t>(col)];
          d2 += diff * diff;
        }
        mean_dist += std::sqrt(d2) / static_cast<double>(members.size());
      }
      spread += mean_dist;
    }
    out.spread = spread / static_cast<double>(n_classes) / diameter;
  }

  const i64 kn = std::min<i64>(10, n - 1);
  if (kn > 0) {
    double overlap = 0;
    for (i64 i = 0; i < n; ++i) {
      if (class_size[labels[static_cast<std::size_t>(i)]] < 2) continue;
      std::vector<std::pair<double, i64>> dists;
      dists.reserve(static_cast<std::size_t>(n - 1));
      for (i64 j = 0; j < n; ++j)
        if (j != i) dists.emplace_back(sq_dist_row(points, i, points, j), j);
      std::partial_sort(dists.begin(), dists.begin() + kn, dists.end());
      i64 different = 0;
      for (i64 t = 0; t < kn; ++t)
        different += labels[static_cast<std::size_t>(dists[static_cast<std::size_t>(t)].second)] !=
                     labels[static_cast<std::size_t>(i)];
      overlap += static_cast<double>(different) / static_cast<double>(kn);
    }
    out.overlap = overlap / static_cast<double>(n) * 100.0;
  }
  return out;
}

}  // namespace gcdf
