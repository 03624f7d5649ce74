#include "gcdf/tokenizer.hpp"

#include <cmath>

#include "gcdf/errors.hpp"
#include "gcdf/gcdformer.hpp"

namespace gcdf {

void TokenSpec::validate() const {
  if (d_in < 1) throw config_error("token spec: d_in must be >= 1");
  if (d_data < 1) throw config_error("token spec: d_data must be >= 1");
  if (d_label < 2 || d_label % 2 != 0) throw config_error("token spec: d_label must be even and >= 2");
  if (base <= 1.0) throw config_error("token spec: base must be > 1");
}

std::vector<double> sinusoid_embedding(double y, i64 d_label, double base) {
  std::vector<double> e(static_cast<std::size_t>(d_label));
  for (i64 i = 0; 2 * i < d_label; ++i) {
    const double freq = std::pow(base, static_cast<double>(2 * i) / static_cast<double>(d_label));
    e[static_cast<std::size_t>(2 * i)] = std::sin(y / freq);
    e[static_cast<std::size_t>(2 * i + 1)] = std::cos(y / freq);
  }
  return e;
}

std::vector<double> label_embedding(i64 y, i64 d_label, double base) {
  if (y < 1) throw contract_error("label_embedding: y must be >= 1 (0 is the mask)");
  if (d_label < 2 || d_label % 2 != 0)
    throw contract_error("label_embedding: d_label must be even and >= 2");
  return sinusoid_embedding(static_cast<double>(y), d_label, base);
}

TensorT<double> label_embedding_rows(const GcdTask& task, const TokenSpec& spec) {
  TensorT<double> e({task.n(), spec.d_label});
  for (i64 i = 0; i < task.n(); ++i) {
    if (!task.observed[static_cast<std::size_t>(i)]) continue;
    const std::vector<double> row =
        label_embedding(task.labels[static_cast<std::size_t>(i)], spec.d_label, spec.base);
    for (i64 j = 0; j < spec.d_label; ++j) e.at(i, j) = row[static_cast<std::size_t>(j)];
  }
  return e;
}

TensorT<double> mask_column(const GcdTask& task) {
  TensorT<double> m({task.n(), 1});
  for (i64 i = 0; i < task.n(); ++i)
    m.data[static_cast<std::size_t>(i)] = task.observed[static_cast<std::size_t>(i)] ? 0.0 : 1.0;
  return m;
}

TokenSet build_tokens(const GcdTask& task, const TokenSpec& spec, const ModelState& model) {
  spec.validate();
  if (task.dim() != spec.d_in)
    throw config_error("build_tokens: task dimensionality " + std::to_string(task.dim()) +
                       " does not match d_in " + std::to_string(spec.d_in));
  if (model.cfg.d_label != spec.d_label || model.cfg.d_data() != spec.d_data ||
      model.cfg.d_in != spec.d_in)
    throw config_error("build_tokens: token spec does not match the model's dimensions");

  const i64 n = task.n();
  const TensorT<double>& lw = model.params[pidx::lift_w];
  const TensorT<double>& lb = model.params[pidx::lift_b];
  const TensorT<double>& tlm = model.params[pidx::t_lm];

  // Mirrors the tape path exactly: matmul, bias broadcast, E + mask * T_LM.
  TensorT<double> lift({n, spec.d_data});
  addmm_nn(task.points.data.data(), n, spec.d_in, lw.data.data(), spec.d_data, lift.data.data());
  add_bias_rows(lift.data.data(), n, spec.d_data, lb.data.data());

  TensorT<double> labels = label_embedding_rows(task, spec);
  TensorT<double> mask = mask_column(task);
  addmm_nn(mask.data.data(), n, 1, tlm.data.data(), spec.d_label, labels.data.data());

  TokenSet ts;
  ts.tokens = TensorT<double>({n, spec.d_model()});
  paste_cols(lift.data.data(), n, spec.d_data, ts.tokens.data.data(), spec.d_model(), 0);
  paste_cols(labels.data.data(), n, spec.d_label, ts.tokens.data.data(), spec.d_model(), spec.d_data);
  ts.observed = task.observed;
  ts.labels = task.labels;
  return ts;
}

TensorT<double> normalize_latent(const TensorT<double>& points) {
  const i64 n = points.rows(), d = points.cols();
  if (n < 1) throw contract_error("normalize_latent: need at least one point");
  if (!points.all_finite()) throw contract_error("normalize_latent: non-finite coordinates");
  TensorT<double> out({n, d});
  std::vector<double> centroid(static_cast<std::size_t>(d), 0.0);
  for (i64 i = 0; i < n; ++i)
    for (i64 j = 0; j < d; ++j) centroid[static_cast<std::size_t>(j)] += points.at(i, j);
  for (double& c : centroid) c /= static_cast<double>(n);
  double max_abs = 0.0;
  for (i64 i = 0; i < n; ++i)
    for (i64 j = 0; j < d; ++j) {
      out.at(i, j) = points.at(i, j) - centroid[static_cast<std::size_t>(j)];
      max_abs = std::max(max_abs, std::fabs(out.at(i, j)));
    }
  if (max_abs == 0.0) return out;  // degenerate: all points coincide
  for (double& v : out.data) v /= max_abs;
  return out;
}

}  // namespace gcdf
