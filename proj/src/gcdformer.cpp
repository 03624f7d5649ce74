#include "gcdf/gcdformer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <type_traits>

#include "gcdf/errors.hpp"
#include "gcdf/rng.hpp"

namespace gcdf {

void ModelConfig::validate() const {
  if (n_layers < 1) throw config_error("model: n_layers must be >= 1");
  if (n_heads < 1) throw config_error("model: n_heads must be >= 1");
  if (d_model % n_heads != 0) throw config_error("model: d_model must be divisible by n_heads");
  if (d_label < 2 || d_label % 2 != 0) throw config_error("model: d_label must be even and >= 2");
  if (d_model <= d_label) throw config_error("model: d_model must exceed d_label");
  if (d_in < 1) throw config_error("model: d_in must be >= 1");
  if (d_out < 1) throw config_error("model: d_out must be >= 1");
  if (mlp_ratio < 1) throw config_error("model: mlp_ratio must be >= 1");
  if (margin < 0) throw config_error("model: margin must be >= 0");
}

void TrainConfig::validate() const {
  if (lr <= 0) throw config_error("train: lr must be > 0");
  if (batch_size < 1) throw config_error("train: batch_size must be >= 1");
  if (epochs < 0 || steps_per_epoch < 0) throw config_error("train: step counts must be >= 0");
  if (checkpoint_every < 0) throw config_error("train: checkpoint_every must be >= 0");
  if (precision != "f64" && precision != "f32")
    throw config_error("train: precision must be f64 or f32");
  gen.validate();
}

std::vector<std::vector<i64>> param_shapes(const ModelConfig& cfg) {
  const i64 dm = cfg.d_model, dh = cfg.mlp_ratio * cfg.d_model;
  std::vector<std::vector<i64>> s;
  s.reserve(static_cast<std::size_t>(pidx::count(cfg)));
  s.push_back({cfg.d_in, cfg.d_data()});  // lift_w
  s.push_back({1, cfg.d_data()});         // lift_b
  s.push_back({1, cfg.d_label});          // t_lm
  for (i64 l = 0; l < cfg.n_layers; ++l) {
    s.push_back({1, dm});   // ln1_g
    s.push_back({1, dm});   // ln1_b
    s.push_back({dm, dm});  // wq
    s.push_back({1, dm});   // bq
    s.push_back({dm, dm});  // wk
    s.push_back({1, dm});   // bk
    s.push_back({dm, dm});  // wv
    s.push_back({1, dm});   // bv
    s.push_back({dm, dm});  // wo
    s.push_back({1, dm});   // bo
    s.push_back({1, dm});   // ln2_g
    s.push_back({1, dm});   // ln2_b
    s.push_back({dm, dh});  // mlp_w1
    s.push_back({1, dh});   // mlp_b1
    s.push_back({dh, dm});  // mlp_w2
    s.push_back({1, dm});   // mlp_b2
  }
  s.push_back({1, dm});            // lnf_g
  s.push_back({1, dm});            // lnf_b
  s.push_back({dm, cfg.d_out});    // head_w
  s.push_back({1, cfg.d_out});     // head_b
  return s;
}

namespace {

enum class Init { normal, zero, one };

Init init_kind(const ModelConfig& cfg, int p) {
  if (p == pidx::lift_w || p == pidx::t_lm || p == pidx::head_w(cfg)) return Init::normal;
  if (p == pidx::lnf_g(cfg)) return Init::one;
  if (p >= pidx::layer0 && p < pidx::lnf_g(cfg)) {
    switch ((p - pidx::layer0) % pidx::per_layer) {
      case pidx::ln1_g:
      case pidx::ln2_g:
        return Init::one;
      case pidx::wq:
      case pidx::wk:
      case pidx::wv:
      case pidx::wo:
      case pidx::mlp_w1:
      case pidx::mlp_w2:
        return Init::normal;
      default:
        return Init::zero;
    }
  }
  return Init::zero;
}

}  // namespace

ModelState init_model(const ModelConfig& cfg) {
  cfg.validate();
  ModelState m;
  m.cfg = cfg;
  Rng rng(mix_seed(cfg.seed, 0x6d6f64656cULL));
  const auto shapes = param_shapes(cfg);
  m.params.reserve(shapes.size());
  for (int p = 0; p < static_cast<int>(shapes.size()); ++p) {
    TensorT<double> t(shapes[static_cast<std::size_t>(p)]);
    switch (init_kind(cfg, p)) {
      case Init::normal:
        for (double& v : t.data) v = rng.normal(0.0, 0.02);
        break;
      case Init::one:
        for (double& v : t.data) v = 1.0;
        break;
      case Init::zero:
        break;
    }
    t.requires_grad = true;
    m.params.push_back(std::move(t));
  }
  return m;
}

i64 ModelState::param_scalars() const {
  i64 n = 0;
  for (const auto& p : params) n += p.numel();
  return n;
}

double contrastive_loss(const TensorT<double>& z, const std::vector<i64>& labels, double margin) {
  if (z.rows() < 2) throw contract_error("contrastive_loss: need at least 2 points");
  if (static_cast<i64>(labels.size()) != z.rows())
    throw contract_error("contrastive_loss: labels size must match rows");
  return contrastive_pair_loss(z.data.data(), z.rows(), z.cols(), labels.data(), margin);
}

double batch_loss(const std::vector<double>& task_losses) {
  if (task_losses.empty()) throw contract_error("batch_loss: empty batch");
  double s = 0;
  for (double v : task_losses) s += v;
  return s / static_cast<double>(task_losses.size());
}

namespace {

// Canonical row order: sort rows by token content, then observed flag, then
// label. Running the whole forward pass in this order and un-permuting at the
// end makes permutation equivariance exact in floating point: any input order
// leads to the identical sorted computation. Rows tying on the full key are
// interchangeable (identical tokens produce identical outputs).
template <class Real>
std::vector<i64> canonical_perm(const TensorT<Real>& tokens,
                                const std::vector<std::uint8_t>& observed,
                                const std::vector<i64>& labels) {
  const i64 n = tokens.rows(), d = tokens.cols();
  std::vector<i64> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), i64{0});
  std::sort(perm.begin(), perm.end(), [&](i64 a, i64 b) {
    const Real* ra = tokens.data.data() + a * d;
    const Real* rb = tokens.data.data() + b * d;
    for (i64 j = 0; j < d; ++j) {
      if (ra[j] < rb[j]) return true;
      if (ra[j] > rb[j]) return false;
    }
    if (observed[static_cast<std::size_t>(a)] != observed[static_cast<std::size_t>(b)])
      return observed[static_cast<std::size_t>(a)] < observed[static_cast<std::size_t>(b)];
    return labels[static_cast<std::size_t>(a)] < labels[static_cast<std::size_t>(b)];
  });
  return perm;
}

std::vector<i64> invert_perm(const std::vector<i64>& perm) {
  std::vector<i64> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[static_cast<std::size_t>(perm[i])] =
      static_cast<i64>(i);
  return inv;
}

template <class Real>
TensorT<Real> cast_tensor(const TensorT<double>& t) {
  TensorT<Real> out(t.shape);
  for (std::size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<Real>(t.data[i]);
  out.requires_grad = t.requires_grad;
  return out;
}

// Tape construction shared by both precisions.
template <class Real>
int build_transform_graph_t(GraphT<Real>& g, const ModelConfig& cfg,
                            const std::vector<int>& param_ids, const GcdTask& task) {
  cfg.validate();
  if (task.dim() != cfg.d_in)
    throw config_error("transform: task dimensionality does not match d_in");
  if (static_cast<int>(param_ids.size()) != pidx::count(cfg))
    throw config_error("transform: wrong number of parameter leaves");
  const TokenSpec spec = cfg.token_spec();

  const int points = g.constant(cast_tensor<Real>(task.points));
  const int lift = g.add_bias(g.matmul(points, param_ids[pidx::lift_w]), param_ids[pidx::lift_b]);
  const int emb = g.constant(cast_tensor<Real>(label_embedding_rows(task, spec)));
  const int mask = g.constant(cast_tensor<Real>(mask_column(task)));
  const int lab = g.add(emb, g.matmul(mask, param_ids[pidx::t_lm]));
  int x = g.concat_cols({lift, lab});

  const std::vector<i64> perm = canonical_perm(g.value(x), task.observed, task.labels);
  x = g.gather_rows(x, perm);

  const i64 dh = cfg.d_head();
  const Real inv_sqrt_dh = Real(1) / static_cast<Real>(std::sqrt(static_cast<double>(dh)));
  for (i64 l = 0; l < cfg.n_layers; ++l) {
    const auto P = [&](pidx::layer_offset off) {
      return param_ids[static_cast<std::size_t>(pidx::layer(static_cast<int>(l), off))];
    };
    const int h = g.layer_norm(x, P(pidx::ln1_g), P(pidx::ln1_b));
    const int q = g.add_bias(g.matmul(h, P(pidx::wq)), P(pidx::bq));
    const int k = g.add_bias(g.matmul(h, P(pidx::wk)), P(pidx::bk));
    const int v = g.add_bias(g.matmul(h, P(pidx::wv)), P(pidx::bv));
    std::vector<int> heads;
    heads.reserve(static_cast<std::size_t>(cfg.n_heads));
    for (i64 hd = 0; hd < cfg.n_heads; ++hd) {
      const int qh = g.slice_cols(q, hd * dh, dh);
      const int kh = g.slice_cols(k, hd * dh, dh);
      const int vh = g.slice_cols(v, hd * dh, dh);
      const int att = g.softmax_rows(g.scale(g.matmul_nt(qh, kh), inv_sqrt_dh));
      heads.push_back(g.matmul(att, vh));
    }
    const int cat = g.concat_cols(heads);
    const int attn_out = g.add_bias(g.matmul(cat, P(pidx::wo)), P(pidx::bo));
    x = g.add(x, attn_out);
    const int h2 = g.layer_norm(x, P(pidx::ln2_g), P(pidx::ln2_b));
    const int m1 = g.gelu(g.add_bias(g.matmul(h2, P(pidx::mlp_w1)), P(pidx::mlp_b1)));
    const int m2 = g.add_bias(g.matmul(m1, P(pidx::mlp_w2)), P(pidx::mlp_b2));
    x = g.add(x, m2);
  }
  x = g.layer_norm(x, param_ids[static_cast<std::size_t>(pidx::lnf_g(cfg))],
                   param_ids[static_cast<std::size_t>(pidx::lnf_b(cfg))]);
  const int z = g.add_bias(g.matmul(x, param_ids[static_cast<std::size_t>(pidx::head_w(cfg))]),
                           param_ids[static_cast<std::size_t>(pidx::head_b(cfg))]);
  return g.gather_rows(z, invert_perm(perm));
}

template <class Real>
int build_loss_graph_t(GraphT<Real>& g, const ModelConfig& cfg, const std::vector<int>& param_ids,
                       const GcdTask& task) {
  const int z = build_transform_graph_t(g, cfg, param_ids, task);
  return g.contrastive_loss(z, task.labels, static_cast<Real>(cfg.margin));
}

}  // namespace

int build_transform_graph(GraphT<double>& g, const ModelConfig& cfg,
                          const std::vector<int>& param_ids, const GcdTask& task) {
  return build_transform_graph_t(g, cfg, param_ids, task);
}

int build_loss_graph(GraphT<double>& g, const ModelConfig& cfg, const std::vector<int>& param_ids,
                     const GcdTask& task) {
  return build_loss_graph_t(g, cfg, param_ids, task);
}

TensorT<double> forward(const ModelState& model, const TokenSet& ts) {
  const ModelConfig& cfg = model.cfg;
  cfg.validate();
  if (ts.tokens.cols() != cfg.d_model)
    throw config_error("forward: token width " + std::to_string(ts.tokens.cols()) +
                       " does not match d_model " + std::to_string(cfg.d_model));
  const i64 n = ts.tokens.rows();
  const i64 dm = cfg.d_model, dh = cfg.d_head();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto& P = model.params;

  const std::vector<i64> perm = canonical_perm(ts.tokens, ts.observed, ts.labels);
  TensorT<double> x({n, dm});
  for (i64 i = 0; i < n; ++i)
    for (i64 j = 0; j < dm; ++j) x.at(i, j) = ts.tokens.at(perm[static_cast<std::size_t>(i)], j);

  // Streaming mirror of the tape: same kernels, same order, no activations kept.
  auto linear = [n](const TensorT<double>& in, const TensorT<double>& w, const TensorT<double>& b) {
    TensorT<double> out({n, w.cols()});
    addmm_nn(in.data.data(), n, in.cols(), w.data.data(), w.cols(), out.data.data());
    add_bias_rows(out.data.data(), n, w.cols(), b.data.data());
    return out;
  };

  for (i64 l = 0; l < cfg.n_layers; ++l) {
    const auto L = [&](pidx::layer_offset off) -> const TensorT<double>& {
      return P[static_cast<std::size_t>(pidx::layer(static_cast<int>(l), off))];
    };
    TensorT<double> h({n, dm});
    layer_norm_forward(x.data.data(), n, dm, L(pidx::ln1_g).data.data(), L(pidx::ln1_b).data.data(),
                       h.data.data());
    const TensorT<double> q = linear(h, L(pidx::wq), L(pidx::bq));
    const TensorT<double> k = linear(h, L(pidx::wk), L(pidx::bk));
    const TensorT<double> v = linear(h, L(pidx::wv), L(pidx::bv));
    TensorT<double> cat({n, dm});
    TensorT<double> qh({n, dh}), kh({n, dh}), vh({n, dh});
    for (i64 hd = 0; hd < cfg.n_heads; ++hd) {
      copy_cols(q.data.data(), n, dm, hd * dh, dh, qh.data.data());
      copy_cols(k.data.data(), n, dm, hd * dh, dh, kh.data.data());
      copy_cols(v.data.data(), n, dm, hd * dh, dh, vh.data.data());
      TensorT<double> att({n, n});
      addmm_nt(qh.data.data(), n, dh, kh.data.data(), n, att.data.data());
      for (double& s : att.data) s *= inv_sqrt_dh;
      softmax_rows_inplace(att.data.data(), n, n);
      TensorT<double> oh({n, dh});
      addmm_nn(att.data.data(), n, n, vh.data.data(), dh, oh.data.data());
      paste_cols(oh.data.data(), n, dh, cat.data.data(), dm, hd * dh);
    }
    const TensorT<double> attn_out = linear(cat, L(pidx::wo), L(pidx::bo));
    for (i64 i = 0; i < x.numel(); ++i) x.data[i] = x.data[i] + attn_out.data[i];
    TensorT<double> h2({n, dm});
    layer_norm_forward(x.data.data(), n, dm, L(pidx::ln2_g).data.data(), L(pidx::ln2_b).data.data(),
                       h2.data.data());
    TensorT<double> m1 = linear(h2, L(pidx::mlp_w1), L(pidx::mlp_b1));
    for (double& s : m1.data) s = gelu_scalar(s);
    const TensorT<double> m2 = linear(m1, L(pidx::mlp_w2), L(pidx::mlp_b2));
    for (i64 i = 0; i < x.numel(); ++i) x.data[i] = x.data[i] + m2.data[i];
  }
  TensorT<double> xf({n, dm});
  layer_norm_forward(x.data.data(), n, dm, P[static_cast<std::size_t>(pidx::lnf_g(cfg))].data.data(),
                     P[static_cast<std::size_t>(pidx::lnf_b(cfg))].data.data(), xf.data.data());
  const TensorT<double> z = linear(xf, P[static_cast<std::size_t>(pidx::head_w(cfg))],
                                   P[static_cast<std::size_t>(pidx::head_b(cfg))]);

  TensorT<double> out({n, cfg.d_out});
  for (i64 i = 0; i < n; ++i)
    for (i64 j = 0; j < cfg.d_out; ++j) out.at(perm[static_cast<std::size_t>(i)], j) = z.at(i, j);
  return out;
}

TensorT<double> transform(const ModelState& model, const GcdTask& task) {
  return forward(model, build_tokens(task, model.cfg.token_spec(), model));
}

namespace {

template <class Real>
TrainResult train_loop(Trainer& tr, const TrainConfig& tcfg, const std::function<void(i64)>& on_step) {
  tcfg.validate();
  tr.model.cfg.validate();

  AdamWConfig oc = tcfg.opt;
  oc.lr = tcfg.lr;
  if (tr.opt.m.empty()) {
    tr.opt.init(tr.model.params);
    tr.opt.step = tr.step;
  }
  tr.opt.cfg = oc;

  const std::size_t np = tr.model.params.size();
  std::vector<TensorT<Real>> params(np);
  for (std::size_t p = 0; p < np; ++p) params[p] = cast_tensor<Real>(tr.model.params[p]);
  AdamWStateT<Real> opt;
  opt.cfg = tr.opt.cfg;
  opt.step = tr.opt.step;
  opt.m.resize(np);
  opt.v.resize(np);
  for (std::size_t p = 0; p < np; ++p) {
    opt.m[p].assign(tr.opt.m[p].begin(), tr.opt.m[p].end());
    opt.v[p].assign(tr.opt.v[p].begin(), tr.opt.v[p].end());
  }

  TrainResult res;
  const i64 total = tcfg.total_steps();
  res.losses.reserve(static_cast<std::size_t>(std::max<i64>(total - tr.step, 0)));
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<TensorT<Real>> grads(np);
  for (i64 s = tr.step; s < total; ++s) {
    for (std::size_t p = 0; p < np; ++p) {
      grads[p] = TensorT<Real>(params[p].shape);
    }
    double loss_sum = 0;
    for (i64 b = 0; b < tcfg.batch_size; ++b) {
      const std::uint64_t task_seed =
          mix_seed(tcfg.seed, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(b));
      GenConfig gen = tcfg.gen;
      gen.seed = task_seed;
      const GcdTask task = generate_task(gen);
      GraphT<Real> g;
      std::vector<int> ids;
      ids.reserve(np);
      for (std::size_t p = 0; p < np; ++p) ids.push_back(g.leaf(params[p]));
      const int loss_id = build_loss_graph_t(g, tr.model.cfg, ids, task);
      const double lv = static_cast<double>(g.value(loss_id).data[0]);
      if (!std::isfinite(lv))
        throw training_error("non-finite loss at step " + std::to_string(s + 1) + ", task seed " +
                             std::to_string(task_seed));
      g.backward(loss_id);
      for (std::size_t p = 0; p < np; ++p) {
        const auto& gp = g.grad(ids[p]).data;
        for (std::size_t i = 0; i < gp.size(); ++i) grads[p].data[i] += gp[i];
      }
      loss_sum += lv;
    }
    const Real inv_b = Real(1) / static_cast<Real>(tcfg.batch_size);
    for (std::size_t p = 0; p < np; ++p)
      for (Real& v : grads[p].data) v *= inv_b;
    opt.apply(params, grads);

    tr.step = s + 1;
    tr.opt.step = opt.step;
    for (std::size_t p = 0; p < np; ++p) {
      for (std::size_t i = 0; i < params[p].data.size(); ++i) {
        tr.model.params[p].data[i] = static_cast<double>(params[p].data[i]);
        tr.opt.m[p][i] = static_cast<double>(opt.m[p][i]);
        tr.opt.v[p][i] = static_cast<double>(opt.v[p][i]);
      }
    }
    res.losses.push_back(loss_sum / static_cast<double>(tcfg.batch_size));
    res.wall_times.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    if (on_step) on_step(s + 1);
  }
  return res;
}

}  // namespace

TrainResult train(Trainer& trainer, const TrainConfig& tcfg, const std::function<void(i64)>& on_step) {
  if (tcfg.precision == "f32") return train_loop<float>(trainer, tcfg, on_step);
  return train_loop<double>(trainer, tcfg, on_step);
}

}  // namespace gcdf
