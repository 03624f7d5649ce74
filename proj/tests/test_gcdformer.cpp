#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "gcdf/errors.hpp"
#include "gcdf/gcdformer.hpp"
#include "gcdf/gradcheck.hpp"
#include "gcdf/rng.hpp"

using namespace gcdf;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_model = 12;
  cfg.d_label = 4;
  cfg.d_in = 2;
  cfg.d_out = 2;
  cfg.seed = 11;
  return cfg;
}

GenConfig tiny_gen() {
  GenConfig gen;
  gen.d = 2;
  gen.min_clusters = 2;
  gen.max_clusters = 5;
  gen.max_points = 40;
  gen.min_points_per_cluster = 3;
  gen.scale_range = {0.02, 0.1};
  return gen;
}

GcdTask random_task(std::uint64_t seed) {
  GenConfig gen = tiny_gen();
  gen.seed = seed;
  return generate_task(gen);
}

TensorT<double> random_z(Rng& rng, i64 n, i64 d) {
  TensorT<double> z({n, d});
  for (double& v : z.data) v = rng.uniform(-2.0, 2.0);
  return z;
}

// Brute-force oracle: enumerate pairs directly from the definition.
double pair_loss_oracle(const TensorT<double>& z, const std::vector<i64>& labels, double m) {
  double total = 0;
  i64 pairs = 0;
  for (i64 j = 0; j < z.rows(); ++j)
    for (i64 k = j + 1; k < z.rows(); ++k) {
      double d2 = 0;
      for (i64 c = 0; c < z.cols(); ++c)
        d2 += (z.at(j, c) - z.at(k, c)) * (z.at(j, c) - z.at(k, c));
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(k)])
        total += d2;
      else {
        const double h = m - std::sqrt(d2);
        if (h > 0) total += h * h;
      }
      ++pairs;
    }
  return total / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("init_model: deterministic, with documented tensor count and init scheme") {
  const ModelConfig cfg = tiny_config();
  const ModelState a = init_model(cfg);
  const ModelState b = init_model(cfg);
  REQUIRE(static_cast<int>(a.params.size()) == pidx::count(cfg));
  for (std::size_t p = 0; p < a.params.size(); ++p) CHECK(a.params[p].data == b.params[p].data);
  // biases zero, norm gains one
  for (double v : a.params[pidx::lift_b].data) CHECK(v == 0.0);
  for (double v : a.params[pidx::layer(0, pidx::ln1_g)].data) CHECK(v == 1.0);
  for (double v : a.params[static_cast<std::size_t>(pidx::head_b(cfg))].data) CHECK(v == 0.0);
  // weights small but not all zero
  double sum_abs = 0;
  for (double v : a.params[pidx::layer(0, pidx::wq)].data) sum_abs += std::fabs(v);
  CHECK(sum_abs > 0.0);
  CHECK(sum_abs / static_cast<double>(a.params[pidx::layer(0, pidx::wq)].numel()) < 0.1);
}

TEST_CASE("contrastive_loss: coincident same-label points cost nothing") {
  TensorT<double> z({3, 2}, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  CHECK(contrastive_loss(z, {4, 4, 4}, 1.0) == 0.0);
}

TEST_CASE("contrastive_loss: coincident different-label pair costs the squared margin") {
  TensorT<double> z({2, 2}, {0.0, 0.0, 0.0, 0.0});
  CHECK(contrastive_loss(z, {1, 2}, 1.0) == 1.0);
  CHECK(contrastive_loss(z, {1, 2}, 2.0) == 4.0);
}

TEST_CASE("contrastive_loss: three coincident points with labels [a,a,b] give 2/3") {
  TensorT<double> z({3, 2});
  CHECK(contrastive_loss(z, {5, 5, 8}, 1.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("contrastive_loss: matches brute-force enumeration on random cases") {
  Rng rng(101);
  for (int it = 0; it < 50; ++it) {
    const i64 n = rng.uniform_int(2, 30);
    const i64 d = rng.uniform_int(1, 4);
    TensorT<double> z = random_z(rng, n, d);
    std::vector<i64> labels;
    for (i64 i = 0; i < n; ++i) labels.push_back(rng.uniform_int(1, 4));
    const double m = rng.uniform(0.2, 2.0);
    CHECK(contrastive_loss(z, labels, m) ==
          doctest::Approx(pair_loss_oracle(z, labels, m)).epsilon(1e-12));
  }
}

TEST_CASE("contrastive_loss: invariant under bijective relabeling") {
  Rng rng(202);
  TensorT<double> z = random_z(rng, 12, 2);
  std::vector<i64> labels{1, 1, 2, 2, 3, 3, 3, 1, 2, 1, 3, 2};
  std::vector<i64> relabeled;
  for (i64 l : labels) relabeled.push_back(l == 1 ? 700 : (l == 2 ? 4 : 91));
  CHECK(contrastive_loss(z, labels, 1.0) == contrastive_loss(z, relabeled, 1.0));
}

TEST_CASE("contrastive_loss: fewer than two points is a contract violation") {
  TensorT<double> z({1, 2});
  CHECK_THROWS_AS((void)contrastive_loss(z, {1}, 1.0), contract_error);
}

TEST_CASE("batch_loss: mean of task losses") {
  CHECK(batch_loss({0.7}) == 0.7);
  CHECK(batch_loss({0.0, 2.0}) == 1.0);
  Rng rng(303);
  std::vector<double> losses;
  double sum = 0;
  for (int i = 0; i < 16; ++i) {
    losses.push_back(rng.uniform(0.0, 3.0));
    sum += losses.back();
  }
  CHECK(batch_loss(losses) == doctest::Approx(sum / 16.0).epsilon(1e-15));
  CHECK_THROWS_AS((void)batch_loss({}), contract_error);
}

TEST_CASE("forward: permuting input rows permutes output rows exactly") {
  const ModelConfig cfg = tiny_config();
  const ModelState m = init_model(cfg);
  const GcdTask t = random_task(5001);
  const TensorT<double> z = transform(m, t);

  Rng rng(42);
  std::vector<i64> perm(static_cast<std::size_t>(t.n()));
  for (i64 i = 0; i < t.n(); ++i) perm[static_cast<std::size_t>(i)] = i;
  for (i64 i = t.n() - 1; i > 0; --i)
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(rng.uniform_int(0, i))]);

  GcdTask p;
  p.points = TensorT<double>({t.n(), t.dim()});
  for (i64 i = 0; i < t.n(); ++i) {
    for (i64 c = 0; c < t.dim(); ++c)
      p.points.at(i, c) = t.points.at(perm[static_cast<std::size_t>(i)], c);
    p.labels.push_back(t.labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
    p.observed.push_back(t.observed[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
  }
  p.recompute_class_sets();
  const TensorT<double> zp = transform(m, p);
  for (i64 i = 0; i < t.n(); ++i)
    for (i64 c = 0; c < cfg.d_out; ++c)
      CHECK(zp.at(i, c) == z.at(perm[static_cast<std::size_t>(i)], c));
}

TEST_CASE("forward: duplicated token rows produce identical output rows") {
  const ModelConfig cfg = tiny_config();
  const ModelState m = init_model(cfg);
  GcdTask t;
  t.points = TensorT<double>({4, 2}, {0.3, -0.2, 0.3, -0.2, -0.7, 0.9, 0.1, 0.0});
  t.labels = {9, 9, 12, 40};
  t.observed = {1, 1, 0, 1};
  t.recompute_class_sets();
  const TensorT<double> z = transform(m, t);
  CHECK(z.at(0, 0) == z.at(1, 0));
  CHECK(z.at(0, 1) == z.at(1, 1));
}

TEST_CASE("forward: single token reduces attention to its own value projection") {
  const ModelConfig cfg = tiny_config();
  const ModelState m = init_model(cfg);
  GcdTask t;
  t.points = TensorT<double>({1, 2}, {0.4, -0.6});
  t.labels = {77};
  t.observed = {1};
  t.recompute_class_sets();
  const TokenSet ts = build_tokens(t, cfg.token_spec(), m);
  const TensorT<double> z = transform(m, t);

  // Closed form with plain loops: softmax over one key is 1, so each
  // attention block contributes exactly its value projection.
  const i64 dm = cfg.d_model;
  std::vector<double> x(ts.tokens.data);
  auto layer_norm_row = [dm](std::vector<double> row, const TensorT<double>& g,
                             const TensorT<double>& b) {
    double mu = 0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(dm);
    double var = 0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(dm);
    for (i64 j = 0; j < dm; ++j)
      row[static_cast<std::size_t>(j)] =
          (row[static_cast<std::size_t>(j)] - mu) / std::sqrt(var + kLayerNormEps) * g.data[static_cast<std::size_t>(j)] +
          b.data[static_cast<std::size_t>(j)];
    return row;
  };
  auto affine = [](const std::vector<double>& row, const TensorT<double>& w,
                   const TensorT<double>& b) {
    std::vector<double> out(static_cast<std::size_t>(w.cols()), 0.0);
    for (i64 j = 0; j < w.cols(); ++j) {
      double s = b.data[static_cast<std::size_t>(j)];
      for (i64 c = 0; c < w.rows(); ++c) s += row[static_cast<std::size_t>(c)] * w.at(c, j);
      out[static_cast<std::size_t>(j)] = s;
    }
    return out;
  };
  for (i64 l = 0; l < cfg.n_layers; ++l) {
    const auto L = [&](pidx::layer_offset off) -> const TensorT<double>& {
      return m.params[static_cast<std::size_t>(pidx::layer(static_cast<int>(l), off))];
    };
    const std::vector<double> h = layer_norm_row(x, L(pidx::ln1_g), L(pidx::ln1_b));
    const std::vector<double> v = affine(h, L(pidx::wv), L(pidx::bv));
    const std::vector<double> a = affine(v, L(pidx::wo), L(pidx::bo));
    for (i64 j = 0; j < dm; ++j) x[static_cast<std::size_t>(j)] += a[static_cast<std::size_t>(j)];
    const std::vector<double> h2 = layer_norm_row(x, L(pidx::ln2_g), L(pidx::ln2_b));
    std::vector<double> m1 = affine(h2, L(pidx::mlp_w1), L(pidx::mlp_b1));
    for (double& s : m1) s = gelu_scalar(s);
    const std::vector<double> m2 = affine(m1, L(pidx::mlp_w2), L(pidx::mlp_b2));
    for (i64 j = 0; j < dm; ++j) x[static_cast<std::size_t>(j)] += m2[static_cast<std::size_t>(j)];
  }
  const std::vector<double> xf =
      layer_norm_row(x, m.params[static_cast<std::size_t>(pidx::lnf_g(cfg))],
                     m.params[static_cast<std::size_t>(pidx::lnf_b(cfg))]);
  const std::vector<double> want =
      affine(xf, m.params[static_cast<std::size_t>(pidx::head_w(cfg))],
             m.params[static_cast<std::size_t>(pidx::head_b(cfg))]);
  for (i64 c = 0; c < cfg.d_out; ++c)
    CHECK(z.at(0, c) == doctest::Approx(want[static_cast<std::size_t>(c)]).epsilon(1e-12));
}

TEST_CASE("forward: width mismatch raises a config error") {
  const ModelConfig cfg = tiny_config();
  const ModelState m = init_model(cfg);
  TokenSet ts;
  ts.tokens = TensorT<double>({3, cfg.d_model + 1});
  ts.observed = {1, 1, 1};
  ts.labels = {1, 2, 3};
  CHECK_THROWS_AS((void)forward(m, ts), config_error);
}

TEST_CASE("tape forward equals streaming forward bit for bit") {
  const ModelConfig cfg = tiny_config();
  const ModelState m = init_model(cfg);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const GcdTask t = random_task(7000 + s);
    const TensorT<double> eager = transform(m, t);
    Graph g;
    std::vector<int> ids;
    for (const auto& p : m.params) ids.push_back(g.leaf(p));
    const int z = build_transform_graph(g, cfg, ids, t);
    CHECK(g.value(z).data == eager.data);
  }
}

TEST_CASE("transform is pure: repeated calls agree and parameters never move") {
  const ModelConfig cfg = tiny_config();
  const ModelState m = init_model(cfg);
  const std::vector<TensorT<double>> before = m.params;
  const GcdTask t = random_task(31);
  const TensorT<double> z1 = transform(m, t);
  const TensorT<double> z2 = transform(m, t);
  CHECK(z1.data == z2.data);
  for (std::size_t p = 0; p < before.size(); ++p) CHECK(m.params[p].data == before[p].data);
}

TEST_CASE("full loss gradient matches finite differences on a 5-point task") {
  ModelConfig cfg = tiny_config();
  cfg.n_layers = 2;
  GcdTask t;
  t.points = TensorT<double>({5, 2}, {0.1, 0.2, -0.3, 0.4, 0.5, -0.5, -0.9, 0.9, 0.0, 0.05});
  t.labels = {3, 3, 17, 17, 260};
  t.observed = {1, 0, 1, 1, 0};
  t.recompute_class_sets();
  std::vector<Tensor> params = init_model(cfg).params;
  const double err = gradient_check(params, [&](Graph& g, const std::vector<int>& ids) {
    return build_loss_graph(g, cfg, ids, t);
  }, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("train: zero steps leave the model at initialization") {
  const ModelConfig cfg = tiny_config();
  Trainer tr(init_model(cfg));
  TrainConfig tcfg;
  tcfg.epochs = 0;
  tcfg.gen = tiny_gen();
  const TrainResult r = train(tr, tcfg);
  CHECK(r.losses.empty());
  const ModelState fresh = init_model(cfg);
  for (std::size_t p = 0; p < fresh.params.size(); ++p)
    CHECK(tr.model.params[p].data == fresh.params[p].data);
}

TEST_CASE("train: loss goes down on the desk configuration") {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 4;
  cfg.d_model = 64;
  cfg.d_label = 16;
  cfg.d_out = 2;
  cfg.seed = 1;
  Trainer tr(init_model(cfg));
  TrainConfig tcfg;
  tcfg.lr = 1e-4;
  tcfg.batch_size = 4;
  tcfg.epochs = 3;
  tcfg.steps_per_epoch = 100;
  tcfg.gen = tiny_gen();
  tcfg.seed = 99;
  const TrainResult r = train(tr, tcfg);
  REQUIRE(r.losses.size() == 300);
  REQUIRE(r.wall_times.size() == 300);
  double first = 0, last = 0;
  for (int i = 0; i < 50; ++i) {
    first += r.losses[static_cast<std::size_t>(i)];
    last += r.losses[r.losses.size() - 1 - static_cast<std::size_t>(i)];
  }
  CHECK(last / 50.0 < first / 50.0);
}

TEST_CASE("train: identical seeds give bit-identical parameters") {
  const ModelConfig cfg = tiny_config();
  TrainConfig tcfg;
  tcfg.batch_size = 2;
  tcfg.epochs = 1;
  tcfg.steps_per_epoch = 10;
  tcfg.gen = tiny_gen();
  tcfg.seed = 7;
  Trainer a(init_model(cfg));
  Trainer b(init_model(cfg));
  train(a, tcfg);
  train(b, tcfg);
  for (std::size_t p = 0; p < a.model.params.size(); ++p)
    CHECK(a.model.params[p].data == b.model.params[p].data);
}

TEST_CASE("train: resuming mid-run reproduces the uninterrupted run exactly") {
  const ModelConfig cfg = tiny_config();
  TrainConfig tcfg;
  tcfg.batch_size = 2;
  tcfg.epochs = 1;
  tcfg.steps_per_epoch = 12;
  tcfg.gen = tiny_gen();
  tcfg.seed = 13;

  Trainer full(init_model(cfg));
  const TrainResult rf = train(full, tcfg);

  TrainConfig half = tcfg;
  half.steps_per_epoch = 6;
  Trainer split(init_model(cfg));
  train(split, half);
  CHECK(split.step == 6);
  const TrainResult rs = train(split, tcfg);  // continues to step 12

  CHECK(split.step == full.step);
  for (std::size_t p = 0; p < full.model.params.size(); ++p)
    CHECK(split.model.params[p].data == full.model.params[p].data);
  for (std::size_t i = 0; i < rs.losses.size(); ++i)
    CHECK(rs.losses[i] == rf.losses[i + 6]);
}

TEST_CASE("train: divergence aborts with step and task seed in the message") {
  const ModelConfig cfg = tiny_config();
  Trainer tr(init_model(cfg));
  TrainConfig tcfg;
  tcfg.lr = 1e200;
  tcfg.batch_size = 1;
  tcfg.epochs = 1;
  tcfg.steps_per_epoch = 10;
  tcfg.gen = tiny_gen();
  try {
    train(tr, tcfg);
    FAIL("expected training_error");
  } catch (const training_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step") != std::string::npos);
    CHECK(msg.find("task seed") != std::string::npos);
  }
}

TEST_CASE("train: 32-bit mode runs deterministically and changes parameters") {
  const ModelConfig cfg = tiny_config();
  TrainConfig tcfg;
  tcfg.precision = "f32";
  tcfg.batch_size = 2;
  tcfg.epochs = 1;
  tcfg.steps_per_epoch = 8;
  tcfg.gen = tiny_gen();
  Trainer a(init_model(cfg));
  Trainer b(init_model(cfg));
  const TrainResult ra = train(a, tcfg);
  train(b, tcfg);
  for (double l : ra.losses) CHECK(std::isfinite(l));
  for (std::size_t p = 0; p < a.model.params.size(); ++p)
    CHECK(a.model.params[p].data == b.model.params[p].data);
  bool moved = false;
  const ModelState fresh = init_model(cfg);
  for (std::size_t p = 0; p < fresh.params.size(); ++p)
    moved = moved || (a.model.params[p].data != fresh.params[p].data);
  CHECK(moved);
}

TEST_CASE("training lowers the loss on held-out tasks") {
  ModelConfig cfg = tiny_config();
  Trainer tr(init_model(cfg));
  TrainConfig tcfg;
  tcfg.batch_size = 4;
  tcfg.epochs = 1;
  tcfg.steps_per_epoch = 150;
  tcfg.gen = tiny_gen();
  tcfg.seed = 555;
  train(tr, tcfg);

  const ModelState untrained = init_model(cfg);
  auto held_out_loss = [&](const ModelState& m) {
    double total = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const GcdTask t = random_task(900000 + s);
      total += contrastive_loss(transform(m, t), t.labels, cfg.margin);
    }
    return total / 20.0;
  };
  CHECK(held_out_loss(tr.model) < held_out_loss(untrained));
}
