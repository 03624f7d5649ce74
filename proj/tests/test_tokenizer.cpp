#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "gcdf/errors.hpp"
#include "gcdf/gcdformer.hpp"
#include "gcdf/rng.hpp"
#include "gcdf/tokenizer.hpp"

using namespace gcdf;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_model = 12;
  cfg.d_label = 4;
  cfg.d_in = 2;
  cfg.d_out = 2;
  cfg.seed = 7;
  return cfg;
}

GcdTask small_task() {
  GcdTask t;
  t.points = TensorT<double>({4, 2}, {0.1, 0.2, 0.1, 0.2, -0.5, 0.4, 0.9, -0.9});
  t.labels = {3, 3, 17, 260};
  t.observed = {1, 1, 1, 0};
  t.recompute_class_sets();
  return t;
}

}  // namespace

TEST_CASE("sinusoid at y=0 alternates sin 0 and cos 0") {
  const std::vector<double> e = sinusoid_embedding(0.0, 8, 10000.0);
  for (std::size_t i = 0; i < e.size(); i += 2) {
    CHECK(e[i] == 0.0);
    CHECK(e[i + 1] == 1.0);
  }
}

TEST_CASE("label_embedding rejects the reserved mask label") {
  CHECK_THROWS_AS(label_embedding(0, 32), contract_error);
  CHECK_THROWS_AS(label_embedding(-3, 32), contract_error);
  CHECK_THROWS_AS(label_embedding(5, 7), contract_error);
}

TEST_CASE("label_embedding y=3 with two components is [sin 3, cos 3]") {
  const std::vector<double> e = label_embedding(3, 2);
  CHECK(e[0] == doctest::Approx(std::sin(3.0)).epsilon(1e-15));
  CHECK(e[1] == doctest::Approx(std::cos(3.0)).epsilon(1e-15));
  CHECK(e[0] == doctest::Approx(0.14112000805986721).epsilon(1e-12));
  CHECK(e[1] == doctest::Approx(-0.98999249660044542).epsilon(1e-12));
}

TEST_CASE("label_embedding matches the direct formula across components") {
  const i64 d = 16;
  const double base = 10000.0;
  const std::vector<double> e = label_embedding(42, d, base);
  for (i64 i = 0; 2 * i < d; ++i) {
    const double arg = 42.0 / std::pow(base, (2.0 * static_cast<double>(i)) / static_cast<double>(d));
    CHECK(e[static_cast<std::size_t>(2 * i)] == doctest::Approx(std::sin(arg)).epsilon(1e-15));
    CHECK(e[static_cast<std::size_t>(2 * i + 1)] == doctest::Approx(std::cos(arg)).epsilon(1e-15));
  }
}

TEST_CASE("label_embedding is injective over 1..1000 at d_label=32") {
  const i64 d = 32;
  std::vector<std::vector<double>> all;
  all.reserve(1000);
  for (i64 y = 1; y <= 1000; ++y) {
    all.push_back(label_embedding(y, d));
    for (double v : all.back()) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  }
  double min_linf = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < all.size(); ++a)
    for (std::size_t b = a + 1; b < all.size(); ++b) {
      double linf = 0;
      for (i64 j = 0; j < d; ++j)
        linf = std::max(linf, std::fabs(all[a][static_cast<std::size_t>(j)] -
                                        all[b][static_cast<std::size_t>(j)]));
      min_linf = std::min(min_linf, linf);
    }
  CHECK(min_linf > 1e-6);
}

TEST_CASE("build_tokens: identical observed points with one label give identical rows") {
  const ModelConfig cfg = tiny_config();
  const ModelState m = init_model(cfg);
  const TokenSet ts = build_tokens(small_task(), cfg.token_spec(), m);
  for (i64 j = 0; j < cfg.d_model; ++j) CHECK(ts.tokens.at(0, j) == ts.tokens.at(1, j));
}

TEST_CASE("build_tokens: observed flag only changes the label slice") {
  const ModelConfig cfg = tiny_config();
  const ModelState m = init_model(cfg);
  GcdTask t = small_task();
  GcdTask t2 = t;
  t2.observed = {1, 1, 1, 1};
  t2.recompute_class_sets();
  const TokenSet a = build_tokens(t, cfg.token_spec(), m);
  const TokenSet b = build_tokens(t2, cfg.token_spec(), m);
  for (i64 j = 0; j < cfg.d_data(); ++j) CHECK(a.tokens.at(3, j) == b.tokens.at(3, j));
  bool label_differs = false;
  for (i64 j = cfg.d_data(); j < cfg.d_model; ++j)
    label_differs = label_differs || (a.tokens.at(3, j) != b.tokens.at(3, j));
  CHECK(label_differs);
}

TEST_CASE("build_tokens: the data slice is exactly the affine lift") {
  const ModelConfig cfg = tiny_config();
  const ModelState m = init_model(cfg);
  const GcdTask t = small_task();
  const TokenSet ts = build_tokens(t, cfg.token_spec(), m);
  // Independent lift: plain loops over w and b.
  const TensorT<double>& w = m.params[pidx::lift_w];
  const TensorT<double>& b = m.params[pidx::lift_b];
  for (i64 i = 0; i < t.n(); ++i)
    for (i64 j = 0; j < cfg.d_data(); ++j) {
      double want = b.data[static_cast<std::size_t>(j)];
      for (i64 c = 0; c < cfg.d_in; ++c) want += t.points.at(i, c) * w.at(c, j);
      CHECK(ts.tokens.at(i, j) == doctest::Approx(want).epsilon(1e-15));
    }
}

TEST_CASE("build_tokens: label slice carries T_LE when observed, T_LM when masked") {
  const ModelConfig cfg = tiny_config();
  const ModelState m = init_model(cfg);
  const GcdTask t = small_task();
  const TokenSet ts = build_tokens(t, cfg.token_spec(), m);
  const std::vector<double> e3 = label_embedding(3, cfg.d_label);
  for (i64 j = 0; j < cfg.d_label; ++j) {
    CHECK(ts.tokens.at(0, cfg.d_data() + j) == e3[static_cast<std::size_t>(j)]);
    CHECK(ts.tokens.at(3, cfg.d_data() + j) == m.params[pidx::t_lm].data[static_cast<std::size_t>(j)]);
  }
}

TEST_CASE("build_tokens: permuting the task permutes token rows identically") {
  const ModelConfig cfg = tiny_config();
  const ModelState m = init_model(cfg);
  const GcdTask t = small_task();
  GcdTask p;
  const std::vector<i64> perm{2, 0, 3, 1};
  p.points = TensorT<double>({4, 2});
  for (i64 i = 0; i < 4; ++i) {
    p.points.at(i, 0) = t.points.at(perm[static_cast<std::size_t>(i)], 0);
    p.points.at(i, 1) = t.points.at(perm[static_cast<std::size_t>(i)], 1);
    p.labels.push_back(t.labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
    p.observed.push_back(t.observed[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
  }
  p.recompute_class_sets();
  const TokenSet a = build_tokens(t, cfg.token_spec(), m);
  const TokenSet b = build_tokens(p, cfg.token_spec(), m);
  for (i64 i = 0; i < 4; ++i)
    for (i64 j = 0; j < cfg.d_model; ++j)
      CHECK(b.tokens.at(i, j) == a.tokens.at(perm[static_cast<std::size_t>(i)], j));
}

TEST_CASE("build_tokens rejects dimension mismatches") {
  const ModelConfig cfg = tiny_config();
  const ModelState m = init_model(cfg);
  GcdTask t = small_task();
  t.points = TensorT<double>({4, 3});
  CHECK_THROWS_AS((void)build_tokens(t, cfg.token_spec(), m), config_error);
}

TEST_CASE("normalize_latent: centered unit-max input is unchanged") {
  TensorT<double> pts({2, 2}, {1.0, 0.5, -1.0, -0.5});
  const TensorT<double> out = normalize_latent(pts);
  CHECK(out.data == pts.data);
}

TEST_CASE("normalize_latent: single point collapses to the origin") {
  TensorT<double> pts({1, 2}, {0.73, -0.21});
  const TensorT<double> out = normalize_latent(pts);
  CHECK(out.data == std::vector<double>{0.0, 0.0});
}

TEST_CASE("normalize_latent: identical points collapse to the origin") {
  TensorT<double> pts({3, 2}, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  const TensorT<double> out = normalize_latent(pts);
  for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("normalize_latent: random cloud hits max 1 exactly and preserves distance ratios") {
  Rng rng(55);
  TensorT<double> pts({40, 2});
  for (double& v : pts.data) v = rng.uniform(-30.0, 10.0);
  const TensorT<double> out = normalize_latent(pts);
  double max_abs = 0;
  for (double v : out.data) max_abs = std::max(max_abs, std::fabs(v));
  CHECK(max_abs == 1.0);

  // Similarity transform: all pairwise distances shrink by one global factor.
  auto dist = [](const TensorT<double>& m, i64 a, i64 b) {
    const double dx = m.at(a, 0) - m.at(b, 0), dy = m.at(a, 1) - m.at(b, 1);
    return std::sqrt(dx * dx + dy * dy);
  };
  const double f = dist(pts, 0, 1) / dist(out, 0, 1);
  for (i64 a = 0; a < 10; ++a)
    for (i64 b = a + 1; b < 10; ++b)
      CHECK(dist(pts, a, b) == doctest::Approx(dist(out, a, b) * f).epsilon(1e-12));
}

TEST_CASE("token spec validation") {
  TokenSpec s;
  s.d_label = 5;
  CHECK_THROWS_AS(s.validate(), config_error);
  s = TokenSpec{};
  s.d_data = 0;
  CHECK_THROWS_AS(s.validate(), config_error);
}
