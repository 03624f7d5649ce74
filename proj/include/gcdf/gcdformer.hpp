#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gcdf/adamw.hpp"
#include "gcdf/graph.hpp"
#include "gcdf/synthgen.hpp"
#include "gcdf/tensor.hpp"
#include "gcdf/tokenizer.hpp"

namespace gcdf {

struct ModelConfig {
  i64 n_layers = 6;
  i64 n_heads = 4;
  i64 d_model = 256;
  i64 d_label = 32;
  i64 d_in = 2;
  i64 d_out = 2;
  i64 mlp_ratio = 4;
  double margin = 1.0;
  std::uint64_t seed = 0;

  i64 d_data() const { return d_model - d_label; }
  i64 d_head() const { return d_model / n_heads; }
  TokenSpec token_spec() const { return TokenSpec{d_in, d_data(), d_label, 10000.0}; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Parameter tensor order inside ModelState::params. This order is also the
// checkpoint serialization order.
namespace pidx {
inline constexpr int lift_w = 0;   // d_in x d_data
inline constexpr int lift_b = 1;   // 1 x d_data
inline constexpr int t_lm = 2;     // 1 x d_label
inline constexpr int layer0 = 3;
inline constexpr int per_layer = 16;
// Per-layer offsets within a block of `per_layer` tensors.
enum layer_offset : int {
  ln1_g = 0, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo,
  ln2_g, ln2_b, mlp_w1, mlp_b1, mlp_w2, mlp_b2
};
inline int layer(const int l, const layer_offset off) { return layer0 + l * per_layer + off; }
inline int lnf_g(const ModelConfig& c) { return layer0 + static_cast<int>(c.n_layers) * per_layer; }
inline int lnf_b(const ModelConfig& c) { return lnf_g(c) + 1; }
inline int head_w(const ModelConfig& c) { return lnf_g(c) + 2; }
inline int head_b(const ModelConfig& c) { return lnf_g(c) + 3; }
inline int count(const ModelConfig& c) { return lnf_g(c) + 4; }
}  // namespace pidx

struct ModelState {
  ModelConfig cfg;
  std::vector<TensorT<double>> params;

  i64 param_scalars() const;
};

// Shapes of every parameter tensor in pidx order; shared by init_model and
// checkpoint io.
std::vector<std::vector<i64>> param_shapes(const ModelConfig& cfg);

// Fresh model: projection weights, the lift and T_LM are Normal(0, 0.02),
// biases zero, normalization gains one. Deterministic in cfg.seed.
ModelState init_model(const ModelConfig& cfg);

// Eager per-point loss; same math as the graph op.
double contrastive_loss(const TensorT<double>& z, const std::vector<i64>& labels, double margin);

// Arithmetic mean of per-task losses.
double batch_loss(const std::vector<double>& task_losses);

// Single forward pass in streaming (no-tape) mode: tokens -> n x d_out.
// Internally runs in a canonical row order so the result is exactly
// permutation-equivariant, then restores the caller's row order.
TensorT<double> forward(const ModelState& model, const TokenSet& tokens);

// Tokenize-and-forward without any parameter mutation.
TensorT<double> transform(const ModelState& model, const GcdTask& task);

// Builds tokens and the transformer on one tape; returns the node holding the
// n x d_out embeddings in the task's row order. param_ids must hold one leaf
// per ModelState parameter, in pidx order.
int build_transform_graph(GraphT<double>& g, const ModelConfig& cfg,
                          const std::vector<int>& param_ids, const GcdTask& task);

// build_transform_graph plus the contrastive loss; returns the scalar node.
int build_loss_graph(GraphT<double>& g, const ModelConfig& cfg, const std::vector<int>& param_ids,
                     const GcdTask& task);

struct TrainConfig {
  double lr = 1e-4;
  i64 batch_size = 16;
  i64 epochs = 80;
  i64 steps_per_epoch = 100;
  GenConfig gen;
  AdamWConfig opt;  // opt.lr is overwritten by lr
  i64 checkpoint_every = 0;  // steps; 0 = no periodic checkpoints
  std::string precision = "f64";  // "f64" or "f32"
  std::uint64_t seed = 0;

  i64 total_steps() const { return epochs * steps_per_epoch; }
  void validate() const;
};

struct TrainResult {
  std::vector<double> losses;      // one per step (batch mean)
  std::vector<double> wall_times;  // seconds since training start, one per step
};

struct Trainer {
  ModelState model;
  AdamWState opt;
  i64 step = 0;  // completed optimizer steps

  explicit Trainer(ModelState m) : model(std::move(m)) {}
};

// Runs steps [trainer.step, tcfg.total_steps()): every step draws batch_size
// fresh tasks with seeds mix_seed(tcfg.seed, step, b), accumulates gradients
// in task order, applies one AdamW step. on_step (optional) fires after each
// step with the 1-based step index. NaN loss aborts with step and task seed.
TrainResult train(Trainer& trainer, const TrainConfig& tcfg,
                  const std::function<void(i64)>& on_step = {});

}  // namespace gcdf
