#pragma once

#include <cstdint>
#include <vector>

#include "gcdf/synthgen.hpp"
#include "gcdf/tensor.hpp"

namespace gcdf {

struct ModelState;

// Token layout: data slice (affine lift of the point) first, label slice last.
struct TokenSpec {
  i64 d_in = 2;
  i64 d_data = 224;
  i64 d_label = 32;
  double base = 10000.0;

  i64 d_model() const { return d_data + d_label; }
  void validate() const;
};

struct TokenSet {
  TensorT<double> tokens;  // n x d_model
  std::vector<std::uint8_t> observed;
  std::vector<i64> labels;  // ground truth, loss only
};

// Raw sinusoid: component 2i = sin(y/base^(2i/d_label)), 2i+1 = cos(same).
// Takes a real y so the y=0 limit can be evaluated as pure math.
std::vector<double> sinusoid_embedding(double y, i64 d_label, double base);

// Checked variant for actual labels; y = 0 is reserved for the mask token.
std::vector<double> label_embedding(i64 y, i64 d_label, double base = 10000.0);

// n x d_label matrix with T_LE rows for observed points, zero rows otherwise,
// plus the n x 1 column marking unobserved rows. tokens = [lift | E + mask * T_LM]
// reconstructs the full label slice with gradient flow into T_LM.
TensorT<double> label_embedding_rows(const GcdTask& task, const TokenSpec& spec);
TensorT<double> mask_column(const GcdTask& task);

// Eager tokenization with the model's lift and masked-label token.
TokenSet build_tokens(const GcdTask& task, const TokenSpec& spec, const ModelState& model);

// Translate by the centroid, then divide every coordinate by the global max
// absolute value; degenerate (all points equal) input maps to all zeros.
TensorT<double> normalize_latent(const TensorT<double>& points);

}  // namespace gcdf
