#pragma once

#include <cstdint>
#include <string>

#include "gcdf/dimred.hpp"
#include "gcdf/gcdformer.hpp"
#include "gcdf/synthgen.hpp"

namespace gcdf {

struct EvalConfig {
  std::string method = "tsne";  // "tsne" or "pca"
  i64 kmeans_restarts = 10;
  i64 kl_bins = 20;
  double kl_smoothing = 1e-6;
  i64 labeled_per_class = 0;  // cap on observed rows per class; 0 = keep all
  bool no_transform = false;
  std::uint64_t seed = 0;

  void validate() const;
};

// The full run document: every tunable of every stage, each with its default.
struct RunConfig {
  GenConfig gen;
  ModelConfig model;
  TrainConfig train;  // train.gen is overwritten by gen in finalize()
  TsneConfig tsne;
  EvalConfig eval;
  i64 synth_count = 10;
  i64 threads = 1;  // 1 = reference mode; execution is sequential either way

  void finalize();  // propagate shared sections, then validate
};

// Parse a "key = value" document ('#' comments, blank lines allowed).
// Unknown keys are rejected. Missing keys keep their defaults.
RunConfig parse_runconfig(const std::string& text);

// Read and parse a config file; empty path yields the defaults.
RunConfig load_runconfig(const std::string& path);

// Canonical echo: every key explicit, doubles at full round-trip precision.
// parse_runconfig(echo_runconfig(c)) reproduces c exactly.
std::string echo_runconfig(const RunConfig& cfg);

// Point every stage's seed at one value (the --seed override).
void apply_seed_override(RunConfig& cfg, std::uint64_t seed);

}  // namespace gcdf
