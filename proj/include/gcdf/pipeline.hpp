#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gcdf/cluster_eval.hpp"
#include "gcdf/io.hpp"
#include "gcdf/runconfig.hpp"

namespace gcdf {

// Every command echoes its fully resolved config into out_dir/config.txt and
// writes only seed-deterministic bytes to report files (no timestamps).

struct SynthResult {
  std::vector<std::string> files;
};
SynthResult cmd_synth(const RunConfig& cfg, i64 count, const std::string& out_dir);

struct TrainCmdResult {
  std::string checkpoint_path;
  std::string loss_log_path;
  TrainResult result;
  i64 start_step = 0;
};
// Trains from scratch, or resumes from `resume_path` (config must match).
TrainCmdResult cmd_train(const RunConfig& cfg, const std::string& out_dir,
                         const std::string& resume_path = "");

struct StageScores {
  EvalReport eval;
  QualityReport quality;
};

struct PipelineResult {
  i64 k = 0;
  i64 n = 0;
  StageScores baseline;
  std::optional<StageScores> transformed;
  std::string report_txt_path;
  std::string report_json_path;
};

// Features -> reduction -> (optional) GCDformer transform -> k-means on the
// unobserved rows -> metrics for both the raw and transformed spaces.
// Empty checkpoint path (or eval.no_transform) degrades to baseline-only.
PipelineResult cmd_pipeline(const std::string& features_path, const std::string& checkpoint_path,
                            const RunConfig& cfg, const std::string& out_dir);

// Scores externally produced embeddings as they are, no reduction step.
PipelineResult cmd_eval(const std::string& embeddings_path, const RunConfig& cfg,
                        const std::string& out_dir);

struct DimredResult {
  std::string task_path;
  double kl_initial = 0.0;  // tsne only
  double kl_final = 0.0;    // tsne only
  std::vector<double> explained;  // pca only
};
DimredResult cmd_dimred(const std::string& features_path, const RunConfig& cfg,
                        const std::string& out_dir);

struct TransformResult {
  std::string task_path;
};
TransformResult cmd_transform(const std::string& task_path, const std::string& checkpoint_path,
                              const RunConfig& cfg, const std::string& out_dir);

}  // namespace gcdf
