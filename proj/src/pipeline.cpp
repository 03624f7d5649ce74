#include "gcdf/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "gcdf/errors.hpp"
#include "gcdf/plot.hpp"
#include "gcdf/rng.hpp"
#include "gcdf/tokenizer.hpp"

namespace fs = std::filesystem;

namespace gcdf {

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create output directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw io_error("cannot open " + path + " for writing");
  f << content;
  if (!f) throw io_error("write failed for " + path);
}

void echo_config(const RunConfig& cfg, const std::string& out_dir) {
  write_text(out_dir + "/config.txt", echo_runconfig(cfg));
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// Cap observed rows per class; the rest become unobserved (labels retained,
// they are only read again at scoring time).
void subsample_labeled(FeatureRecord& rec, i64 per_class, std::uint64_t seed) {
  std::map<i64, std::vector<std::size_t>> observed_rows;
  for (std::size_t i = 0; i < rec.observed.size(); ++i)
    if (rec.observed[i]) observed_rows[rec.labels[i]].push_back(i);
  Rng rng(mix_seed(seed, 0x6c706355ULL));
  for (auto& [label, rows] : observed_rows) {
    if (static_cast<i64>(rows.size()) <= per_class) continue;
    // Partial Fisher-Yates: the first per_class entries stay observed.
    for (i64 j = 0; j < per_class; ++j) {
      const i64 pick = rng.uniform_int(j, static_cast<i64>(rows.size()) - 1);
      std::swap(rows[static_cast<std::size_t>(j)], rows[static_cast<std::size_t>(pick)]);
    }
    for (std::size_t j = static_cast<std::size_t>(per_class); j < rows.size(); ++j)
      rec.observed[rows[j]] = 0;
  }
}

struct ReducedSpace {
  TensorT<double> embedding;  // normalized into [-1,1]^d
  double kl_initial = 0.0;
  double kl_final = 0.0;
  std::vector<double> explained;
};

ReducedSpace reduce_features(const FeatureRecord& rec, const RunConfig& cfg) {
  ReducedSpace out;
  if (cfg.eval.method == "tsne") {
    const TsneResult r = tsne_reduce(rec.features, cfg.tsne);
    out.embedding = r.embedding;
    out.kl_initial = r.kl_initial;
    out.kl_final = r.kl_final;
  } else {
    const PcaResult r = pca_reduce(rec.features, cfg.tsne.d_out);
    out.embedding = normalize_latent(r.embedding);
    out.explained = r.explained;
  }
  return out;
}

GcdTask task_from(const FeatureRecord& rec, TensorT<double> points) {
  GcdTask task;
  task.points = std::move(points);
  task.labels = rec.labels;
  task.observed = rec.observed;
  task.recompute_class_sets();
  return task;
}

std::vector<i64> unobserved_rows(const GcdTask& task) {
  std::vector<i64> rows;
  for (i64 i = 0; i < task.n(); ++i)
    if (!task.observed[static_cast<std::size_t>(i)]) rows.push_back(i);
  return rows;
}

i64 unobserved_class_count(const GcdTask& task) {
  std::set<i64> classes;
  for (i64 i = 0; i < task.n(); ++i)
    if (!task.observed[static_cast<std::size_t>(i)]) classes.insert(task.labels[static_cast<std::size_t>(i)]);
  return static_cast<i64>(classes.size());
}

StageScores score_space(const TensorT<double>& points, const GcdTask& task, i64 k,
                        const RunConfig& cfg) {
  const std::vector<i64> rows = unobserved_rows(task);
  TensorT<double> unobs({static_cast<i64>(rows.size()), points.cols()});
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (i64 c = 0; c < points.cols(); ++c) unobs.at(static_cast<i64>(r), c) = points.at(rows[r], c);

  const ClusterAssignment clusters =
      kmeans(unobs, k, static_cast<int>(cfg.eval.kmeans_restarts), cfg.eval.seed);
  StageScores out;
  out.eval = gcd_metrics(clusters.assignments, task);
  out.quality = cluster_quality(points, task.labels);
  return out;
}

void append_scores(std::ostringstream& txt, nlohmann::json& js, const std::string& prefix,
                   const StageScores& s) {
  auto put = [&](const std::string& key, double v) {
    txt << prefix << '.' << key << " = " << fmt_double(v) << '\n';
    js[prefix][key] = v;
  };
  auto put_opt = [&](const std::string& key, const std::optional<double>& v) {
    if (v) {
      put(key, *v);
    } else {
      txt << prefix << '.' << key << " = absent\n";
      js[prefix][key] = nullptr;
    }
  };
  put("acc_all", s.eval.acc_all);
  put_opt("acc_old", s.eval.acc_old);
  put_opt("acc_new", s.eval.acc_new);
  put("ari", s.eval.ari);
  put("nmi", s.eval.nmi);
  put("separation", s.quality.separation);
  put("spread", s.quality.spread);
  put("overlap", s.quality.overlap);
  put_opt("kl_alignment", s.quality.kl_alignment);
}

void write_reports(PipelineResult& result, const RunConfig& cfg, const std::string& out_dir) {
  std::ostringstream txt;
  nlohmann::json js;
  txt << "method = " << cfg.eval.method << '\n';
  txt << "n = " << result.n << '\n';
  txt << "k = " << result.k << '\n';
  txt << "n_all = " << result.baseline.eval.n_all << '\n';
  txt << "n_old = " << result.baseline.eval.n_old << '\n';
  txt << "n_new = " << result.baseline.eval.n_new << '\n';
  js["method"] = cfg.eval.method;
  js["n"] = result.n;
  js["k"] = result.k;
  js["n_all"] = result.baseline.eval.n_all;
  js["n_old"] = result.baseline.eval.n_old;
  js["n_new"] = result.baseline.eval.n_new;
  append_scores(txt, js, "baseline", result.baseline);
  if (result.transformed) append_scores(txt, js, "transformed", *result.transformed);

  result.report_txt_path = out_dir + "/report.txt";
  result.report_json_path = out_dir + "/report.json";
  write_text(result.report_txt_path, txt.str());
  write_text(result.report_json_path, js.dump(2) + "\n");
}

void plot_if_planar(const std::string& path, const TensorT<double>& points, const GcdTask& task) {
  if (points.cols() != 2) return;
  write_scatter_png(path, points, task.labels, task.observed);
}

}  // namespace

SynthResult cmd_synth(const RunConfig& cfg, i64 count, const std::string& out_dir) {
  if (count < 1) throw contract_error("synth count must be positive");
  ensure_dir(out_dir);
  echo_config(cfg, out_dir);
  SynthResult out;
  for (i64 i = 0; i < count; ++i) {
    GenConfig g = cfg.gen;
    g.seed = mix_seed(cfg.gen.seed, 0x746153ULL, static_cast<std::uint64_t>(i));
    const GcdTask task = generate_task(g);
    std::ostringstream name;
    name << out_dir << "/task_" << std::setw(4) << std::setfill('0') << i << ".gcdt";
    write_gcdt(name.str(), task);
    out.files.push_back(name.str());
  }
  return out;
}

TrainCmdResult cmd_train(const RunConfig& cfg, const std::string& out_dir,
                         const std::string& resume_path) {
  ensure_dir(out_dir);
  echo_config(cfg, out_dir);

  TrainCmdResult out;
  Trainer trainer = resume_path.empty() ? Trainer(init_model(cfg.model)) : load_checkpoint(resume_path);
  if (!resume_path.empty() && !(trainer.model.cfg == cfg.model))
    throw config_error("checkpoint model config does not match the run config; refusing to resume");
  out.start_step = trainer.step;

  out.checkpoint_path = out_dir + "/checkpoint.gcdfc";
  out.loss_log_path = out_dir + "/loss.txt";

  const i64 every = cfg.train.checkpoint_every;
  auto on_step = [&](i64 step) {
    if (every > 0 && step % every == 0 && step < cfg.train.total_steps()) {
      std::ostringstream name;
      name << out_dir << "/checkpoint_step" << step << ".gcdfc";
      save_checkpoint(name.str(), trainer);
    }
  };
  out.result = train(trainer, cfg.train, on_step);

  std::ofstream log(out.loss_log_path, resume_path.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw io_error("cannot open " + out.loss_log_path + " for writing");
  for (std::size_t i = 0; i < out.result.losses.size(); ++i)
    log << (out.start_step + static_cast<i64>(i) + 1) << ' ' << fmt_double(out.result.losses[i])
        << ' ' << fmt_double(out.result.wall_times[i]) << '\n';
  log.close();

  save_checkpoint(out.checkpoint_path, trainer);
  return out;
}

PipelineResult cmd_pipeline(const std::string& features_path, const std::string& checkpoint_path,
                            const RunConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  echo_config(cfg, out_dir);

  FeatureRecord rec = read_gcdv(features_path);
  if (cfg.eval.labeled_per_class > 0) subsample_labeled(rec, cfg.eval.labeled_per_class, cfg.eval.seed);

  const ReducedSpace reduced = reduce_features(rec, cfg);
  GcdTask task = task_from(rec, reduced.embedding);
  write_gcdt(out_dir + "/latent.gcdt", task);
  plot_if_planar(out_dir + "/before.png", task.points, task);

  PipelineResult result;
  result.n = task.n();
  result.k = unobserved_class_count(task);
  if (result.k < 2)
    throw contract_error("pipeline needs at least 2 classes among unobserved rows, got " +
                         std::to_string(result.k));
  result.baseline = score_space(task.points, task, result.k, cfg);

  if (!checkpoint_path.empty() && !cfg.eval.no_transform) {
    const Trainer trainer = load_checkpoint(checkpoint_path);
    if (trainer.model.cfg.d_in != task.dim())
      throw config_error("checkpoint expects " + std::to_string(trainer.model.cfg.d_in) +
                         "-D latent points, pipeline produced " + std::to_string(task.dim()) + "-D");
    const TensorT<double> z = normalize_latent(transform(trainer.model, task));
    GcdTask transformed_task = task;
    transformed_task.points = z;
    write_gcdt(out_dir + "/transformed.gcdt", transformed_task);
    plot_if_planar(out_dir + "/after.png", z, task);
    result.transformed = score_space(z, task, result.k, cfg);
    if (z.cols() == 2 && task.points.cols() == 2)
      result.transformed->quality.kl_alignment = kl_alignment(
          z, task.points, static_cast<int>(cfg.eval.kl_bins), cfg.eval.kl_smoothing);
  }

  write_reports(result, cfg, out_dir);
  return result;
}

PipelineResult cmd_eval(const std::string& embeddings_path, const RunConfig& cfg,
                        const std::string& out_dir) {
  ensure_dir(out_dir);
  echo_config(cfg, out_dir);

  const FeatureRecord rec = read_gcdv(embeddings_path);
  GcdTask task = task_from(rec, rec.features.values);

  PipelineResult result;
  result.n = task.n();
  result.k = unobserved_class_count(task);
  if (result.k < 2)
    throw contract_error("eval needs at least 2 classes among unobserved rows, got " +
                         std::to_string(result.k));
  result.baseline = score_space(task.points, task, result.k, cfg);
  if (task.dim() == 2) {
    const TensorT<double> boxed = normalize_latent(task.points);
    plot_if_planar(out_dir + "/points.png", boxed, task);
  }
  write_reports(result, cfg, out_dir);
  return result;
}

DimredResult cmd_dimred(const std::string& features_path, const RunConfig& cfg,
                        const std::string& out_dir) {
  ensure_dir(out_dir);
  echo_config(cfg, out_dir);

  const FeatureRecord rec = read_gcdv(features_path);
  const ReducedSpace reduced = reduce_features(rec, cfg);
  const GcdTask task = task_from(rec, reduced.embedding);

  DimredResult out;
  out.task_path = out_dir + "/latent.gcdt";
  write_gcdt(out.task_path, task);
  plot_if_planar(out_dir + "/latent.png", task.points, task);

  std::ostringstream txt;
  txt << "method = " << cfg.eval.method << '\n';
  txt << "n = " << task.n() << '\n';
  txt << "d_out = " << task.dim() << '\n';
  if (cfg.eval.method == "tsne") {
    out.kl_initial = reduced.kl_initial;
    out.kl_final = reduced.kl_final;
    txt << "kl_initial = " << fmt_double(reduced.kl_initial) << '\n';
    txt << "kl_final = " << fmt_double(reduced.kl_final) << '\n';
  } else {
    out.explained = reduced.explained;
    for (std::size_t i = 0; i < reduced.explained.size(); ++i)
      txt << "explained_" << i << " = " << fmt_double(reduced.explained[i]) << '\n';
  }
  write_text(out_dir + "/dimred.txt", txt.str());
  return out;
}

TransformResult cmd_transform(const std::string& task_path, const std::string& checkpoint_path,
                              const RunConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  echo_config(cfg, out_dir);

  const GcdTask task = read_gcdt(task_path);
  const Trainer trainer = load_checkpoint(checkpoint_path);
  if (trainer.model.cfg.d_in != task.dim())
    throw config_error("checkpoint expects " + std::to_string(trainer.model.cfg.d_in) +
                       "-D latent points, task file holds " + std::to_string(task.dim()) + "-D");

  const TensorT<double> z = normalize_latent(transform(trainer.model, task));
  GcdTask transformed_task = task;
  transformed_task.points = z;

  TransformResult out;
  out.task_path = out_dir + "/transformed.gcdt";
  write_gcdt(out.task_path, transformed_task);
  plot_if_planar(out_dir + "/before.png", task.points, task);
  plot_if_planar(out_dir + "/after.png", z, task);
  return out;
}

}  // namespace gcdf
