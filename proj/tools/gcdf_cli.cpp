#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "gcdf/errors.hpp"
#include "gcdf/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<gcdf::i64> threads;
  std::string out_dir = "out";
  std::optional<gcdf::i64> labeled_per_class;
  std::optional<std::string> method;
  bool no_transform = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Run config file (key = value lines)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "Override every stage seed");
  cmd->add_option("--threads", args.threads, "Worker threads (1 = reference mode)");
  cmd->add_option("--out", args.out_dir, "Output directory")->capture_default_str();
  cmd->add_option("--labeled-per-class", args.labeled_per_class,
                  "Cap observed rows per class (0 = keep all)");
  cmd->add_option("--method", args.method, "Reduction method")
      ->check(CLI::IsMember({"tsne", "pca"}));
  cmd->add_flag("--no-transform", args.no_transform, "Skip the learned transform stage");
}

gcdf::RunConfig resolve(const CommonArgs& args) {
  gcdf::RunConfig cfg = gcdf::load_runconfig(args.config_path);
  if (args.seed) gcdf::apply_seed_override(cfg, *args.seed);
  if (args.threads) cfg.threads = *args.threads;
  if (args.labeled_per_class) cfg.eval.labeled_per_class = *args.labeled_per_class;
  if (args.method) cfg.eval.method = *args.method;
  if (args.no_transform) cfg.eval.no_transform = true;
  cfg.finalize();
  return cfg;
}

std::string fmt_opt(const std::optional<double>& v) {
  return v ? std::to_string(*v) : std::string("absent");
}

void print_stage(const char* name, const gcdf::StageScores& s) {
  std::cout << name << ": all " << s.eval.acc_all << "  old " << fmt_opt(s.eval.acc_old)
            << "  new " << fmt_opt(s.eval.acc_new) << "  ari " << s.eval.ari << "  nmi "
            << s.eval.nmi << '\n';
}

void print_report(const gcdf::PipelineResult& r) {
  std::cout << "n " << r.n << "  k " << r.k << '\n';
  print_stage("baseline   ", r.baseline);
  if (r.transformed) print_stage("transformed", *r.transformed);
  std::cout << "report: " << r.report_txt_path << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OmniGCD latent-space pipeline"};
  app.require_subcommand(1);

  CommonArgs synth_args, train_args, pipe_args, eval_args, dimred_args, transform_args;
  gcdf::i64 synth_count = -1;  // -1 = take synth.count from the config
  std::string resume_path, features_path, checkpoint_path, embeddings_path, task_path;

  CLI::App* synth = app.add_subcommand("synth", "Write synthetic GCD task files");
  synth->add_option("count", synth_count, "Number of tasks (default: config synth.count)");
  add_common(synth, synth_args);

  CLI::App* train = app.add_subcommand("train", "Train the set transformer on fresh tasks");
  train->add_option("--resume", resume_path, "Checkpoint to continue from")
      ->check(CLI::ExistingFile);
  add_common(train, train_args);

  CLI::App* pipe = app.add_subcommand("pipeline", "Reduce, transform, cluster, and score features");
  pipe->add_option("features", features_path, "GCDV feature file")
      ->required()
      ->check(CLI::ExistingFile);
  pipe->add_option("checkpoint", checkpoint_path, "Model checkpoint (omit for baseline only)")
      ->check(CLI::ExistingFile);
  add_common(pipe, pipe_args);

  CLI::App* eval = app.add_subcommand("eval", "Score externally produced embeddings");
  eval->add_option("embeddings", embeddings_path, "GCDV embedding file")
      ->required()
      ->check(CLI::ExistingFile);
  add_common(eval, eval_args);

  CLI::App* dimred = app.add_subcommand("dimred", "Reduce features to the latent space only");
  dimred->add_option("features", features_path, "GCDV feature file")
      ->required()
      ->check(CLI::ExistingFile);
  add_common(dimred, dimred_args);

  CLI::App* transform = app.add_subcommand("transform", "Apply a trained model to a task file");
  transform->add_option("task", task_path, "GCDT task file")->required()->check(CLI::ExistingFile);
  transform->add_option("checkpoint", checkpoint_path, "Model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  add_common(transform, transform_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const gcdf::RunConfig cfg = resolve(synth_args);
      const gcdf::i64 count = synth_count > 0 ? synth_count : cfg.synth_count;
      const gcdf::SynthResult r = gcdf::cmd_synth(cfg, count, synth_args.out_dir);
      std::cout << "wrote " << r.files.size() << " task files to " << synth_args.out_dir << '\n';
    } else if (train->parsed()) {
      const gcdf::RunConfig cfg = resolve(train_args);
      const gcdf::TrainCmdResult r = gcdf::cmd_train(cfg, train_args.out_dir, resume_path);
      std::cout << "trained steps " << r.start_step + 1 << ".." << cfg.train.total_steps()
                << "; checkpoint: " << r.checkpoint_path << '\n';
      if (!r.result.losses.empty())
        std::cout << "final loss " << r.result.losses.back() << '\n';
    } else if (pipe->parsed()) {
      const gcdf::RunConfig cfg = resolve(pipe_args);
      print_report(gcdf::cmd_pipeline(features_path, checkpoint_path, cfg, pipe_args.out_dir));
    } else if (eval->parsed()) {
      const gcdf::RunConfig cfg = resolve(eval_args);
      print_report(gcdf::cmd_eval(embeddings_path, cfg, eval_args.out_dir));
    } else if (dimred->parsed()) {
      const gcdf::RunConfig cfg = resolve(dimred_args);
      const gcdf::DimredResult r = gcdf::cmd_dimred(features_path, cfg, dimred_args.out_dir);
      std::cout << "latent task: " << r.task_path << '\n';
      if (cfg.eval.method == "tsne")
        std::cout << "kl " << r.kl_initial << " -> " << r.kl_final << '\n';
    } else if (transform->parsed()) {
      const gcdf::RunConfig cfg = resolve(transform_args);
      const gcdf::TransformResult r =
          gcdf::cmd_transform(task_path, checkpoint_path, cfg, transform_args.out_dir);
      std::cout << "transformed task: " << r.task_path << '\n';
    }
  } catch (const gcdf::error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
