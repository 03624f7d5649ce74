#include "gcdf/runconfig.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "gcdf/errors.hpp"

namespace gcdf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

i64 to_i64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  i64 out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    throw config_error(key + ": not an integer: \"" + v + "\"");
  }
  if (used != v.size()) throw config_error(key + ": not an integer: \"" + v + "\"");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    throw config_error(key + ": not an unsigned integer: \"" + v + "\"");
  }
  if (used != v.size()) throw config_error(key + ": not an unsigned integer: \"" + v + "\"");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw config_error(key + ": not a number: \"" + v + "\"");
  }
  if (used != v.size()) throw config_error(key + ": not a number: \"" + v + "\"");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw config_error(key + ": not a boolean: \"" + v + "\"");
}

std::string fmt(i64 v) { return std::to_string(v); }
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Binding {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define GCDF_BIND_I64(key, field) \
  {key, [](RunConfig& c, const std::string& v) { c.field = to_i64(key, v); }, \
   [](const RunConfig& c) { return fmt(c.field); }}
#define GCDF_BIND_U64(key, field) \
  {key, [](RunConfig& c, const std::string& v) { c.field = to_u64(key, v); }, \
   [](const RunConfig& c) { return fmt(c.field); }}
#define GCDF_BIND_DBL(key, field) \
  {key, [](RunConfig& c, const std::string& v) { c.field = to_double(key, v); }, \
   [](const RunConfig& c) { return fmt(c.field); }}
#define GCDF_BIND_BOOL(key, field) \
  {key, [](RunConfig& c, const std::string& v) { c.field = to_bool(key, v); }, \
   [](const RunConfig& c) { return fmt(c.field); }}
#define GCDF_BIND_STR(key, field) \
  {key, [](RunConfig& c, const std::string& v) { c.field = v; }, \
   [](const RunConfig& c) { return c.field; }}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = {
      GCDF_BIND_I64("gen.d", gen.d),
      GCDF_BIND_I64("gen.min_clusters", gen.min_clusters),
      GCDF_BIND_I64("gen.max_clusters", gen.max_clusters),
      GCDF_BIND_I64("gen.max_points", gen.max_points),
      GCDF_BIND_I64("gen.min_points_per_cluster", gen.min_points_per_cluster),
      GCDF_BIND_DBL("gen.scale_min", gen.scale_range.first),
      GCDF_BIND_DBL("gen.scale_max", gen.scale_range.second),
      GCDF_BIND_DBL("gen.point_mask_min", gen.point_mask_range.first),
      GCDF_BIND_DBL("gen.point_mask_max", gen.point_mask_range.second),
      GCDF_BIND_DBL("gen.cluster_mask_min", gen.cluster_mask_range.first),
      GCDF_BIND_DBL("gen.cluster_mask_max", gen.cluster_mask_range.second),
      GCDF_BIND_U64("gen.seed", gen.seed),
      GCDF_BIND_I64("synth.count", synth_count),
      GCDF_BIND_I64("model.n_layers", model.n_layers),
      GCDF_BIND_I64("model.n_heads", model.n_heads),
      GCDF_BIND_I64("model.d_model", model.d_model),
      GCDF_BIND_I64("model.d_label", model.d_label),
      GCDF_BIND_I64("model.d_in", model.d_in),
      GCDF_BIND_I64("model.d_out", model.d_out),
      GCDF_BIND_I64("model.mlp_ratio", model.mlp_ratio),
      GCDF_BIND_DBL("model.margin", model.margin),
      GCDF_BIND_U64("model.seed", model.seed),
      GCDF_BIND_DBL("train.lr", train.lr),
      GCDF_BIND_I64("train.batch_size", train.batch_size),
      GCDF_BIND_I64("train.epochs", train.epochs),
      GCDF_BIND_I64("train.steps_per_epoch", train.steps_per_epoch),
      GCDF_BIND_I64("train.checkpoint_every", train.checkpoint_every),
      GCDF_BIND_STR("train.precision", train.precision),
      GCDF_BIND_U64("train.seed", train.seed),
      GCDF_BIND_DBL("train.beta1", train.opt.beta1),
      GCDF_BIND_DBL("train.beta2", train.opt.beta2),
      GCDF_BIND_DBL("train.eps", train.opt.eps),
      GCDF_BIND_DBL("train.weight_decay", train.opt.weight_decay),
      GCDF_BIND_I64("tsne.d_out", tsne.d_out),
      GCDF_BIND_DBL("tsne.perplexity", tsne.perplexity),
      {"tsne.iterations",
       [](RunConfig& c, const std::string& v) { c.tsne.iterations = static_cast<int>(to_i64("tsne.iterations", v)); },
       [](const RunConfig& c) { return fmt(static_cast<i64>(c.tsne.iterations)); }},
      GCDF_BIND_DBL("tsne.early_exaggeration", tsne.early_exaggeration),
      {"tsne.exaggeration_iters",
       [](RunConfig& c, const std::string& v) {
         c.tsne.exaggeration_iters = static_cast<int>(to_i64("tsne.exaggeration_iters", v));
       },
       [](const RunConfig& c) { return fmt(static_cast<i64>(c.tsne.exaggeration_iters)); }},
      GCDF_BIND_DBL("tsne.learning_rate", tsne.learning_rate),
      GCDF_BIND_DBL("tsne.momentum_start", tsne.momentum_start),
      GCDF_BIND_DBL("tsne.momentum_final", tsne.momentum_final),
      {"tsne.momentum_switch_iter",
       [](RunConfig& c, const std::string& v) {
         c.tsne.momentum_switch_iter = static_cast<int>(to_i64("tsne.momentum_switch_iter", v));
       },
       [](const RunConfig& c) { return fmt(static_cast<i64>(c.tsne.momentum_switch_iter)); }},
      GCDF_BIND_BOOL("tsne.l2_normalize", tsne.l2_normalize),
      GCDF_BIND_U64("tsne.seed", tsne.seed),
      GCDF_BIND_STR("eval.method", eval.method),
      GCDF_BIND_I64("eval.kmeans_restarts", eval.kmeans_restarts),
      GCDF_BIND_I64("eval.kl_bins", eval.kl_bins),
      GCDF_BIND_DBL("eval.kl_smoothing", eval.kl_smoothing),
      GCDF_BIND_I64("eval.labeled_per_class", eval.labeled_per_class),
      GCDF_BIND_BOOL("eval.no_transform", eval.no_transform),
      GCDF_BIND_U64("eval.seed", eval.seed),
      GCDF_BIND_I64("threads", threads),
  };
  return table;
}

#undef GCDF_BIND_I64
#undef GCDF_BIND_U64
#undef GCDF_BIND_DBL
#undef GCDF_BIND_BOOL
#undef GCDF_BIND_STR

}  // namespace

void EvalConfig::validate() const {
  if (method != "tsne" && method != "pca")
    throw config_error("eval.method must be \"tsne\" or \"pca\", got \"" + method + "\"");
  if (kmeans_restarts < 1) throw config_error("eval.kmeans_restarts must be positive");
  if (kl_bins < 1) throw config_error("eval.kl_bins must be positive");
  if (!(kl_smoothing > 0)) throw config_error("eval.kl_smoothing must be positive");
  if (labeled_per_class < 0) throw config_error("eval.labeled_per_class must be non-negative");
}

void RunConfig::finalize() {
  train.gen = gen;
  gen.validate();
  model.validate();
  train.validate();
  eval.validate();
  if (synth_count < 1) throw config_error("synth.count must be positive");
  if (threads < 1) throw config_error("threads must be positive");
}

RunConfig parse_runconfig(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + std::to_string(line_no) + ": expected \"key = value\", got \"" +
                         stripped + "\"");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    bool found = false;
    for (const Binding& b : bindings()) {
      if (key == b.key) {
        b.set(cfg, value);
        found = true;
        break;
      }
    }
    if (!found) throw config_error("unknown config key \"" + key + "\"");
  }
  cfg.finalize();
  return cfg;
}

RunConfig load_runconfig(const std::string& path) {
  if (path.empty()) {
    RunConfig cfg;
    cfg.finalize();
    return cfg;
  }
  std::ifstream f(path);
  if (!f) throw io_error("cannot open config file " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return parse_runconfig(os.str());
}

std::string echo_runconfig(const RunConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const Binding& b : bindings()) {
    const std::string key(b.key);
    const std::string prefix = key.substr(0, key.find('.'));
    if (prefix != section) {
      if (!section.empty()) os << '\n';
      section = prefix;
    }
    os << key << " = " << b.get(cfg) << '\n';
  }
  return os.str();
}

void apply_seed_override(RunConfig& cfg, std::uint64_t seed) {
  cfg.gen.seed = seed;
  cfg.model.seed = seed;
  cfg.train.seed = seed;
  cfg.tsne.seed = seed;
  cfg.eval.seed = seed;
  cfg.train.gen.seed = seed;
}

}  // namespace gcdf
