#include "gcdf/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gcdf/errors.hpp"

namespace gcdf {

namespace {

// Little-endian encoding via explicit byte shifts, independent of host order.
void put_bytes(std::string& out, std::uint64_t v, int n_bytes) {
  for (int i = 0; i < n_bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  ByteReader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  std::uint64_t take(int n_bytes) {
    if (pos_ + static_cast<std::size_t>(n_bytes) > data_.size())
      throw io_error(path_ + ": truncated, expected " + std::to_string(pos_ + static_cast<std::size_t>(n_bytes)) +
                     " bytes, got " + std::to_string(data_.size()));
    std::uint64_t v = 0;
    for (int i = 0; i < n_bytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    pos_ += static_cast<std::size_t>(n_bytes);
    return v;
  }

  std::string take_raw(std::size_t n) {
    if (pos_ + n > data_.size())
      throw io_error(path_ + ": truncated, expected " + std::to_string(pos_ + n) + " bytes, got " +
                     std::to_string(data_.size()));
    std::string out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  void expect_magic(const std::string& magic) {
    const std::string got = take_raw(magic.size());
    if (got != magic)
      throw io_error(path_ + ": bad magic, expected \"" + magic + "\", got \"" + got + "\"");
  }

  void expect_version(std::uint16_t want) {
    const auto got = static_cast<std::uint16_t>(take(2));
    if (got != want)
      throw io_error(path_ + ": unsupported version " + std::to_string(got) + ", expected " +
                     std::to_string(want));
  }

  bool exhausted() const { return pos_ == data_.size(); }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return data_.size(); }
  const std::string& path() const { return path_; }

 private:
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw io_error("write failed for " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return std::move(os).str();
}

void check_trailing(const ByteReader& r) {
  if (!r.exhausted())
    throw io_error(r.path() + ": trailing data, expected " + std::to_string(r.pos()) +
                   " bytes, got " + std::to_string(r.size()));
}

void put_f64(std::string& out, double v) { put_bytes(out, std::bit_cast<std::uint64_t>(v), 8); }
void put_f32(std::string& out, float v) { put_bytes(out, std::bit_cast<std::uint32_t>(v), 4); }

}  // namespace

void write_gcdv(const std::string& path, const FeatureRecord& rec) {
  const i64 n = rec.features.n(), d = rec.features.dim();
  if (rec.labels.size() != static_cast<std::size_t>(n) || rec.observed.size() != static_cast<std::size_t>(n))
    throw contract_error("feature record: labels/observed must cover all rows");

  std::string out;
  out += "GCDV";
  put_bytes(out, kGcdvVersion, 2);
  put_bytes(out, static_cast<std::uint64_t>(n), 4);
  put_bytes(out, static_cast<std::uint64_t>(d), 4);
  for (double v : rec.features.values.data) put_f32(out, static_cast<float>(v));
  write_file(path, out);

  std::ostringstream side;
  for (i64 i = 0; i < n; ++i)
    side << rec.labels[static_cast<std::size_t>(i)] << ' '
         << static_cast<int>(rec.observed[static_cast<std::size_t>(i)] ? 1 : 0) << '\n';
  write_file(path + ".labels", side.str());
}

FeatureRecord read_gcdv(const std::string& path) {
  ByteReader r(read_file(path), path);
  r.expect_magic("GCDV");
  r.expect_version(kGcdvVersion);
  const auto n = static_cast<i64>(r.take(4));
  const auto d = static_cast<i64>(r.take(4));
  if (n < 1 || d < 1) throw io_error(path + ": empty feature matrix");

  FeatureRecord rec;
  rec.features.values = TensorT<double>({n, d});
  rec.features.provenance = path;
  for (double& v : rec.features.values.data)
    v = static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(r.take(4))));
  check_trailing(r);

  const std::string side_path = path + ".labels";
  std::istringstream side(read_file(side_path));
  std::string line;
  while (std::getline(side, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    i64 label = 0;
    int observed = 0;
    if (!(ls >> label >> observed) || (observed != 0 && observed != 1))
      throw io_error(side_path + ": bad sidecar line \"" + line + "\"");
    rec.labels.push_back(label);
    rec.observed.push_back(static_cast<std::uint8_t>(observed));
  }
  if (rec.labels.size() != static_cast<std::size_t>(n))
    throw io_error(side_path + ": sidecar has " + std::to_string(rec.labels.size()) +
                   " rows, feature file has " + std::to_string(n));
  return rec;
}

void write_gcdt(const std::string& path, const GcdTask& task) {
  const i64 n = task.n(), d = task.dim();
  if (task.labels.size() != static_cast<std::size_t>(n) || task.observed.size() != static_cast<std::size_t>(n))
    throw contract_error("task: labels/observed must cover all rows");

  std::string out;
  out += "GCDT";
  put_bytes(out, kGcdtVersion, 2);
  put_bytes(out, static_cast<std::uint64_t>(n), 4);
  put_bytes(out, static_cast<std::uint64_t>(d), 4);
  for (double v : task.points.data) put_f64(out, v);
  for (i64 i = 0; i < n; ++i) {
    put_bytes(out, static_cast<std::uint64_t>(task.labels[static_cast<std::size_t>(i)]), 8);
    put_bytes(out, task.observed[static_cast<std::size_t>(i)] ? 1 : 0, 1);
  }
  write_file(path, out);
}

GcdTask read_gcdt(const std::string& path) {
  ByteReader r(read_file(path), path);
  r.expect_magic("GCDT");
  r.expect_version(kGcdtVersion);
  const auto n = static_cast<i64>(r.take(4));
  const auto d = static_cast<i64>(r.take(4));
  if (n < 1 || d < 1) throw io_error(path + ": empty task");

  GcdTask task;
  task.points = TensorT<double>({n, d});
  for (double& v : task.points.data) v = std::bit_cast<double>(r.take(8));
  for (i64 i = 0; i < n; ++i) {
    task.labels.push_back(static_cast<i64>(r.take(8)));
    const std::uint64_t obs = r.take(1);
    if (obs > 1) throw io_error(path + ": bad observed flag " + std::to_string(obs));
    task.observed.push_back(static_cast<std::uint8_t>(obs));
  }
  check_trailing(r);
  task.recompute_class_sets();
  return task;
}

void save_checkpoint(const std::string& path, const Trainer& trainer, bool with_optimizer) {
  const ModelConfig& cfg = trainer.model.cfg;
  std::string out;
  out += "GCDF-CKPT";
  put_bytes(out, kCheckpointVersion, 2);
  for (i64 v : {cfg.n_layers, cfg.n_heads, cfg.d_model, cfg.d_label, cfg.d_in, cfg.d_out, cfg.mlp_ratio})
    put_bytes(out, static_cast<std::uint64_t>(v), 8);
  put_f64(out, cfg.margin);
  put_bytes(out, cfg.seed, 8);
  put_bytes(out, static_cast<std::uint64_t>(trainer.step), 8);

  put_bytes(out, static_cast<std::uint64_t>(trainer.model.params.size()), 4);
  for (const auto& p : trainer.model.params) {
    put_bytes(out, static_cast<std::uint64_t>(p.shape.size()), 4);
    for (i64 e : p.shape) put_bytes(out, static_cast<std::uint64_t>(e), 4);
    for (double v : p.data) put_f64(out, v);
  }

  const bool has_opt = with_optimizer && !trainer.opt.m.empty();
  put_bytes(out, has_opt ? 1 : 0, 1);
  if (has_opt) {
    const AdamWConfig& oc = trainer.opt.cfg;
    for (double v : {oc.lr, oc.beta1, oc.beta2, oc.eps, oc.weight_decay}) put_f64(out, v);
    put_bytes(out, static_cast<std::uint64_t>(trainer.opt.step), 8);
    for (const auto& m : trainer.opt.m)
      for (double v : m) put_f64(out, v);
    for (const auto& v : trainer.opt.v)
      for (double x : v) put_f64(out, x);
  }
  write_file(path, out);
}

Trainer load_checkpoint(const std::string& path) {
  ByteReader r(read_file(path), path);
  r.expect_magic("GCDF-CKPT");
  r.expect_version(kCheckpointVersion);

  ModelConfig cfg;
  cfg.n_layers = static_cast<i64>(r.take(8));
  cfg.n_heads = static_cast<i64>(r.take(8));
  cfg.d_model = static_cast<i64>(r.take(8));
  cfg.d_label = static_cast<i64>(r.take(8));
  cfg.d_in = static_cast<i64>(r.take(8));
  cfg.d_out = static_cast<i64>(r.take(8));
  cfg.mlp_ratio = static_cast<i64>(r.take(8));
  cfg.margin = std::bit_cast<double>(r.take(8));
  cfg.seed = r.take(8);
  cfg.validate();
  const auto step = static_cast<i64>(r.take(8));

  const auto n_params = static_cast<std::size_t>(r.take(4));
  const std::vector<std::vector<i64>> want_shapes = param_shapes(cfg);
  if (n_params != want_shapes.size())
    throw io_error(path + ": expected " + std::to_string(want_shapes.size()) +
                   " parameter tensors, got " + std::to_string(n_params));

  ModelState model;
  model.cfg = cfg;
  for (std::size_t p = 0; p < n_params; ++p) {
    const auto rank = static_cast<std::size_t>(r.take(4));
    std::vector<i64> shape;
    for (std::size_t i = 0; i < rank; ++i) shape.push_back(static_cast<i64>(r.take(4)));
    if (shape != want_shapes[p])
      throw io_error(path + ": parameter " + std::to_string(p) + " has unexpected shape");
    TensorT<double> t(shape);
    for (double& v : t.data) v = std::bit_cast<double>(r.take(8));
    t.requires_grad = true;
    model.params.push_back(std::move(t));
  }

  Trainer trainer(std::move(model));
  trainer.step = step;
  if (r.take(1) == 1) {
    AdamWConfig oc;
    oc.lr = std::bit_cast<double>(r.take(8));
    oc.beta1 = std::bit_cast<double>(r.take(8));
    oc.beta2 = std::bit_cast<double>(r.take(8));
    oc.eps = std::bit_cast<double>(r.take(8));
    oc.weight_decay = std::bit_cast<double>(r.take(8));
    trainer.opt.cfg = oc;
    trainer.opt.step = static_cast<i64>(r.take(8));
    for (const auto& p : trainer.model.params) {
      std::vector<double> m(p.data.size());
      for (double& v : m) v = std::bit_cast<double>(r.take(8));
      trainer.opt.m.push_back(std::move(m));
    }
    for (const auto& p : trainer.model.params) {
      std::vector<double> v(p.data.size());
      for (double& x : v) x = std::bit_cast<double>(r.take(8));
      trainer.opt.v.push_back(std::move(v));
    }
  }
  check_trailing(r);
  return trainer;
}

}  // namespace gcdf
