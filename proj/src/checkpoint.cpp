#include "gsfda/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <vector>

#include "gsfda/errors.hpp"

namespace gsfda {

namespace {

constexpr char kMagic[8] = {'G', 'S', 'F', 'D', 'A', 'C', 'K', 'P'};

void put_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw IoError("truncated checkpoint: " + path);
  return v;
}
std::uint64_t get_u64(std::ifstream& in, const std::string& path) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw IoError("truncated checkpoint: " + path);
  return v;
}

using TensorMap = std::map<std::string, Matrix>;

void write_all(const std::string& path, const TensorMap& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, m.rows());
    put_u64(out, m.cols());
    out.write(reinterpret_cast<const char*>(m.data().data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed: " + path);
}

TensorMap read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, 8) != 0)
    throw ConfigError("not a checkpoint file: " + path);
  std::uint32_t version = get_u32(in, path);
  if (version != kCheckpointVersion)
    throw ConfigError("unsupported checkpoint version " +
                      std::to_string(version));
  std::uint32_t count = get_u32(in, path);
  TensorMap tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t name_len = get_u32(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len))
      throw IoError("truncated checkpoint: " + path);
    std::uint64_t rows = get_u64(in, path);
    std::uint64_t cols = get_u64(in, path);
    Matrix m(rows, cols);
    if (!in.read(reinterpret_cast<char*>(m.data().data()),
                 static_cast<std::streamsize>(rows * cols * sizeof(double))))
      throw IoError("truncated checkpoint: " + path);
    tensors.emplace(std::move(name), std::move(m));
  }
  return tensors;
}

const Matrix& need(const TensorMap& t, const std::string& name) {
  auto it = t.find(name);
  if (it == t.end()) throw ConfigError("checkpoint missing tensor: " + name);
  return it->second;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelState& model,
                     const DomainClassifier* dc) {
  TensorMap t;
  const NetworkDims& d = model.params.dims;
  t["dims"] = Matrix(1, 4, {static_cast<double>(d.input_dim),
                            static_cast<double>(d.hidden),
                            static_cast<double>(d.feature),
                            static_cast<double>(d.classes)});
  for (const auto& name : NetworkParams::param_names())
    t[name] = model.params.by_name(name);
  t["bn_mean"] = model.params.bn_mean;
  t["bn_var"] = model.params.bn_var;
  t["src_bn_mean"] = model.src_bn_mean;
  t["src_bn_var"] = model.src_bn_var;
  t["n_domains"] =
      Matrix(1, 1, {static_cast<double>(model.masks.n_domains())});
  for (std::size_t m = 0; m < model.masks.n_domains(); ++m) {
    const DomainAttention& att = model.masks.attentions[m];
    std::string base = "att" + std::to_string(m);
    t[base + ".e"] = Matrix::row(att.e);
    t[base + ".meta"] = Matrix(1, 3, {static_cast<double>(att.domain_id),
                                      att.scale, att.frozen ? 1.0 : 0.0});
  }
  if (dc) {
    t["dc.meta"] = Matrix(1, 3, {static_cast<double>(dc->in_dim),
                                 static_cast<double>(dc->hidden),
                                 static_cast<double>(dc->n_domains)});
    t["dc.W1"] = dc->W1;
    t["dc.b1"] = dc->b1;
    t["dc.W2"] = dc->W2;
    t["dc.b2"] = dc->b2;
  }
  write_all(path, t);
}

Checkpoint load_checkpoint(const std::string& path) {
  TensorMap t = read_all(path);
  Checkpoint ck;

  const Matrix& dims = need(t, "dims");
  if (dims.size() != 4) throw ConfigError("checkpoint: bad dims tensor");
  NetworkDims d;
  d.input_dim = static_cast<std::size_t>(dims(0, 0));
  d.hidden = static_cast<std::size_t>(dims(0, 1));
  d.feature = static_cast<std::size_t>(dims(0, 2));
  d.classes = static_cast<std::size_t>(dims(0, 3));
  ck.model.params.dims = d;
  for (const auto& name : NetworkParams::param_names())
    ck.model.params.by_name(name) = need(t, name);
  ck.model.params.bn_mean = need(t, "bn_mean");
  ck.model.params.bn_var = need(t, "bn_var");
  ck.model.params.set_all_trainable();
  ck.model.src_bn_mean = need(t, "src_bn_mean");
  ck.model.src_bn_var = need(t, "src_bn_var");

  std::size_t n_domains =
      static_cast<std::size_t>(need(t, "n_domains")(0, 0));
  for (std::size_t m = 0; m < n_domains; ++m) {
    std::string base = "att" + std::to_string(m);
    DomainAttention att;
    att.e = need(t, base + ".e").row_vec(0);
    const Matrix& meta = need(t, base + ".meta");
    if (meta.size() != 3) throw ConfigError("checkpoint: bad attention meta");
    att.domain_id = static_cast<int>(meta(0, 0));
    att.scale = meta(0, 1);
    att.frozen = meta(0, 2) != 0.0;
    ck.model.masks.attentions.push_back(std::move(att));
  }

  if (t.count("dc.meta")) {
    DomainClassifier dc;
    const Matrix& meta = need(t, "dc.meta");
    dc.in_dim = static_cast<std::size_t>(meta(0, 0));
    dc.hidden = static_cast<std::size_t>(meta(0, 1));
    dc.n_domains = static_cast<std::size_t>(meta(0, 2));
    dc.W1 = need(t, "dc.W1");
    dc.b1 = need(t, "dc.b1");
    dc.W2 = need(t, "dc.W2");
    dc.b2 = need(t, "dc.b2");
    ck.dc = std::move(dc);
  }
  return ck;
}

}  // namespace gsfda
