#include "drsn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace drsn {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

std::vector<NamedTensor> checkpoint_tensors(Network& model) {
  std::vector<NamedTensor> out;
  for (Parameter* p : model.parameters()) out.push_back({p->name, &p->value});
  for (BatchNorm1d* bn : model.norms()) {
    out.push_back({bn->name + ".running_mean", &bn->running_mean});
    out.push_back({bn->name + ".running_var", &bn->running_var});
  }
  return out;
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void put_bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointCorruptError(std::string("checkpoint truncated while reading ") + what);
    }
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(Network& model) {
  Writer w;
  w.put_bytes(std::string_view(kCheckpointMagic, 4));
  w.put<std::uint32_t>(kCheckpointVersion);
  const std::string config = model.config().to_text();
  w.put<std::uint64_t>(config.size());
  w.put_bytes(config);
  const auto tensors = checkpoint_tensors(model);
  w.put<std::uint64_t>(tensors.size());
  for (const auto& [name, t] : tensors) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t->rank()));
    for (auto d : t->shape()) w.put<std::uint64_t>(d);
    for (double v : t->values()) w.put<double>(v);
  }
  return w.take();
}

void save_checkpoint(Network& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Network deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.get_bytes(4, "magic") != std::string_view(kCheckpointMagic, 4)) {
    throw CheckpointCorruptError("not a checkpoint: bad magic");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint format version " + std::to_string(version) +
                                 ", expected " + std::to_string(kCheckpointVersion));
  }
  const auto config_len = r.get<std::uint64_t>("config length");
  ModelConfig config;
  try {
    config = ModelConfig::from_text(r.get_bytes(config_len, "config"));
  } catch (const ConfigError& e) {
    throw CheckpointCorruptError(std::string("checkpoint config unreadable: ") + e.what());
  }

  Network model(config);
  auto expected = checkpoint_tensors(model);
  const auto count = r.get<std::uint64_t>("tensor count");
  if (count != expected.size()) {
    throw CheckpointShapeError("checkpoint holds " + std::to_string(count) +
                               " tensors, config implies " + std::to_string(expected.size()));
  }
  for (auto& [name, t] : expected) {
    const auto name_len = r.get<std::uint32_t>("tensor name length");
    const std::string stored = r.get_bytes(name_len, "tensor name");
    if (stored != name) {
      throw CheckpointShapeError("expected tensor '" + name + "', found '" + stored + "'");
    }
    const auto rank = r.get<std::uint32_t>("tensor rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>("tensor extent");
    if (shape != t->shape()) {
      throw CheckpointShapeError("tensor '" + name + "' has shape " + shape_string(shape) +
                                 ", config implies " + shape_string(t->shape()));
    }
    for (double& v : t->values()) v = r.get<double>("tensor data");
  }
  if (!r.at_end()) throw CheckpointCorruptError("trailing bytes after last tensor");
  return model;
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace drsn
