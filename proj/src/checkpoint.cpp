#include "flood/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "flood/errors.hpp"

namespace flood {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::size_t start) : bytes_(bytes), pos_(start) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n, "parameter name");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void get_floats(std::span<float> out) {
    need(out.size() * 4, "tensor payload");
    std::memcpy(out.data(), bytes_.data() + pos_, out.size() * 4);
    pos_ += out.size() * 4;
  }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("truncated checkpoint: ") + what, pos_);
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
};

bool is_moment(const std::string& name) { return name.ends_with(".m") || name.ends_with(".v"); }

}  // namespace

Checkpoint make_checkpoint(const ModelParams& params, const Adam& adam, const SchedulerState& scheduler,
                           std::uint64_t seed) {
  Checkpoint ckpt;
  for (const auto& e : params.entries()) ckpt.tensors.emplace_back(e.name, e.tensor.clone());
  std::size_t k = 0;
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    ckpt.tensors.emplace_back(e.name + ".m", adam.first_moments().at(k).clone());
    ckpt.tensors.emplace_back(e.name + ".v", adam.second_moments().at(k).clone());
    ++k;
  }
  ckpt.step = adam.steps();
  ckpt.scheduler = scheduler;
  ckpt.seed = seed;
  return ckpt;
}

std::vector<std::pair<std::string, Shape>> model_shapes(const Checkpoint& ckpt) {
  std::vector<std::pair<std::string, Shape>> out;
  for (const auto& [name, t] : ckpt.tensors) {
    if (!is_moment(name)) out.emplace_back(name, t.shape());
  }
  return out;
}

ModelParams restore_params(const Checkpoint& ckpt, const ModelConfig& config) {
  std::vector<std::pair<std::string, Tensor>> model;
  for (const auto& [name, t] : ckpt.tensors) {
    if (!is_moment(name)) model.emplace_back(name, t.clone());
  }
  return ModelParams::from_tensors(config, std::move(model));
}

Adam restore_optimizer(const Checkpoint& ckpt, const ModelParams& params) {
  Adam adam(params);
  std::size_t k = 0;
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    for (const char* suffix : {".m", ".v"}) {
      const std::string want = e.name + suffix;
      const Tensor* found = nullptr;
      for (const auto& [name, t] : ckpt.tensors) {
        if (name == want) found = &t;
      }
      if (found == nullptr) throw ValidationError("checkpoint lacks optimizer moment '" + want + "'");
      if (found->shape() != e.tensor.shape()) {
        throw DimensionError("optimizer moment '" + want + "' has shape " + shape_string(found->shape()));
      }
      auto& dst = suffix[1] == 'm' ? adam.first_moments()[k] : adam.second_moments()[k];
      dst = found->clone();
    }
    ++k;
  }
  adam.set_steps(ckpt.step);
  return adam;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'B', 'F', 'C', 'K'});
  put<std::uint16_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.size() > UINT16_MAX) throw ValidationError("parameter name too long: " + name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data().data());
    out.insert(out.end(), p, p + t.numel() * 4);
  }
  put<std::uint64_t>(out, ckpt.step);
  put<float>(out, ckpt.scheduler.lr);
  put<float>(out, ckpt.scheduler.best);
  put<std::uint32_t>(out, ckpt.scheduler.since_improvement);
  put<std::uint64_t>(out, ckpt.seed);
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "BFCK", 4) != 0) {
    throw FormatError("bad magic: expected \"BFCK\"", 0);
  }
  Reader in(bytes, 4);
  const auto version = in.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  const auto count = in.get<std::uint32_t>("entry count");
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = in.get<std::uint16_t>("name length");
    std::string name = in.get_string(len);
    const auto rank = in.get<std::uint8_t>("rank");
    if (rank == 0) throw FormatError("zero-rank tensor '" + name + "'", in.pos());
    Shape shape(rank);
    for (auto& d : shape) {
      d = in.get<std::uint32_t>("dims");
      if (d == 0) throw FormatError("zero extent in tensor '" + name + "'", in.pos());
    }
    std::vector<float> values(shape_numel(shape));
    in.get_floats(values);
    ckpt.tensors.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
  }
  ckpt.step = in.get<std::uint64_t>("step");
  ckpt.scheduler.lr = in.get<float>("learning rate");
  ckpt.scheduler.best = in.get<float>("best loss");
  ckpt.scheduler.since_improvement = in.get<std::uint32_t>("patience counter");
  ckpt.seed = in.get<std::uint64_t>("seed");
  if (!in.done()) throw FormatError("trailing bytes after checkpoint trailer", in.pos());
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

}  // namespace flood
