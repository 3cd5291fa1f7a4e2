#include "flood/model.hpp"

#include <cmath>
#include <random>

#include "flood/errors.hpp"
#include "flood/rng.hpp"

namespace flood {

namespace {

std::string stage(int s) { return "enc.s" + std::to_string(s); }
std::string level(int l) { return "dec.l" + std::to_string(l); }
std::string scse_prefix(int s) { return "scse.s" + std::to_string(s); }

bool is_buffer(const std::string& name) {
  return name.ends_with(".running_mean") || name.ends_with(".running_var");
}

void add_bn(std::vector<std::pair<std::string, Shape>>& out, const std::string& prefix, std::size_t c) {
  for (const char* field : {".gamma", ".beta", ".running_mean", ".running_var"}) out.emplace_back(prefix + field, Shape{c});
}

void add_double_conv(std::vector<std::pair<std::string, Shape>>& out, const std::string& prefix, std::size_t in,
                     std::size_t width) {
  out.emplace_back(prefix + ".conv1.weight", Shape{width, in, 3, 3});
  add_bn(out, prefix + ".bn1", width);
  out.emplace_back(prefix + ".conv2.weight", Shape{width, width, 3, 3});
  add_bn(out, prefix + ".bn2", width);
}

// conv(3x3, pad 1) -> batchnorm -> relu, twice.
Tensor double_conv(const Tensor& x, ModelParams& p, const std::string& prefix, ops::NormMode mode) {
  Tensor h = ops::conv2d(x, p.at(prefix + ".conv1.weight"), Tensor(), 1, 1);
  h = ops::relu(ops::batchnorm(h, p.at(prefix + ".bn1.gamma"), p.at(prefix + ".bn1.beta"),
                               p.at(prefix + ".bn1.running_mean"), p.at(prefix + ".bn1.running_var"), mode));
  h = ops::conv2d(h, p.at(prefix + ".conv2.weight"), Tensor(), 1, 1);
  return ops::relu(ops::batchnorm(h, p.at(prefix + ".bn2.gamma"), p.at(prefix + ".bn2.beta"),
                                  p.at(prefix + ".bn2.running_mean"), p.at(prefix + ".bn2.running_var"), mode));
}

}  // namespace

void ModelConfig::validate() const {
  if (input_size == 0 || input_size % 16 != 0) {
    throw ValidationError("input size must be a positive multiple of 16 (four halvings), got " +
                          std::to_string(input_size));
  }
  for (std::uint32_t w : widths) {
    if (w == 0) throw ValidationError("stage widths must be positive");
  }
  if (reduction == 0) throw ValidationError("scSE reduction ratio must be positive");
  for (std::uint32_t w : widths) {
    if (w % reduction != 0) {
      throw ValidationError("scSE reduction ratio " + std::to_string(reduction) + " does not divide stage width " +
                            std::to_string(w));
    }
  }
}

std::vector<std::pair<std::string, Shape>> ModelParams::layout(const ModelConfig& config) {
  config.validate();
  const auto& w = config.widths;
  std::vector<std::pair<std::string, Shape>> out;
  for (int s = 1; s <= 4; ++s) {
    add_double_conv(out, stage(s), s == 1 ? 3 : w[s - 2], w[s - 1]);
  }
  for (int s = 1; s <= 4; ++s) {
    const std::size_t c = w[s - 1];
    const std::size_t hidden = c / config.reduction;
    const std::string p = scse_prefix(s);
    out.emplace_back(p + ".fc1.weight", Shape{hidden, c, 1, 1});
    out.emplace_back(p + ".fc1.bias", Shape{hidden});
    out.emplace_back(p + ".fc2.weight", Shape{c, hidden, 1, 1});
    out.emplace_back(p + ".fc2.bias", Shape{c});
    out.emplace_back(p + ".spatial.weight", Shape{1, c, 1, 1});
    out.emplace_back(p + ".spatial.bias", Shape{1});
  }
  for (int l = 3; l >= 1; --l) {
    const std::size_t deeper = l == 3 ? 2 * w[3] : w[l];
    add_double_conv(out, level(l), deeper + 2 * w[l - 1], w[l - 1]);
  }
  out.emplace_back("head.weight", Shape{1, w[0], 1, 1});
  out.emplace_back("head.bias", Shape{1});
  return out;
}

void ModelParams::add(std::string name, Tensor tensor, bool trainable) {
  if (index_.contains(name)) throw ValidationError("duplicate parameter name " + name);
  index_.emplace(name, entries_.size());
  entries_.push_back(ParamEntry{std::move(name), std::move(tensor), trainable});
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  ModelParams params;
  params.config_ = config;
  const auto shapes = layout(config);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& [name, shape] = shapes[i];
    std::vector<float> values(shape_numel(shape), 0.0f);
    if (name.ends_with(".gamma") || name.ends_with(".running_var")) {
      std::fill(values.begin(), values.end(), 1.0f);
    } else if (name.ends_with(".weight") || name.ends_with(".bias")) {
      // Fan-in scaled uniform: He bound for convs feeding batchnorm + relu,
      // 1/sqrt(fan_in) for the attention maps, the head, and biases.
      const bool bias = name.ends_with(".bias");
      const Shape& wshape = bias ? shapes[i - 1].second : shape;
      const double fan_in = static_cast<double>(shape_numel(wshape) / wshape[0]);
      const bool feeds_bn = name.starts_with("enc.") || name.starts_with("dec.");
      const double bound = feeds_bn ? std::sqrt(6.0 / fan_in) : 1.0 / std::sqrt(fan_in);
      std::mt19937_64 rng(derive_seed(seed, i, 0x494e4954ULL));
      for (float& v : values) v = static_cast<float>((2.0 * uniform01(rng) - 1.0) * bound);
    }
    const bool trainable = !is_buffer(name);
    params.add(name, Tensor::from(shape, std::move(values), trainable), trainable);
  }
  return params;
}

ModelParams ModelParams::from_tensors(const ModelConfig& config,
                                      std::vector<std::pair<std::string, Tensor>> tensors) {
  const auto shapes = layout(config);
  std::unordered_map<std::string, std::size_t> given;
  for (std::size_t i = 0; i < tensors.size(); ++i) given.emplace(tensors[i].first, i);
  for (const auto& t : tensors) {
    bool known = false;
    for (const auto& s : shapes) known = known || s.first == t.first;
    if (!known) throw ValidationError("unexpected parameter '" + t.first + "' for this model configuration");
  }
  ModelParams params;
  params.config_ = config;
  for (const auto& [name, shape] : shapes) {
    auto it = given.find(name);
    if (it == given.end()) throw ValidationError("missing parameter '" + name + "'");
    Tensor t = tensors[it->second].second;
    if (t.shape() != shape) {
      throw DimensionError("parameter '" + name + "' has shape " + shape_string(t.shape()) + ", expected " +
                           shape_string(shape));
    }
    const bool trainable = !is_buffer(name);
    t.set_requires_grad(trainable);
    params.add(name, std::move(t), trainable);
  }
  return params;
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return entries_[it->second].tensor;
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return entries_[it->second].tensor;
}

ScseWeights ModelParams::scse_block(int scale) const {
  const std::string p = scse_prefix(scale);
  return ScseWeights{at(p + ".fc1.weight"), at(p + ".fc1.bias"),      at(p + ".fc2.weight"),
                     at(p + ".fc2.bias"),   at(p + ".spatial.weight"), at(p + ".spatial.bias")};
}

void ModelParams::zero_grad() {
  for (auto& e : entries_) {
    if (e.trainable) e.tensor.zero_grad();
  }
}

ModelParams ModelParams::clone() const {
  ModelParams copy;
  copy.config_ = config_;
  for (const auto& e : entries_) copy.add(e.name, e.tensor.clone(), e.trainable);
  return copy;
}

std::size_t ModelParams::trainable_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.trainable ? e.tensor.numel() : 0;
  return n;
}

ModelConfig infer_config(const std::vector<std::pair<std::string, Shape>>& shapes) {
  auto find = [&](const std::string& name) -> const Shape& {
    for (const auto& s : shapes) {
      if (s.first == name) return s.second;
    }
    throw ValidationError("cannot infer model configuration: missing '" + name + "'");
  };
  ModelConfig config;
  for (int s = 1; s <= 4; ++s) config.widths[s - 1] = static_cast<std::uint32_t>(find(stage(s) + ".conv1.weight")[0]);
  const std::size_t hidden = find(scse_prefix(1) + ".fc1.weight")[0];
  if (hidden == 0 || config.widths[0] % hidden != 0) throw ValidationError("inconsistent scSE shapes");
  config.reduction = static_cast<std::uint32_t>(config.widths[0] / hidden);
  config.validate();
  return config;
}

FeatureMaps encoder_forward(const Tensor& x, ModelParams& params, ops::NormMode mode) {
  const ModelConfig& cfg = params.config();
  if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != cfg.input_size || x.dim(3) != cfg.input_size) {
    throw DimensionError("encoder expects N x 3 x " + std::to_string(cfg.input_size) + " x " +
                         std::to_string(cfg.input_size) + " input, got " + shape_string(x.shape()));
  }
  FeatureMaps taps;
  Tensor h = x;
  for (int s = 1; s <= 4; ++s) {
    h = ops::maxpool2(double_conv(h, params, stage(s), mode));
    taps[s - 1] = h;
  }
  return taps;
}

Tensor scse(const Tensor& f, const ScseWeights& w) {
  if (f.rank() != 4) throw DimensionError("scse expects N x C x H x W, got " + shape_string(f.shape()));
  const std::size_t c = f.dim(1);
  if (w.fc1_weight.dim(1) != c || w.fc2_weight.dim(0) != c || w.spatial_weight.dim(1) != c) {
    throw DimensionError("scse weights do not match " + std::to_string(c) + " channels");
  }
  if (w.fc1_weight.dim(0) == 0 || c % w.fc1_weight.dim(0) != 0) {
    throw DimensionError("scse hidden width must divide the channel count");
  }
  Tensor squeeze = ops::global_avg_pool(f);
  Tensor hidden = ops::relu(ops::conv2d(squeeze, w.fc1_weight, w.fc1_bias));
  Tensor channel_gate = ops::sigmoid(ops::conv2d(hidden, w.fc2_weight, w.fc2_bias));
  Tensor spatial_gate = ops::sigmoid(ops::conv2d(f, w.spatial_weight, w.spatial_bias));
  return ops::add(ops::scale_channels(f, channel_gate), ops::scale_positions(f, spatial_gate));
}

FeatureMaps fuse(const FeatureMaps& pre, const FeatureMaps& post, const ModelParams& params) {
  FeatureMaps fused;
  for (int s = 0; s < 4; ++s) {
    if (pre[s].shape() != post[s].shape()) {
      throw DimensionError("fuse: scale " + std::to_string(s + 1) + " maps differ: " + shape_string(pre[s].shape()) +
                           " vs " + shape_string(post[s].shape()));
    }
    const ScseWeights w = params.scse_block(s + 1);
    fused[s] = ops::concat_channels(scse(pre[s], w), scse(post[s], w));
  }
  return fused;
}

Tensor decoder_forward(const FeatureMaps& fused, ModelParams& params, ops::NormMode mode) {
  const ModelConfig& cfg = params.config();
  for (int s = 0; s < 4; ++s) {
    const std::size_t extent = cfg.input_size >> (s + 1);
    if (fused[s].rank() != 4 || fused[s].dim(1) != 2 * cfg.widths[s] || fused[s].dim(2) != extent ||
        fused[s].dim(3) != extent) {
      throw DimensionError("decoder: fused scale " + std::to_string(s + 1) + " has shape " +
                           shape_string(fused[s].shape()));
    }
  }
  Tensor d = fused[3];
  for (int l = 3; l >= 1; --l) {
    d = ops::concat_channels(ops::upsample_nearest2x(d), fused[l - 1]);
    d = double_conv(d, params, level(l), mode);
  }
  d = ops::upsample_nearest2x(d);
  return ops::conv2d(d, params.at("head.weight"), params.at("head.bias"));
}

Tensor model_forward(const Tensor& pre, const Tensor& post, ModelParams& params, ops::NormMode mode) {
  if (pre.shape() != post.shape()) {
    throw DimensionError("pre and post inputs differ: " + shape_string(pre.shape()) + " vs " +
                         shape_string(post.shape()));
  }
  const FeatureMaps pre_taps = encoder_forward(pre, params, mode);
  const FeatureMaps post_taps = encoder_forward(post, params, mode);
  return ops::sigmoid(decoder_forward(fuse(pre_taps, post_taps, params), params, mode));
}

}  // namespace flood
