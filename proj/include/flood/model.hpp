#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "flood/ops.hpp"
#include "flood/tensor.hpp"

namespace flood {

using FeatureMaps = std::array<Tensor, 4>;

struct ModelConfig {
  std::uint32_t input_size = 64;
  std::array<std::uint32_t, 4> widths{16, 32, 64, 128};
  std::uint32_t reduction = 2;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct ParamEntry {
  std::string name;
  Tensor tensor;
  bool trainable = true;  // false for batch-norm running buffers
};

/// Weights of one concurrent spatial/channel squeeze-and-excitation block.
struct ScseWeights {
  Tensor fc1_weight;  // C/r x C x 1 x 1
  Tensor fc1_bias;
  Tensor fc2_weight;  // C x C/r x 1 x 1
  Tensor fc2_bias;
  Tensor spatial_weight;  // 1 x C x 1 x 1
  Tensor spatial_bias;
};

/// Every tensor of the network in a fixed order. The encoder appears once and
/// serves both streams.
class ModelParams {
 public:
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  /// Expected (name, shape, trainable) list for a config, in storage order.
  static std::vector<std::pair<std::string, Shape>> layout(const ModelConfig& config);

  /// Adopts externally loaded tensors; names and shapes must match layout().
  static ModelParams from_tensors(const ModelConfig& config, std::vector<std::pair<std::string, Tensor>> tensors);

  const ModelConfig& config() const { return config_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::vector<ParamEntry>& entries() { return entries_; }

  bool contains(const std::string& name) const { return index_.contains(name); }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  ScseWeights scse_block(int scale) const;

  void zero_grad();
  ModelParams clone() const;
  std::size_t trainable_count() const;

 private:
  ModelConfig config_;
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;

  void add(std::string name, Tensor tensor, bool trainable);
};

/// Recovers widths and reduction from tensor shapes. input_size is left at
/// its default since the network is fully convolutional.
ModelConfig infer_config(const std::vector<std::pair<std::string, Shape>>& shapes);

/// Four taps at S/2, S/4, S/8, S/16 from the shared encoder.
FeatureMaps encoder_forward(const Tensor& x, ModelParams& params, ops::NormMode mode);

Tensor scse(const Tensor& f, const ScseWeights& w);

/// Per scale: scSE on each stream, then concatenate (pre first).
FeatureMaps fuse(const FeatureMaps& pre, const FeatureMaps& post, const ModelParams& params);

/// Logits N x 1 x S x S from the fused pyramid.
Tensor decoder_forward(const FeatureMaps& fused, ModelParams& params, ops::NormMode mode);

/// Water probabilities N x 1 x S x S.
Tensor model_forward(const Tensor& pre, const Tensor& post, ModelParams& params, ops::NormMode mode);

}  // namespace flood
