#pragma once

#include "flood/tensor.hpp"

namespace flood {

struct LossConfig {
  float alpha = 0.5f;   // dice weight; focal gets 1 - alpha
  float gamma = 2.0f;   // focal focusing exponent
  float smooth = 1.0f;  // dice smoothing

  void validate() const;
};

inline constexpr float kProbClamp = 1e-7f;

/// Scalar loss. `empty_mask` is set when no pixel is valid; the value is then
/// 0 and carries no gradient.
struct LossValue {
  Tensor value;
  bool empty_mask = false;
};

// probs, target and mask share one shape; target and mask hold {0, 1}.
// Only mask = 1 pixels contribute.

/// 1 - (2 sum(p g m) + smooth) / (sum(p m) + sum(g m) + smooth)
LossValue dice_loss(const Tensor& probs, const Tensor& target, const Tensor& mask, float smooth);

/// Mean over valid pixels of -(1 - p_t)^gamma log(p_t), p clamped to [1e-7, 1 - 1e-7].
LossValue focal_loss(const Tensor& probs, const Tensor& target, const Tensor& mask, float gamma);

/// alpha * dice + (1 - alpha) * focal.
LossValue combined_loss(const Tensor& probs, const Tensor& target, const Tensor& mask, const LossConfig& cfg);

}  // namespace flood
