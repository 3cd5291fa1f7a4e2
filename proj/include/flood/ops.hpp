#pragma once

#include "flood/tensor.hpp"

// Differentiable kernels. Every op records itself on the thread's active tape
// when at least one input requires a gradient.
namespace flood::ops {

enum class Activation { relu, sigmoid };
enum class NormMode { train, eval };

inline constexpr float kBatchNormEps = 1e-5f;
inline constexpr float kBatchNormMomentum = 0.1f;

/// 2-D cross-correlation with zero padding. `bias` may be an undefined tensor.
/// input N x C x H x W, weight K x C x kh x kw -> N x K x H' x W' with
/// H' = (H + 2 pad - kh) / stride + 1.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride = 1,
              int pad = 0);

/// 2x2 max pool, stride 2. Ties resolve to the first element in scan order.
Tensor maxpool2(const Tensor& input);

/// 2x2 mean pool, stride 2.
Tensor avgpool2(const Tensor& input);

Tensor global_avg_pool(const Tensor& input);
Tensor upsample_nearest2x(const Tensor& input);

/// Per-channel batch normalization. In train mode normalizes with batch
/// statistics and blends them into the running buffers (momentum 0.1, the
/// running variance uses the unbiased estimate); eval mode uses the buffers.
Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                 Tensor& running_mean, Tensor& running_var, NormMode mode);

Tensor activation(const Tensor& input, Activation kind);
inline Tensor relu(const Tensor& input) { return activation(input, Activation::relu); }
inline Tensor sigmoid(const Tensor& input) { return activation(input, Activation::sigmoid); }

/// Channel-wise concatenation, a first. An undefined operand acts as a
/// zero-channel map and the other operand is returned as is.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// f (N x C x H x W) times a per-channel gate (N x C x 1 x 1).
Tensor scale_channels(const Tensor& f, const Tensor& gate);
/// f (N x C x H x W) times a per-position gate (N x 1 x H x W).
Tensor scale_positions(const Tensor& f, const Tensor& gate);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& input);
Tensor mean(const Tensor& input);

}  // namespace flood::ops
