#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flood/raster.hpp"

namespace flood {

/// Water-class confusion over valid (mask = 1) pixels.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

inline constexpr float kDefaultThreshold = 0.5f;

/// 1 where prob >= threshold, else 0.
std::vector<float> binarize(std::span<const float> probs, float threshold = kDefaultThreshold);

ConfusionCounts confusion(std::span<const float> pred, std::span<const float> target, std::span<const float> mask);
ConfusionCounts confusion(const Raster& pred, const Raster& target, const Raster& mask);

// Both return 1.0 when tp = fp = fn = 0.
double iou(const ConfusionCounts& c);
double f1(const ConfusionCounts& c);

}  // namespace flood
