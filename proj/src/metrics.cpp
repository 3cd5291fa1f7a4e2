#include "flood/metrics.hpp"

#include "flood/errors.hpp"

namespace flood {

std::vector<float> binarize(std::span<const float> probs, float threshold) {
  std::vector<float> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] >= threshold ? 1.0f : 0.0f;
  return out;
}

ConfusionCounts confusion(std::span<const float> pred, std::span<const float> target, std::span<const float> mask) {
  if (pred.size() != target.size() || pred.size() != mask.size()) {
    throw DimensionError("confusion inputs differ in length");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask[i] == 0.0f) continue;
    const bool p = pred[i] != 0.0f;
    const bool t = target[i] != 0.0f;
    if (p && t) {
      ++c.tp;
    } else if (p) {
      ++c.fp;
    } else if (t) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

ConfusionCounts confusion(const Raster& pred, const Raster& target, const Raster& mask) {
  if (pred.channels != target.channels || !pred.same_grid(target) || pred.channels != mask.channels ||
      !pred.same_grid(mask)) {
    throw DimensionError("confusion rasters differ in shape");
  }
  return confusion(std::span<const float>(pred.data), target.data, mask.data);
}

double iou(const ConfusionCounts& c) {
  const std::uint64_t den = c.tp + c.fp + c.fn;
  return den == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(den);
}

double f1(const ConfusionCounts& c) {
  const std::uint64_t den = 2 * c.tp + c.fp + c.fn;
  return den == 0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(den);
}

}  // namespace flood
