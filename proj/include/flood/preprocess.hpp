#pragma once

#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flood/dataset.hpp"
#include "flood/raster.hpp"

namespace flood {

/// Per-band dB clip ranges applied before normalization.
struct ClipSpec {
  float vv_lo = -23.0f;
  float vv_hi = 0.0f;
  float vh_lo = -28.0f;
  float vh_hi = -5.0f;

  void validate() const;
};

Raster clip_db(const Raster& band, float lo, float hi);

/// Min-max map of a clipped band onto [0, 1].
Raster normalize(const Raster& band, float lo, float hi);

/// Clip and normalize a 2-band (VV, VH) backscatter raster.
Raster condition_tile(const Raster& db, const ClipSpec& clip);

/// Per-pixel median over a stack of equally shaped rasters. Even counts take
/// the mean of the two middle values; NaNs are skipped per position and an
/// all-NaN position stays NaN.
Raster temporal_median(std::span<const Raster> stack);

/// Three-band network input: VV, VH, and an all-zero third band.
Raster assemble_input(const Raster& vv, const Raster& vh);

struct EncodedLabels {
  Raster target;
  Raster mask;
};

/// Maps raw labels {0, 1, -1} to a {0, 1} target and a validity mask.
EncodedLabels encode_labels(const Raster& raw);

enum class Flip { none, h, v, hv };

const char* to_string(Flip flip);
Flip draw_flip(std::mt19937_64& rng);
void flip_raster(Raster& raster, Flip flip);

/// A model-ready sample: 3-band normalized pre/post inputs plus target and mask.
struct Sample {
  std::string id;
  Raster pre;
  Raster post;
  Raster target;
  Raster mask;
};

Sample prepare_sample(const TilePair& tile, const ClipSpec& clip);
void flip_augment(Sample& sample, Flip flip);

}  // namespace flood
