#include "flood/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flood/errors.hpp"
#include "flood/rng.hpp"

namespace flood {

void ClipSpec::validate() const {
  if (!(vv_lo < vv_hi)) throw ValidationError("VV clip range needs lo < hi");
  if (!(vh_lo < vh_hi)) throw ValidationError("VH clip range needs lo < hi");
}

Raster clip_db(const Raster& band, float lo, float hi) {
  if (!(lo < hi)) throw ValidationError("clip range needs lo < hi");
  Raster out = band;
  for (float& v : out.data) v = std::clamp(v, lo, hi);
  return out;
}

Raster normalize(const Raster& band, float lo, float hi) {
  if (!(hi > lo)) throw ValidationError("degenerate normalization range [" + std::to_string(lo) + ", " +
                                        std::to_string(hi) + "]");
  Raster out = band;
  out.kind = RasterKind::normalized;
  const float span = hi - lo;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const float v = out.data[i];
    if (!(v >= lo && v <= hi)) {
      throw ValidationError("value " + std::to_string(v) + " at index " + std::to_string(i) +
                            " lies outside the normalization range");
    }
    out.data[i] = (v - lo) / span;
  }
  return out;
}

Raster condition_tile(const Raster& db, const ClipSpec& clip) {
  if (db.kind != RasterKind::backscatter_db) {
    throw ValidationError(std::string("expected a backscatter-dB raster, got ") + to_string(db.kind));
  }
  if (db.channels != 2) throw DimensionError("expected a 2-band (VV, VH) raster");
  clip.validate();
  const Raster vv = normalize(clip_db(db.extract_band(0), clip.vv_lo, clip.vv_hi), clip.vv_lo, clip.vv_hi);
  const Raster vh = normalize(clip_db(db.extract_band(1), clip.vh_lo, clip.vh_hi), clip.vh_lo, clip.vh_hi);
  Raster out(RasterKind::normalized, 2, db.height, db.width);
  std::copy(vv.data.begin(), vv.data.end(), out.band(0).begin());
  std::copy(vh.data.begin(), vh.data.end(), out.band(1).begin());
  return out;
}

Raster temporal_median(std::span<const Raster> stack) {
  if (stack.empty()) throw UsageError("temporal median of an empty stack");
  const Raster& first = stack.front();
  for (const Raster& r : stack) {
    if (r.channels != first.channels || !r.same_grid(first)) {
      throw DimensionError("temporal median stack members differ in shape");
    }
  }
  Raster out = first;
  std::vector<float> series;
  series.reserve(stack.size());
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    series.clear();
    for (const Raster& r : stack) {
      if (!std::isnan(r.data[i])) series.push_back(r.data[i]);
    }
    if (series.empty()) {
      out.data[i] = std::numeric_limits<float>::quiet_NaN();
      continue;
    }
    std::sort(series.begin(), series.end());
    const std::size_t mid = series.size() / 2;
    out.data[i] = series.size() % 2 == 1
                      ? series[mid]
                      : static_cast<float>((static_cast<double>(series[mid - 1]) + series[mid]) / 2.0);
  }
  return out;
}

Raster assemble_input(const Raster& vv, const Raster& vh) {
  if (vv.channels != 1 || vh.channels != 1) throw DimensionError("assemble_input takes single-band rasters");
  if (!vv.same_grid(vh)) throw DimensionError("VV and VH bands differ in size");
  Raster out(RasterKind::normalized, 3, vv.height, vv.width, 0.0f);
  std::copy(vv.data.begin(), vv.data.end(), out.band(0).begin());
  std::copy(vh.data.begin(), vh.data.end(), out.band(1).begin());
  return out;
}

EncodedLabels encode_labels(const Raster& raw) {
  EncodedLabels enc{Raster(RasterKind::label, raw.channels, raw.height, raw.width),
                    Raster(RasterKind::label, raw.channels, raw.height, raw.width)};
  for (std::size_t i = 0; i < raw.data.size(); ++i) {
    const float v = raw.data[i];
    if (v == 1.0f) {
      enc.target.data[i] = 1.0f;
      enc.mask.data[i] = 1.0f;
    } else if (v == 0.0f) {
      enc.mask.data[i] = 1.0f;
    } else if (v != -1.0f) {
      throw LabelDomainError("label value " + std::to_string(v) + " at index " + std::to_string(i) +
                                 " is not one of {0, 1, -1}",
                             i);
    }
  }
  return enc;
}

const char* to_string(Flip flip) {
  switch (flip) {
    case Flip::none:
      return "none";
    case Flip::h:
      return "h";
    case Flip::v:
      return "v";
    case Flip::hv:
      return "hv";
  }
  return "?";
}

Flip draw_flip(std::mt19937_64& rng) { return static_cast<Flip>(uniform_index(rng, 4)); }

void flip_raster(Raster& raster, Flip flip) {
  const bool horizontal = flip == Flip::h || flip == Flip::hv;
  const bool vertical = flip == Flip::v || flip == Flip::hv;
  for (std::uint32_t c = 0; c < raster.channels; ++c) {
    auto band = raster.band(c);
    if (horizontal) {
      for (std::uint32_t r = 0; r < raster.height; ++r) {
        auto row = band.subspan(static_cast<std::size_t>(r) * raster.width, raster.width);
        std::reverse(row.begin(), row.end());
      }
    }
    if (vertical) {
      for (std::uint32_t r = 0; r < raster.height / 2; ++r) {
        auto top = band.subspan(static_cast<std::size_t>(r) * raster.width, raster.width);
        auto bottom = band.subspan(static_cast<std::size_t>(raster.height - 1 - r) * raster.width, raster.width);
        std::swap_ranges(top.begin(), top.end(), bottom.begin());
      }
    }
  }
}

Sample prepare_sample(const TilePair& tile, const ClipSpec& clip) {
  tile.validate();
  auto to_input = [&](const Raster& r, const char* which) {
    Raster normalized;
    if (r.kind == RasterKind::backscatter_db) {
      normalized = condition_tile(r, clip);
    } else if (r.kind == RasterKind::normalized) {
      for (float v : r.data) {
        if (!(v >= 0.0f && v <= 1.0f)) {
          throw ValidationError("tile " + tile.id + ": " + which + " raster is marked normalized but leaves [0, 1]");
        }
      }
      normalized = r;
    } else {
      throw ValidationError("tile " + tile.id + ": " + which + " raster has kind label");
    }
    return assemble_input(normalized.extract_band(0), normalized.extract_band(1));
  };
  EncodedLabels labels = encode_labels(tile.label);
  return Sample{tile.id, to_input(tile.pre, "pre"), to_input(tile.post, "post"), std::move(labels.target),
                std::move(labels.mask)};
}

void flip_augment(Sample& sample, Flip flip) {
  for (Raster* r : {&sample.pre, &sample.post, &sample.target, &sample.mask}) flip_raster(*r, flip);
}

}  // namespace flood
