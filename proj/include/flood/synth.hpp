#pragma once

#include <cstdint>
#include <filesystem>

#include "flood/dataset.hpp"

namespace flood {

/// Desk-scale bi-temporal flood scenes. Levels are in dB; speckle is additive
/// Gaussian in dB.
struct SynthSpec {
  std::uint32_t tile_size = 64;
  std::uint32_t tile_count = 200;
  std::uint32_t regions_min = 1;
  std::uint32_t regions_max = 3;
  float land_vv = -8.0f;
  float land_vh = -15.0f;
  float water_vv = -20.0f;
  float water_vh = -25.0f;
  float level_jitter_db = 1.5f;  // per-tile shift of the land level
  float speckle_db = 1.5f;
  double missing_fraction = 0.02;  // share of pixels labelled -1
  double water_frac_lo = 0.05;     // over valid pixels, per tile
  double water_frac_hi = 0.50;
  double val_fraction = 0.2;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Generates one scene. Exposed for tests; synth_generate writes these to disk.
TilePair synth_tile(const SynthSpec& spec, std::uint32_t index);

/// Writes `tiles/<id>_{pre,post,label}.bras` and `manifest.txt` under `out_dir`.
/// The last `val_fraction` of tile indices form the val split.
DatasetManifest synth_generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace flood
