#include "flood/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "flood/errors.hpp"
#include "flood/rng.hpp"

namespace flood {

namespace fs = std::filesystem;

namespace {

constexpr int kMaxAttempts = 10000;

class Gaussian {
 public:
  explicit Gaussian(std::mt19937_64& rng) : rng_(rng) {}
  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01(rng_);
    while (u1 <= 0.0) u1 = uniform01(rng_);
    const double u2 = uniform01(rng_);
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64& rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Rasterizes 0..n random rectangles/ellipses into a {0,1} mask.
std::vector<std::uint8_t> draw_regions(std::mt19937_64& rng, std::uint32_t size, std::uint32_t count) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(size) * size, 0);
  const double s = size;
  for (std::uint32_t k = 0; k < count; ++k) {
    const bool ellipse = uniform_index(rng, 2) == 1;
    const double cy = uniform(rng, 0.0, s);
    const double cx = uniform(rng, 0.0, s);
    const double ry = uniform(rng, s / 10.0, s / 3.0);
    const double rx = uniform(rng, s / 10.0, s / 3.0);
    for (std::uint32_t r = 0; r < size; ++r) {
      for (std::uint32_t c = 0; c < size; ++c) {
        const double dy = (r + 0.5 - cy) / ry;
        const double dx = (c + 0.5 - cx) / rx;
        const bool inside = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (inside) mask[static_cast<std::size_t>(r) * size + c] = 1;
      }
    }
  }
  return mask;
}

}  // namespace

void SynthSpec::validate() const {
  if (tile_size == 0 || tile_size % 16 != 0) {
    throw ValidationError("tile size must be a positive multiple of 16, got " + std::to_string(tile_size));
  }
  if (tile_count == 0) throw ValidationError("tile count must be positive");
  if (regions_min > regions_max) throw ValidationError("regions_min exceeds regions_max");
  if (!(water_vv < land_vv) || !(water_vh < land_vh)) {
    throw ValidationError("water backscatter must be darker than land in both bands");
  }
  if (!(speckle_db >= 0.0f) || !(level_jitter_db >= 0.0f)) throw ValidationError("noise scales must be >= 0");
  if (!(missing_fraction >= 0.0 && missing_fraction < 1.0)) throw ValidationError("missing fraction must be in [0, 1)");
  if (!(water_frac_lo >= 0.0 && water_frac_lo <= water_frac_hi && water_frac_hi <= 1.0)) {
    throw ValidationError("water fraction bounds must satisfy 0 <= lo <= hi <= 1");
  }
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ValidationError("val fraction must be in [0, 1)");
}

TilePair synth_tile(const SynthSpec& spec, std::uint32_t index) {
  spec.validate();
  const std::uint32_t n = spec.tile_size;
  const std::size_t pixels = static_cast<std::size_t>(n) * n;
  std::mt19937_64 rng(derive_seed(spec.seed, index, 0x53594e5448ULL));
  Gaussian noise(rng);

  std::vector<std::uint8_t> water;
  std::vector<std::uint8_t> missing(pixels, 0);
  bool accepted = false;
  for (int attempt = 0; attempt < kMaxAttempts && !accepted; ++attempt) {
    const auto count =
        spec.regions_min + static_cast<std::uint32_t>(uniform_index(rng, spec.regions_max - spec.regions_min + 1));
    water = draw_regions(rng, n, count);
    std::size_t valid = 0;
    std::size_t wet = 0;
    for (std::size_t i = 0; i < pixels; ++i) {
      missing[i] = uniform01(rng) < spec.missing_fraction ? 1 : 0;
      if (!missing[i]) {
        ++valid;
        wet += water[i];
      }
    }
    const double frac = valid == 0 ? 0.0 : static_cast<double>(wet) / static_cast<double>(valid);
    accepted = frac >= spec.water_frac_lo && frac <= spec.water_frac_hi;
  }
  if (!accepted) {
    throw ValidationError("could not draw a tile within the water fraction bounds after " +
                          std::to_string(kMaxAttempts) + " attempts");
  }

  char id[32];
  std::snprintf(id, sizeof id, "tile_%04u", index);
  TilePair tile{id, Raster(RasterKind::backscatter_db, 2, n, n), Raster(RasterKind::backscatter_db, 2, n, n),
                Raster(RasterKind::label, 1, n, n)};
  const float jitter = static_cast<float>(uniform(rng, -spec.level_jitter_db, spec.level_jitter_db));
  const float land[2] = {spec.land_vv + jitter, spec.land_vh + jitter};
  const float wet_level[2] = {spec.water_vv, spec.water_vh};
  for (std::uint32_t band = 0; band < 2; ++band) {
    auto pre = tile.pre.band(band);
    auto post = tile.post.band(band);
    for (std::size_t i = 0; i < pixels; ++i) {
      pre[i] = land[band] + static_cast<float>(spec.speckle_db * noise());
      const float base = water[i] ? wet_level[band] : land[band];
      post[i] = base + static_cast<float>(spec.speckle_db * noise());
    }
  }
  for (std::size_t i = 0; i < pixels; ++i) {
    tile.label.data[i] = missing[i] ? -1.0f : static_cast<float>(water[i]);
  }
  return tile;
}

DatasetManifest synth_generate(const SynthSpec& spec, const fs::path& out_dir) {
  spec.validate();
  const fs::path tiles_dir = out_dir / "tiles";
  fs::create_directories(tiles_dir);
  DatasetManifest manifest;
  manifest.seed = spec.seed;
  const auto train_count = static_cast<std::uint32_t>(
      std::llround(static_cast<double>(spec.tile_count) * (1.0 - spec.val_fraction)));
  for (std::uint32_t i = 0; i < spec.tile_count; ++i) {
    TilePair tile = synth_tile(spec, i);
    ManifestEntry entry;
    entry.id = tile.id;
    entry.split = i < train_count ? Split::train : Split::val;
    entry.pre = tiles_dir / (tile.id + "_pre.bras");
    entry.post = tiles_dir / (tile.id + "_post.bras");
    entry.label = tiles_dir / (tile.id + "_label.bras");
    write_bras(tile.pre, entry.pre);
    write_bras(tile.post, entry.post);
    write_bras(tile.label, entry.label);
    manifest.entries.push_back(std::move(entry));
  }
  save_manifest(manifest, out_dir / "manifest.txt");
  return manifest;
}

}  // namespace flood
