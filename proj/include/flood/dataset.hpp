#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flood/raster.hpp"

namespace flood {

enum class Split { train, val };

const char* to_string(Split split);
Split parse_split(const std::string& text);

/// Aligned bi-temporal sample: pre and post carry (VV, VH), label one band.
struct TilePair {
  std::string id;
  Raster pre;
  Raster post;
  Raster label;

  void validate() const;
};

struct ManifestEntry {
  std::string id;
  Split split = Split::train;
  std::filesystem::path pre;
  std::filesystem::path post;
  std::filesystem::path label;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;

  std::size_t count(Split split) const;
};

/// Parses `<id>\t<split>\t<pre>\t<post>\t<label>` lines. Relative paths are
/// resolved against the manifest's directory; `#` starts a comment, and a
/// `# seed=<n>` comment sets the manifest seed.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

TilePair load_tile(const ManifestEntry& entry);

/// Manifest indices of `split` in iteration order. The train split is
/// shuffled as a pure function of (seed, epoch); val keeps manifest order.
std::vector<std::size_t> split_order(const DatasetManifest& manifest, Split split, std::uint64_t seed,
                                     std::uint64_t epoch);

std::vector<TilePair> iterate_split(const DatasetManifest& manifest, Split split, std::uint64_t seed,
                                    std::uint64_t epoch);

}  // namespace flood
