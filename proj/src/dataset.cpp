#include "flood/dataset.hpp"

#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "flood/errors.hpp"
#include "flood/rng.hpp"

namespace flood {

namespace fs = std::filesystem;

const char* to_string(Split split) { return split == Split::train ? "train" : "val"; }

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  throw UsageError("unknown split '" + text + "' (expected train or val)");
}

void TilePair::validate() const {
  if (pre.channels != 2 || post.channels != 2) {
    throw DimensionError("tile " + id + ": pre and post rasters must have 2 bands (VV, VH)");
  }
  if (label.channels != 1) throw DimensionError("tile " + id + ": label raster must have 1 band");
  if (!pre.same_grid(post) || !pre.same_grid(label)) {
    throw DimensionError("tile " + id + ": pre, post and label rasters differ in size");
  }
  if (label.kind != RasterKind::label) throw ValidationError("tile " + id + ": label raster has kind " +
                                                             to_string(label.kind));
}

std::size_t DatasetManifest::count(Split split) const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.split == split ? 1 : 0;
  return n;
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path candidate(p);
    return candidate.is_absolute() ? candidate : base / candidate;
  };

  DatasetManifest manifest;
  std::set<std::string> seen;
  std::vector<std::string> missing;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto pos = line.find("seed=");
      if (pos != std::string::npos) manifest.seed = std::stoull(line.substr(pos + 5));
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 5) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected 5 tab-separated fields, got " +
                            std::to_string(fields.size()));
    }
    ManifestEntry entry;
    entry.id = fields[0];
    try {
      entry.split = parse_split(fields[1]);
    } catch (const UsageError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(entry.id).second) {
      bool cross_split = false;
      for (const auto& prior : manifest.entries) {
        if (prior.id == entry.id && prior.split != entry.split) cross_split = true;
      }
      throw ValidationError(cross_split ? "id '" + entry.id + "' appears in both train and val splits"
                                        : "duplicate id '" + entry.id + "' in manifest");
    }
    entry.pre = resolve(fields[2]);
    entry.post = resolve(fields[3]);
    entry.label = resolve(fields[4]);
    for (const fs::path* p : {&entry.pre, &entry.post, &entry.label}) {
      if (!fs::exists(*p)) missing.push_back(entry.id + ": " + p->string());
    }
    manifest.entries.push_back(std::move(entry));
  }
  if (!missing.empty()) {
    std::string msg = "manifest references missing files:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw ValidationError(msg);
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "# seed=" << manifest.seed << '\n';
  const fs::path base = fs::absolute(path).parent_path();
  auto rel = [&](const fs::path& p) { return fs::relative(fs::absolute(p), base).generic_string(); };
  for (const auto& e : manifest.entries) {
    out << e.id << '\t' << to_string(e.split) << '\t' << rel(e.pre) << '\t' << rel(e.post) << '\t' << rel(e.label)
        << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

TilePair load_tile(const ManifestEntry& entry) {
  TilePair tile{entry.id, read_bras(entry.pre), read_bras(entry.post), read_bras(entry.label)};
  tile.validate();
  return tile;
}

std::vector<std::size_t> split_order(const DatasetManifest& manifest, Split split, std::uint64_t seed,
                                     std::uint64_t epoch) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    if (manifest.entries[i].split == split) order.push_back(i);
  }
  if (order.empty()) throw UsageError(std::string("split '") + to_string(split) + "' is empty");
  if (split == Split::val) return order;
  std::mt19937_64 rng(derive_seed(seed, epoch, 0x5348554646ULL));
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[uniform_index(rng, i + 1)]);
  }
  return order;
}

std::vector<TilePair> iterate_split(const DatasetManifest& manifest, Split split, std::uint64_t seed,
                                    std::uint64_t epoch) {
  std::vector<TilePair> tiles;
  for (std::size_t i : split_order(manifest, split, seed, epoch)) tiles.push_back(load_tile(manifest.entries[i]));
  return tiles;
}

}  // namespace flood
