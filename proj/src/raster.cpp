#include "flood/raster.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "flood/errors.hpp"

namespace flood {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return v;
}

}  // namespace

const char* to_string(RasterKind kind) {
  switch (kind) {
    case RasterKind::backscatter_db:
      return "backscatter-dB";
    case RasterKind::normalized:
      return "normalized";
    case RasterKind::label:
      return "label";
  }
  return "unknown";
}

Raster::Raster(RasterKind k, std::uint32_t c, std::uint32_t h, std::uint32_t w, float fill)
    : kind(k), channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

Raster Raster::extract_band(std::uint32_t c) const {
  if (c >= channels) throw DimensionError("band " + std::to_string(c) + " out of range");
  Raster out(kind, 1, height, width);
  auto src = band(c);
  std::copy(src.begin(), src.end(), out.data.begin());
  return out;
}

std::vector<std::uint8_t> encode_bras(const Raster& raster) {
  if (raster.channels == 0 || raster.height == 0 || raster.width == 0) {
    throw DimensionError("BRAS rasters need positive extents");
  }
  if (raster.data.size() != raster.size()) throw DimensionError("raster payload does not match its extents");
  for (float v : raster.data) {
    if (!std::isfinite(v)) throw NumericError("BRAS payload must be finite");
  }
  static_assert(std::endian::native == std::endian::little, "BRAS writer assumes a little-endian host");
  std::vector<std::uint8_t> out;
  out.reserve(kBrasHeaderSize + raster.data.size() * 4);
  out.insert(out.end(), {'B', 'R', 'A', 'S'});
  out.push_back(kBrasVersion);
  out.push_back(1);  // f32
  out.push_back(static_cast<std::uint8_t>(raster.kind));
  out.push_back(0);
  put_u32(out, raster.channels);
  put_u32(out, raster.height);
  put_u32(out, raster.width);
  out.push_back(0);
  const auto* payload = reinterpret_cast<const std::uint8_t*>(raster.data.data());
  out.insert(out.end(), payload, payload + raster.data.size() * 4);
  return out;
}

Raster decode_bras(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "BRAS", 4) != 0) {
    throw FormatError("bad magic: expected \"BRAS\"", 0);
  }
  if (bytes.size() < kBrasHeaderSize) throw FormatError("truncated BRAS header", bytes.size());
  if (bytes[4] != kBrasVersion) {
    throw FormatError("unsupported BRAS version " + std::to_string(bytes[4]), 4);
  }
  if (bytes[5] != 1) throw FormatError("unsupported BRAS dtype " + std::to_string(bytes[5]), 5);
  if (bytes[6] > 2) throw FormatError("unknown BRAS raster kind " + std::to_string(bytes[6]), 6);
  Raster r;
  r.kind = static_cast<RasterKind>(bytes[6]);
  r.channels = get_u32(bytes, 8);
  r.height = get_u32(bytes, 12);
  r.width = get_u32(bytes, 16);
  if (r.channels == 0 || r.height == 0 || r.width == 0) throw FormatError("zero raster extent", 8);
  const std::size_t payload = r.size() * 4;
  if (bytes.size() - kBrasHeaderSize < payload) {
    throw FormatError("truncated BRAS payload: expected " + std::to_string(payload) + " bytes", bytes.size());
  }
  if (bytes.size() - kBrasHeaderSize > payload) {
    throw FormatError("trailing bytes after BRAS payload", kBrasHeaderSize + payload);
  }
  r.data.resize(r.size());
  std::memcpy(r.data.data(), bytes.data() + kBrasHeaderSize, payload);
  return r;
}

void write_bras(const Raster& raster, const std::filesystem::path& path) {
  const auto bytes = encode_bras(raster);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Raster read_bras(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_bras(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

}  // namespace flood
