#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace flood {

enum class RasterKind : std::uint8_t { backscatter_db = 0, normalized = 1, label = 2 };

const char* to_string(RasterKind kind);

/// C x H x W grid of floats, channel-major then row-major.
struct Raster {
  RasterKind kind = RasterKind::backscatter_db;
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> data;

  Raster() = default;
  Raster(RasterKind k, std::uint32_t c, std::uint32_t h, std::uint32_t w, float fill = 0.0f);

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return channels * plane(); }
  std::size_t index(std::uint32_t c, std::uint32_t row, std::uint32_t col) const {
    return c * plane() + static_cast<std::size_t>(row) * width + col;
  }
  float& at(std::uint32_t c, std::uint32_t row, std::uint32_t col) { return data[index(c, row, col)]; }
  float at(std::uint32_t c, std::uint32_t row, std::uint32_t col) const { return data[index(c, row, col)]; }

  std::span<float> band(std::uint32_t c) { return {data.data() + c * plane(), plane()}; }
  std::span<const float> band(std::uint32_t c) const { return {data.data() + c * plane(), plane()}; }
  Raster extract_band(std::uint32_t c) const;

  bool same_grid(const Raster& other) const { return height == other.height && width == other.width; }
  bool operator==(const Raster&) const = default;
};

// BRAS: "BRAS", u8 version=1, u8 dtype=1 (f32), u8 kind, u8 0, u32 channels,
// u32 height, u32 width, u8 0, then the payload. Little-endian throughout.
inline constexpr std::size_t kBrasHeaderSize = 21;
inline constexpr std::uint8_t kBrasVersion = 1;

std::vector<std::uint8_t> encode_bras(const Raster& raster);
Raster decode_bras(std::span<const std::uint8_t> bytes);

void write_bras(const Raster& raster, const std::filesystem::path& path);
Raster read_bras(const std::filesystem::path& path);

}  // namespace flood
