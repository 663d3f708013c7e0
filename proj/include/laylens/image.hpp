#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "laylens/digest.hpp"

namespace laylens {

using Rgba = std::array<std::uint8_t, 4>;

// 8-bit RGBA raster, row-major. Every decoded image is widened to this.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 4

  Raster() = default;
  Raster(int w, int h, Rgba fill = {0, 0, 0, 255});

  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
            static_cast<std::size_t>(x)) * 4;
  }
  Rgba at(int x, int y) const;
  void set(int x, int y, Rgba c);

  bool operator==(const Raster&) const = default;
};

inline constexpr std::string_view kMediaPng = "image/png";
inline constexpr std::string_view kMediaJpeg = "image/jpeg";

/// Media type from magic bytes; nullopt if neither PNG nor JPEG.
std::optional<std::string> sniff_media_type(std::span<const std::uint8_t> bytes);

/// Decodes PNG or JPEG bytes. Throws DecodeError.
Raster decode_image(std::span<const std::uint8_t> bytes);

/// Encodes as 8-bit RGBA, non-interlaced PNG. Output is deterministic.
Bytes encode_png(const Raster& image);

}  // namespace laylens
