#pragma once

#include <optional>
#include <vector>

#include "laylens/domain.hpp"
#include "laylens/image.hpp"

namespace laylens {

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<bool> bits;  // row-major, width * height

  BinaryMask() = default;
  BinaryMask(int w, int h, bool fill = false);

  bool at(int x, int y) const {
    return bits[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
  }
  void set(int x, int y, bool v = true) {
    bits[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)] = v;
  }

  bool operator==(const BinaryMask&) const = default;
};

MaskRLE rle_encode(const BinaryMask& mask);
/// Inverse of rle_encode. MaskRLE already enforces its invariants on construction.
BinaryMask rle_decode(const MaskRLE& rle);

std::optional<BBox> bbox_of(const BinaryMask& mask);
std::size_t mask_area(const BinaryMask& mask);
/// |a ∩ b| / |a ∪ b|, 1.0 when both are empty. Throws ValidationError on
/// dimension mismatch.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

/// Pixels within Chebyshev distance `radius` of the foreground (3×3 square
/// dilation applied `radius` times).
BinaryMask dilate(const BinaryMask& mask, int radius);
BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b);

struct OverlayStyle {
  Rgba highlight{255, 64, 64, 255};
  // Opacities in percent so the blend stays in integer arithmetic.
  int fill_opacity_pct = 35;
  int outline_opacity_pct = 90;
  int outline_px = 2;
};

/// round(α·hl + (1−α)·src) with half-up rounding, α = pct / 100.
std::uint8_t blend_channel(std::uint8_t src, std::uint8_t hl, int pct);

/// Highlights the union of all finding masks and a ring of `outline_px`
/// around it. Alpha is preserved; everything else is left bit-identical.
Raster compose_overlay_raster(const Raster& image, const std::vector<RegionFinding>& findings,
                              const OverlayStyle& style = {});
Bytes compose_overlay(const Raster& image, const std::vector<RegionFinding>& findings,
                      const OverlayStyle& style = {});

}  // namespace laylens
