#include "laylens/mask.hpp"

#include <algorithm>

namespace laylens {

BinaryMask::BinaryMask(int w, int h, bool fill) : width(w), height(h) {
  if (w < 0 || h < 0) throw ValidationError("mask: negative dimensions");
  bits.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill);
}

MaskRLE rle_encode(const BinaryMask& mask) {
  std::vector<std::uint32_t> runs;
  bool current = false;
  std::uint32_t run = 0;
  for (bool b : mask.bits) {
    if (b != current) {
      runs.push_back(run);
      current = b;
      run = 0;
    }
    ++run;
  }
  runs.push_back(run);
  return MaskRLE(mask.width, mask.height, std::move(runs));
}

BinaryMask rle_decode(const MaskRLE& rle) {
  BinaryMask out(rle.width(), rle.height());
  std::size_t pos = 0;
  bool fg = false;
  for (auto len : rle.runs()) {
    if (fg) std::fill_n(out.bits.begin() + static_cast<std::ptrdiff_t>(pos), len, true);
    pos += len;
    fg = !fg;
  }
  return out;
}

std::optional<BBox> bbox_of(const BinaryMask& mask) {
  std::optional<BBox> box;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      if (!box) {
        box = BBox{x, y, x, y};
        continue;
      }
      box->x_min = std::min(box->x_min, x);
      box->x_max = std::max(box->x_max, x);
      box->y_max = y;
    }
  }
  return box;
}

std::size_t mask_area(const BinaryMask& mask) {
  return static_cast<std::size_t>(std::count(mask.bits.begin(), mask.bits.end(), true));
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.width != b.width || a.height != b.height) throw ValidationError("mask: dimension mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += a.bits[i] && b.bits[i];
    uni += a.bits[i] || b.bits[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask dilate(const BinaryMask& mask, int radius) {
  BinaryMask cur = mask;
  for (int r = 0; r < radius; ++r) {
    BinaryMask next = cur;
    for (int y = 0; y < cur.height; ++y) {
      for (int x = 0; x < cur.width; ++x) {
        if (!cur.at(x, y)) continue;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            int nx = x + dx, ny = y + dy;
            if (nx >= 0 && ny >= 0 && nx < cur.width && ny < cur.height) next.set(nx, ny);
          }
        }
      }
    }
    cur = std::move(next);
  }
  return cur;
}

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
  if (a.width != b.width || a.height != b.height) throw ValidationError("mask: dimension mismatch");
  BinaryMask out = a;
  for (std::size_t i = 0; i < b.bits.size(); ++i)
    if (b.bits[i]) out.bits[i] = true;
  return out;
}

std::uint8_t blend_channel(std::uint8_t src, std::uint8_t hl, int pct) {
  int num = pct * hl + (100 - pct) * src;
  return static_cast<std::uint8_t>((num + 50) / 100);
}

Raster compose_overlay_raster(const Raster& image, const std::vector<RegionFinding>& findings,
                              const OverlayStyle& style) {
  Raster out = image;
  if (findings.empty()) return out;
  BinaryMask fill(image.width, image.height);
  for (const auto& f : findings) {
    if (f.mask.width() != image.width || f.mask.height() != image.height)
      throw ValidationError("overlay: mask dimension mismatch");
    fill = mask_union(fill, rle_decode(f.mask));
  }
  BinaryMask ring = dilate(fill, style.outline_px);
  auto paint = [&](int x, int y, int pct) {
    Rgba c = out.at(x, y);
    for (int ch = 0; ch < 3; ++ch) c[ch] = blend_channel(c[ch], style.highlight[ch], pct);
    out.set(x, y, c);
  };
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (fill.at(x, y))
        paint(x, y, style.fill_opacity_pct);
      else if (ring.at(x, y))
        paint(x, y, style.outline_opacity_pct);
    }
  }
  return out;
}

Bytes compose_overlay(const Raster& image, const std::vector<RegionFinding>& findings,
                      const OverlayStyle& style) {
  return encode_png(compose_overlay_raster(image, findings, style));
}

}  // namespace laylens
