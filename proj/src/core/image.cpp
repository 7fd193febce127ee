#include "backmix/image.hpp"

#include <algorithm>
#include <cmath>

namespace backmix {

SectorMask::SectorMask(int height, int width, std::vector<std::uint8_t> grid)
    : height_(height), width_(width), grid_(std::move(grid)) {
  if (grid_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width))
    throw ShapeError("mask buffer does not match mask dimensions");
  for (auto& v : grid_) {
    if (v > 1) throw ShapeError("mask values must be 0 or 1");
  }
}

std::size_t SectorMask::count() const {
  return static_cast<std::size_t>(std::count(grid_.begin(), grid_.end(), std::uint8_t{1}));
}

double SectorMask::coverage() const {
  if (grid_.empty()) return 0.0;
  return static_cast<double>(count()) / static_cast<double>(grid_.size());
}

double mask_iou(const SectorMask& a, const SectorMask& b) {
  if (a.height() != b.height() || a.width() != b.width())
    throw ShapeError("mask_iou: mask shapes differ");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]) ? 1 : 0;
    uni += (a[i] || b[i]) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

float quantize_u8(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<float>(std::lround(c * 255.0f)) / 255.0f;
}

void quantize_u8(Image& image) {
  for (auto& p : image.pixels()) p = quantize_u8(p);
}

}  // namespace backmix
