#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace backmix {

/// Thrown for invalid configuration values (geometry, fractions, weights...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when two images/masks/maps that must align do not.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Single-channel float image, row-major, intensities nominally in [0,1].
class Image {
 public:
  Image() = default;
  Image(int height, int width, float fill = 0.0f)
      : height_(height), width_(width),
        pixels_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill) {
    if (height < 0 || width < 0) throw ShapeError("negative image dimensions");
  }
  Image(int height, int width, std::vector<float> pixels)
      : height_(height), width_(width), pixels_(std::move(pixels)) {
    if (pixels_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width))
      throw ShapeError("pixel buffer does not match image dimensions");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  float& at(int y, int x) { return pixels_[index(y, x)]; }
  float at(int y, int x) const { return pixels_[index(y, x)]; }
  float& operator[](std::size_t i) { return pixels_[i]; }
  float operator[](std::size_t i) const { return pixels_[i]; }

  std::span<float> pixels() { return pixels_; }
  std::span<const float> pixels() const { return pixels_; }

  bool same_shape(int height, int width) const { return height_ == height && width_ == width; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int y, int x) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> pixels_;
};

/// Binary sector/background mask; 1 marks sector pixels.
class SectorMask {
 public:
  SectorMask() = default;
  SectorMask(int height, int width, std::uint8_t fill = 0)
      : height_(height), width_(width),
        grid_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill ? 1 : 0) {}
  SectorMask(int height, int width, std::vector<std::uint8_t> grid);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return grid_.size(); }

  std::uint8_t at(int y, int x) const { return grid_[index(y, x)]; }
  void set(int y, int x, bool inside) { grid_[index(y, x)] = inside ? 1 : 0; }
  bool operator[](std::size_t i) const { return grid_[i] != 0; }

  std::span<const std::uint8_t> grid() const { return grid_; }

  /// Fraction of sector pixels.
  double coverage() const;
  std::size_t count() const;
  /// All-0 or all-1 masks carry no sector/background split.
  bool is_degenerate() const { const auto c = count(); return c == 0 || c == grid_.size(); }

  bool matches(const Image& image) const { return image.same_shape(height_, width_); }

  friend bool operator==(const SectorMask&, const SectorMask&) = default;

 private:
  std::size_t index(int y, int x) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> grid_;
};

/// Intersection-over-union of the 1-sets of two masks.
double mask_iou(const SectorMask& a, const SectorMask& b);

/// Quantize to the 8-bit grid used by on-disk images (v -> round(255 v) / 255).
float quantize_u8(float v);
void quantize_u8(Image& image);

}  // namespace backmix
