#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "backmix/image.hpp"

namespace backmix {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raw 8-bit grayscale raster as stored in binary PGM (P5) files.
struct GrayRaster {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;
};

GrayRaster read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayRaster& raster);

/// Image <-> 8-bit raster (v/255).
Image raster_to_image(const GrayRaster& raster);
GrayRaster image_to_raster(const Image& image);

inline Image read_image(const std::filesystem::path& path) { return raster_to_image(read_pgm(path)); }
inline void write_image(const std::filesystem::path& path, const Image& image) {
  write_pgm(path, image_to_raster(image));
}

/// Binary PPM (P6); rgb holds height*width*3 bytes.
void write_ppm(const std::filesystem::path& path, int height, int width, const std::vector<std::uint8_t>& rgb);

}  // namespace backmix
