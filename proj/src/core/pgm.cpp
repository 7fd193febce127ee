#include "backmix/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

namespace backmix {
namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string token;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      if (!token.empty()) break;
    } else {
      token.push_back(static_cast<char>(c));
    }
    c = in.get();
  }
  return token;
}

int parse_header_int(std::istream& in, const std::filesystem::path& path) {
  const auto token = next_token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(token, &used);
    if (used != token.size() || v < 0) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw IoError("corrupt PGM header in " + path.string());
  }
}

}  // namespace

GrayRaster read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image file: " + path.string());
  if (next_token(in) != "P5") throw IoError("not a binary PGM (P5) file: " + path.string());
  GrayRaster r;
  r.width = parse_header_int(in, path);
  r.height = parse_header_int(in, path);
  const int maxval = parse_header_int(in, path);
  if (maxval != 255) throw IoError("unsupported PGM maxval (need 255): " + path.string());
  r.data.resize(static_cast<std::size_t>(r.width) * static_cast<std::size_t>(r.height));
  in.read(reinterpret_cast<char*>(r.data.data()), static_cast<std::streamsize>(r.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(r.data.size()))
    throw IoError("truncated PGM pixel data: " + path.string());
  return r;
}

void write_pgm(const std::filesystem::path& path, const GrayRaster& raster) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image file: " + path.string());
  out << "P5\n" << raster.width << ' ' << raster.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(raster.data.data()), static_cast<std::streamsize>(raster.data.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Image raster_to_image(const GrayRaster& raster) {
  std::vector<float> px(raster.data.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(raster.data[i]) / 255.0f;
  return Image(raster.height, raster.width, std::move(px));
}

GrayRaster image_to_raster(const Image& image) {
  GrayRaster r{image.height(), image.width(), std::vector<std::uint8_t>(image.size())};
  for (std::size_t i = 0; i < image.size(); ++i) {
    const float v = std::clamp(image[i], 0.0f, 1.0f);
    r.data[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return r;
}

void write_ppm(const std::filesystem::path& path, int height, int width, const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * 3)
    throw ShapeError("write_ppm: buffer size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image file: " + path.string());
  out << "P6\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
}

}  // namespace backmix
