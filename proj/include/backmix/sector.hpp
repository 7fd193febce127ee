#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "backmix/image.hpp"
#include "backmix/pgm.hpp"

namespace backmix {

/// Zero-in-painted sector and background parts of a frame.
struct Decomposition {
  Image sector;      // image * mask
  Image background;  // image * (1 - mask)
};

/// Splits an image into sector and background; sector + background == image.
Decomposition decompose(const Image& image, const SectorMask& mask);

struct MaskEstimatorConfig {
  /// Use Otsu's threshold when true, else `fixed_threshold` (in [0,1]).
  bool otsu = true;
  double fixed_threshold = 0.05;
  int closing_iterations = 2;
  /// Replace the component by its convex hull; scan sectors are convex, and
  /// dark structures touching the fan edge would otherwise be cut out.
  bool convex_hull = true;
};

struct MaskEstimate {
  SectorMask mask;
  /// Set when the estimate is degenerate (e.g. the whole image is foreground).
  std::optional<std::string> warning;
};

class NoSectorFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Classical sector estimator: threshold -> 3x3 closing -> largest
/// 4-connected component -> hole filling (or convex hull). Throws NoSectorFound when the
/// thresholded foreground is empty.
MaskEstimate estimate_sector_mask(const Image& image, const MaskEstimatorConfig& config = {});

/// Otsu threshold on the 8-bit histogram, returned in [0,1]; pixels strictly
/// above it are foreground.
double otsu_threshold(const Image& image);

/// Mask files are 8-bit PGM with 0 = background and 255 = sector.
SectorMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const SectorMask& mask);

class MaskFormatError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace backmix
