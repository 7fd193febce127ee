#pragma once

#include <span>
#include <string>
#include <vector>

#include "backmix/attribution.hpp"
#include "backmix/image.hpp"

namespace backmix {

/// Mean %E and %F over frames whose denominators are non-zero.
struct FocusReport {
  double energy_pct = 0.0;
  double focus_pct = 0.0;
  std::size_t n_frames = 0;
  std::size_t energy_evaluated = 0;
  std::size_t energy_skipped = 0;  // all-zero maps
  std::size_t focus_evaluated = 0;
  std::size_t focus_skipped = 0;  // no pixel above the threshold
};

/// Pixels with z strictly above this count as highly activated.
inline constexpr double kHighActivation = 0.5;

struct MetricValue {
  double percent = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

/// Share of activation mass inside the sector, averaged over frames (percent).
MetricValue energy_percentage(std::span<const Image> maps, std::span<const SectorMask> masks);
/// Share of highly activated pixels (z > 0.5) inside the sector, averaged
/// over frames (percent).
MetricValue focus_percentage(std::span<const Image> maps, std::span<const SectorMask> masks);

/// Per-frame ratios; nullopt-like NaN marks skipped frames.
double frame_energy_ratio(const Image& map, const SectorMask& mask);
double frame_focus_ratio(const Image& map, const SectorMask& mask);

FocusReport focus_report(const std::vector<ActivationMap>& maps, std::span<const SectorMask> masks);

struct ClassStats {
  double precision = 0.0;  // percent
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct ClassificationReport {
  double accuracy = 0.0;  // percent
  double precision = 0.0;  // macro, percent
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<ClassStats> per_class;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

/// Accuracy plus macro precision/recall/F1. Classes never predicted get
/// precision 0. Throws on empty or mismatched input.
ClassificationReport classification_metrics(std::span<const int> predictions, std::span<const int> labels,
                                             int num_classes);

}  // namespace backmix
