#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "backmix/data.hpp"
#include "backmix/image.hpp"
#include "backmix/rng.hpp"

namespace backmix {

struct StandardAugmentConfig {
  bool enabled = true;
  double max_rotation_deg = 30.0;
  double max_brightness_delta = 0.2;
  Range contrast{0.8, 1.2};
  double flip_probability = 0.5;
};

/// One draw of the standard augmentation.
struct StandardAugmentParams {
  double angle_deg = 0.0;
  bool flip = false;
  double brightness = 0.0;
  double contrast = 1.0;

  static StandardAugmentParams identity() { return {}; }
};

StandardAugmentParams sample_standard_params(const StandardAugmentConfig& config, Rng& rng);

struct AugmentedImage {
  Image image;
  std::optional<SectorMask> mask;
};

/// Rotation about the image center (bilinear for the image, nearest for the
/// mask, zero fill), then horizontal flip, then v * contrast + brightness
/// clamped to [0,1]. The mask receives the same geometric transform.
AugmentedImage apply_standard(const Image& image, const SectorMask* mask, const StandardAugmentParams& params);

inline AugmentedImage standard_augment(const Image& image, const SectorMask* mask,
                                       const StandardAugmentConfig& config, Rng& rng) {
  return apply_standard(image, mask, config.enabled ? sample_standard_params(config, rng)
                                                    : StandardAugmentParams::identity());
}

/// Sector of frame i composited over the zero-in-painted background of frame j:
/// out = img_i * m_i + (img_j * (1 - m_j)) * (1 - m_i).
Image backmix(const Image& frame_i, const SectorMask& mask_i, const Image& frame_j, const SectorMask& mask_j);

enum class BackgroundKind { None, BackMix, Black, Noise, Shuffle };

std::string to_string(BackgroundKind kind);
BackgroundKind parse_background_kind(const std::string& s);

/// Replaces background pixels (mask == 0) with zeros, U[0,1] noise, or a
/// random permutation of the existing background values. Sector pixels are
/// untouched. Only Black, Noise and Shuffle are valid here.
Image baseline_background(const Image& image, const SectorMask& mask, BackgroundKind kind, Rng& rng);

/// Background source for BackMix, built from a supervised training example.
struct PoolEntry {
  std::size_t source_id = 0;
  Image background;  // zero-in-painted
  SectorMask mask;
};

/// Which training examples carry masks (the supervised fraction f) and the
/// background pool drawn from them. Immutable after construction.
class AugmentationPlan {
 public:
  AugmentationPlan() = default;

  double fraction() const { return fraction_; }
  BackgroundKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }
  const StandardAugmentConfig& standard() const { return standard_; }
  std::size_t train_size() const { return is_supervised_.size(); }
  const std::vector<std::size_t>& supervised_ids() const { return supervised_ids_; }
  bool is_supervised(std::size_t id) const { return is_supervised_.at(id) != 0; }
  const std::vector<PoolEntry>& background_pool() const { return pool_; }

  friend AugmentationPlan make_plan_with_subset(const std::vector<Frame>& train, std::vector<std::size_t> subset,
                                                double fraction, BackgroundKind kind, std::uint64_t seed,
                                                const StandardAugmentConfig& standard);

 private:
  double fraction_ = 0.0;
  BackgroundKind kind_ = BackgroundKind::None;
  std::uint64_t seed_ = 0;
  StandardAugmentConfig standard_;
  std::vector<std::size_t> supervised_ids_;  // sorted
  std::vector<std::uint8_t> is_supervised_;
  std::vector<PoolEntry> pool_;
};

/// round(f * n) for the supervised subset size.
std::size_t supervised_count(double fraction, std::size_t train_size);

/// k pairwise-disjoint random subsets of size round(f * n); subset 0 is the
/// one make_plan picks for the same seed. Throws ConfigError when k * f > 1.
std::vector<std::vector<std::size_t>> disjoint_subsets(std::size_t train_size, double fraction, int k,
                                                       std::uint64_t seed);

/// Plan over a random subset of size round(f * n) chosen with `seed`.
AugmentationPlan make_plan(const std::vector<Frame>& train, double fraction, BackgroundKind kind,
                           std::uint64_t seed, const StandardAugmentConfig& standard = {});

AugmentationPlan make_plan_with_subset(const std::vector<Frame>& train, std::vector<std::size_t> subset,
                                       double fraction, BackgroundKind kind, std::uint64_t seed,
                                       const StandardAugmentConfig& standard = {});

struct AugmentedExample {
  std::size_t id = 0;
  Image image;
  int label = 0;
  /// Background was replaced (BackMix or a baseline fill); drives loss weighting.
  bool is_backmixed = false;
  /// Pool source id used by BackMix, for auditing.
  std::optional<std::size_t> background_source;
};

/// Augments every training example for one epoch, in id order. Each example
/// gets standard augmentation; supervised examples then get their background
/// replaced according to the plan's kind. BackMix draws a pool background
/// other than the example's own, independently per epoch.
std::vector<AugmentedExample> apply_epoch(const AugmentationPlan& plan, const std::vector<Frame>& train,
                                          std::uint64_t epoch);

}  // namespace backmix
