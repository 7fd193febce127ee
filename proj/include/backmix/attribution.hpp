#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "backmix/data.hpp"
#include "backmix/image.hpp"
#include "backmix/model.hpp"

namespace backmix {

/// Per-pixel importance scores in [0,1] at input resolution.
struct ActivationMap {
  Image scores;
  /// The rectified map was identically zero; scores are all zero.
  bool degenerate = false;
};

/// Low-resolution rectified map before upsampling and normalization.
struct RawCam {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // row-major, >= 0
  std::vector<double> channel_weights;
};

/// Channel weights = spatially averaged d logit[cls] / d features; map =
/// ReLU(sum_k weight_k * feature_k). `features` must hold a single sample.
RawCam raw_gradcam(const CamModel& model, const nn::Tensor& features, int cls);

/// Bilinear resize (half-pixel centers, edge clamped).
std::vector<double> upsample_bilinear(std::span<const double> src, int src_h, int src_w, int dst_h, int dst_w);

/// Gradient-weighted class activation map for one image, normalized by its
/// maximum. Throws std::out_of_range for an invalid class.
ActivationMap gradcam(const CamModel& model, const Image& image, int target_class);

class AttributionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Maps for a batch of frames, targeting the predicted class (or the true
/// label when use_predicted_class is false). Errors name the frame index.
std::vector<ActivationMap> gradcam_batch(const CamModel& model, const std::vector<Frame>& frames,
                                         bool use_predicted_class);

/// Writes the map as an 8-bit grayscale PGM.
void write_activation_map(const std::filesystem::path& path, const ActivationMap& map);
/// Writes a color overlay (jet-like colormap blended over the grayscale input) as PPM.
void write_overlay(const std::filesystem::path& path, const Image& image, const ActivationMap& map,
                   double alpha = 0.5);

}  // namespace backmix
