#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "backmix/image.hpp"
#include "backmix/nn/layers.hpp"

namespace backmix {

/// Architecture description of the residual view classifier.
struct ModelSpec {
  int resolution = 64;
  std::array<int, 4> widths{16, 32, 64, 128};
  int num_classes = 4;
  /// Stage whose output feeds the activation maps; only the last stage (3) is supported.
  int cam_stage = 3;

  /// Spatial size of the final stage's feature map.
  int final_feature_size() const { return resolution / 8; }
  /// Throws ConfigError if the resolution cannot pass through the stage strides.
  void validate() const;

  /// Slim default for fast CPU experiments at 64x64.
  static ModelSpec desk_scale(int num_classes = 4);
  /// Wider network for 112x112 inputs.
  static ModelSpec full_width(int num_classes = 4);

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Anything that exposes a convolutional feature map followed by a
/// differentiable classification head. Activation maps only need this view.
class CamModel {
 public:
  virtual ~CamModel() = default;
  virtual int num_classes() const = 0;
  virtual int input_resolution() const = 0;
  /// Feature maps of the attribution target layer for a single-channel batch.
  virtual nn::Tensor target_features(const nn::Tensor& images) const = 0;
  /// Logits (batch x classes, row-major) computed from target-layer features.
  virtual std::vector<double> logits_from_features(const nn::Tensor& features) const = 0;
  /// d logit[n][cls] / d features for every sample n, same shape as `features`.
  virtual nn::Tensor logit_gradient(const nn::Tensor& features, int cls) const = 0;
};

/// Packs images into a (1, N, H, W) tensor.
nn::Tensor to_batch(std::span<const Image* const> images);
nn::Tensor to_batch(const std::vector<Image>& images);

/// Residual network: stem conv -> 4 stages x 2 basic blocks (stride-2 between
/// stages) -> global average pool -> linear head.
class ResNet final : public CamModel {
 public:
  ResNet(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  int num_classes() const override { return spec_.num_classes; }
  int input_resolution() const override { return spec_.resolution; }

  /// Inference-mode (running BN statistics) logits, row-major batch x classes.
  std::vector<double> logits(const nn::Tensor& images) const;

  nn::Tensor target_features(const nn::Tensor& images) const override;
  std::vector<double> logits_from_features(const nn::Tensor& features) const override;
  nn::Tensor logit_gradient(const nn::Tensor& features, int cls) const override;

  /// Training-mode forward (batch statistics); caches activations for backward().
  std::vector<double> forward_train(const nn::Tensor& images);
  /// Back-propagates d loss / d logits (batch x classes) through the last
  /// forward_train call, accumulating parameter gradients.
  void backward(std::span<const double> dlogits);

  void zero_grad();
  std::vector<nn::Param*> parameters();
  /// Parameters followed by BN running statistics, in a fixed order.
  std::vector<std::vector<float>*> state();
  std::vector<const std::vector<float>*> state() const;

  void save_state(std::ostream& out) const;
  void load_state(std::istream& in);

 private:
  struct Block {
    nn::Conv2d conv1, conv2, shortcut;
    nn::BatchNorm2d bn1, bn2, bn_shortcut;
    bool has_shortcut = false;
    // training caches
    nn::Tensor input, hidden, output;
    nn::BatchNormCache c1, c2, cs;
  };

  nn::Tensor block_eval(const Block& b, const nn::Tensor& x) const;
  nn::Tensor block_train(Block& b, const nn::Tensor& x);
  nn::Tensor block_backward(Block& b, nn::Tensor dy);
  nn::Tensor stem_eval(const nn::Tensor& x) const;

  ModelSpec spec_;
  nn::Conv2d stem_;
  nn::BatchNorm2d stem_bn_;
  std::vector<Block> blocks_;
  nn::Param head_weight_;  // classes x width
  nn::Param head_bias_;

  nn::Tensor stem_input_, stem_output_;
  nn::BatchNormCache stem_cache_;
  nn::Tensor features_;
};

}  // namespace backmix
