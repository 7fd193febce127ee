#include "backmix/model.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

namespace backmix {

void ModelSpec::validate() const {
  if (num_classes < 2) throw ConfigError("model: need at least 2 classes");
  for (int w : widths)
    if (w <= 0) throw ConfigError("model: channel widths must be positive");
  if (cam_stage != 3) throw ConfigError("model: activation maps are taken from the final stage (3)");
  if (resolution <= 0 || resolution % 8 != 0)
    throw ConfigError("model: resolution " + std::to_string(resolution) +
                      " is not divisible by the total stage stride 8");
  if (final_feature_size() < 4)
    throw ConfigError("model: resolution " + std::to_string(resolution) +
                      " gives a final feature map smaller than 4x4");
}

ModelSpec ModelSpec::desk_scale(int num_classes) {
  ModelSpec s;
  s.resolution = 64;
  s.widths = {8, 16, 32, 64};
  s.num_classes = num_classes;
  return s;
}

ModelSpec ModelSpec::full_width(int num_classes) {
  ModelSpec s;
  s.resolution = 112;
  s.widths = {64, 128, 256, 512};
  s.num_classes = num_classes;
  return s;
}

nn::Tensor to_batch(std::span<const Image* const> images) {
  if (images.empty()) throw ShapeError("to_batch: empty batch");
  const int h = images.front()->height();
  const int w = images.front()->width();
  nn::Tensor t(1, static_cast<int>(images.size()), h, w);
  float* dst = t.data.data();
  for (const Image* img : images) {
    if (!img->same_shape(h, w)) throw ShapeError("to_batch: images differ in shape");
    std::copy(img->pixels().begin(), img->pixels().end(), dst);
    dst += img->size();
  }
  return t;
}

nn::Tensor to_batch(const std::vector<Image>& images) {
  std::vector<const Image*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& img : images) ptrs.push_back(&img);
  return to_batch(std::span<const Image* const>(ptrs));
}

ResNet::ResNet(const ModelSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  Rng rng = make_rng(seed, {stream::kInit});
  stem_ = nn::Conv2d("stem.conv", 1, spec_.widths[0], 3, 1);
  stem_bn_ = nn::BatchNorm2d("stem.bn", spec_.widths[0]);
  stem_.init(rng);
  int in = spec_.widths[0];
  for (int stage = 0; stage < 4; ++stage) {
    const int out = spec_.widths[stage];
    for (int i = 0; i < 2; ++i) {
      const int stride = (stage > 0 && i == 0) ? 2 : 1;
      const std::string prefix = "stage" + std::to_string(stage) + ".block" + std::to_string(i);
      Block b;
      b.conv1 = nn::Conv2d(prefix + ".conv1", in, out, 3, stride);
      b.bn1 = nn::BatchNorm2d(prefix + ".bn1", out);
      b.conv2 = nn::Conv2d(prefix + ".conv2", out, out, 3, 1);
      b.bn2 = nn::BatchNorm2d(prefix + ".bn2", out);
      b.conv1.init(rng);
      b.conv2.init(rng);
      if (stride != 1 || in != out) {
        b.has_shortcut = true;
        b.shortcut = nn::Conv2d(prefix + ".shortcut", in, out, 1, stride);
        b.bn_shortcut = nn::BatchNorm2d(prefix + ".bn_shortcut", out);
        b.shortcut.init(rng);
      }
      blocks_.push_back(std::move(b));
      in = out;
    }
  }
  head_weight_ = nn::Param("head.weight", static_cast<std::size_t>(spec_.num_classes) * in);
  head_bias_ = nn::Param("head.bias", static_cast<std::size_t>(spec_.num_classes));
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& w : head_weight_.value) w = static_cast<float>(dist(rng));
  for (auto& b : head_bias_.value) b = static_cast<float>(dist(rng));
}

nn::Tensor ResNet::stem_eval(const nn::Tensor& x) const {
  nn::Tensor y = stem_bn_.forward_eval(stem_.forward(x));
  nn::relu_inplace(y);
  return y;
}

nn::Tensor ResNet::block_eval(const Block& b, const nn::Tensor& x) const {
  nn::Tensor h = b.bn1.forward_eval(b.conv1.forward(x));
  nn::relu_inplace(h);
  nn::Tensor y = b.bn2.forward_eval(b.conv2.forward(h));
  if (b.has_shortcut) {
    nn::add_inplace(y, b.bn_shortcut.forward_eval(b.shortcut.forward(x)));
  } else {
    nn::add_inplace(y, x);
  }
  nn::relu_inplace(y);
  return y;
}

nn::Tensor ResNet::block_train(Block& b, const nn::Tensor& x) {
  b.input = x;
  b.hidden = b.bn1.forward_train(b.conv1.forward(x), b.c1);
  nn::relu_inplace(b.hidden);
  nn::Tensor y = b.bn2.forward_train(b.conv2.forward(b.hidden), b.c2);
  if (b.has_shortcut) {
    nn::add_inplace(y, b.bn_shortcut.forward_train(b.shortcut.forward(x), b.cs));
  } else {
    nn::add_inplace(y, x);
  }
  nn::relu_inplace(y);
  b.output = y;
  return y;
}

nn::Tensor ResNet::block_backward(Block& b, nn::Tensor dy) {
  nn::relu_backward_inplace(b.output, dy);
  nn::Tensor dx;
  if (b.has_shortcut) {
    dx = b.shortcut.backward(b.input, b.bn_shortcut.backward(b.cs, dy));
  } else {
    dx = dy;
  }
  nn::Tensor dh = b.conv2.backward(b.hidden, b.bn2.backward(b.c2, dy));
  nn::relu_backward_inplace(b.hidden, dh);
  nn::add_inplace(dx, b.conv1.backward(b.input, b.bn1.backward(b.c1, dh)));
  return dx;
}

nn::Tensor ResNet::target_features(const nn::Tensor& images) const {
  if (images.channels != 1 || images.height != spec_.resolution || images.width != spec_.resolution)
    throw ShapeError("ResNet: expected 1-channel " + std::to_string(spec_.resolution) + "x" +
                     std::to_string(spec_.resolution) + " input, got " + std::to_string(images.height) +
                     "x" + std::to_string(images.width));
  nn::Tensor x = stem_eval(images);
  for (const auto& b : blocks_) x = block_eval(b, x);
  return x;
}

std::vector<double> ResNet::logits_from_features(const nn::Tensor& features) const {
  const int c = features.channels;
  const int n = features.batch;
  const int k = spec_.num_classes;
  const std::size_t hw = features.image_size();
  std::vector<double> pooled(static_cast<std::size_t>(n) * c);
  for (int ch = 0; ch < c; ++ch) {
    const float* src = features.channel(ch);
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t p = 0; p < hw; ++p) s += src[i * hw + p];
      pooled[static_cast<std::size_t>(i) * c + ch] = s / static_cast<double>(hw);
    }
  }
  std::vector<double> out(static_cast<std::size_t>(n) * k);
  for (int i = 0; i < n; ++i) {
    for (int cls = 0; cls < k; ++cls) {
      double s = head_bias_.value[cls];
      for (int ch = 0; ch < c; ++ch)
        s += static_cast<double>(head_weight_.value[static_cast<std::size_t>(cls) * c + ch]) *
             pooled[static_cast<std::size_t>(i) * c + ch];
      out[static_cast<std::size_t>(i) * k + cls] = s;
    }
  }
  return out;
}

nn::Tensor ResNet::logit_gradient(const nn::Tensor& features, int cls) const {
  if (cls < 0 || cls >= spec_.num_classes) throw std::out_of_range("logit_gradient: class index out of range");
  nn::Tensor g(features.channels, features.batch, features.height, features.width);
  const float inv_hw = 1.0f / static_cast<float>(features.image_size());
  for (int ch = 0; ch < features.channels; ++ch) {
    const float v = head_weight_.value[static_cast<std::size_t>(cls) * features.channels + ch] * inv_hw;
    float* dst = g.channel(ch);
    std::fill(dst, dst + g.plane(), v);
  }
  return g;
}

std::vector<double> ResNet::logits(const nn::Tensor& images) const {
  return logits_from_features(target_features(images));
}

std::vector<double> ResNet::forward_train(const nn::Tensor& images) {
  if (images.channels != 1 || images.height != spec_.resolution || images.width != spec_.resolution)
    throw ShapeError("ResNet: input resolution mismatch");
  stem_input_ = images;
  stem_output_ = stem_bn_.forward_train(stem_.forward(images), stem_cache_);
  nn::relu_inplace(stem_output_);
  nn::Tensor x = stem_output_;
  for (auto& b : blocks_) x = block_train(b, x);
  features_ = std::move(x);
  return logits_from_features(features_);
}

void ResNet::backward(std::span<const double> dlogits) {
  const int c = features_.channels;
  const int n = features_.batch;
  const int k = spec_.num_classes;
  if (dlogits.size() != static_cast<std::size_t>(n) * k) throw ShapeError("ResNet::backward: gradient shape");
  const std::size_t hw = features_.image_size();

  // head: logits = W * pooled + b
  std::vector<double> dpooled(static_cast<std::size_t>(n) * c, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int cls = 0; cls < k; ++cls) {
      const double g = dlogits[static_cast<std::size_t>(i) * k + cls];
      head_bias_.grad[cls] += static_cast<float>(g);
      for (int ch = 0; ch < c; ++ch) {
        const float* src = features_.channel(ch) + i * hw;
        double pooled = 0.0;
        for (std::size_t p = 0; p < hw; ++p) pooled += src[p];
        pooled /= static_cast<double>(hw);
        head_weight_.grad[static_cast<std::size_t>(cls) * c + ch] += static_cast<float>(g * pooled);
        dpooled[static_cast<std::size_t>(i) * c + ch] +=
            g * head_weight_.value[static_cast<std::size_t>(cls) * c + ch];
      }
    }
  }
  nn::Tensor dx(c, n, features_.height, features_.width);
  for (int ch = 0; ch < c; ++ch) {
    float* dst = dx.channel(ch);
    for (int i = 0; i < n; ++i) {
      const float v = static_cast<float>(dpooled[static_cast<std::size_t>(i) * c + ch] / static_cast<double>(hw));
      std::fill(dst + i * hw, dst + (i + 1) * hw, v);
    }
  }
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) dx = block_backward(*it, std::move(dx));
  nn::relu_backward_inplace(stem_output_, dx);
  stem_.backward(stem_input_, stem_bn_.backward(stem_cache_, dx), false);
}

void ResNet::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

std::vector<nn::Param*> ResNet::parameters() {
  std::vector<nn::Param*> ps{&stem_.weight(), &stem_bn_.gamma(), &stem_bn_.beta()};
  for (auto& b : blocks_) {
    ps.insert(ps.end(), {&b.conv1.weight(), &b.bn1.gamma(), &b.bn1.beta(), &b.conv2.weight(), &b.bn2.gamma(),
                         &b.bn2.beta()});
    if (b.has_shortcut) ps.insert(ps.end(), {&b.shortcut.weight(), &b.bn_shortcut.gamma(), &b.bn_shortcut.beta()});
  }
  ps.push_back(&head_weight_);
  ps.push_back(&head_bias_);
  return ps;
}

std::vector<std::vector<float>*> ResNet::state() {
  std::vector<std::vector<float>*> s;
  for (auto* p : parameters()) s.push_back(&p->value);
  auto add_bn = [&](nn::BatchNorm2d& bn) {
    s.push_back(&bn.running_mean());
    s.push_back(&bn.running_var());
  };
  add_bn(stem_bn_);
  for (auto& b : blocks_) {
    add_bn(b.bn1);
    add_bn(b.bn2);
    if (b.has_shortcut) add_bn(b.bn_shortcut);
  }
  return s;
}

std::vector<const std::vector<float>*> ResNet::state() const {
  auto mut = const_cast<ResNet*>(this)->state();
  return {mut.begin(), mut.end()};
}

void ResNet::save_state(std::ostream& out) const {
  for (const auto* v : state()) {
    const auto n = static_cast<std::uint64_t>(v->size());
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(v->data()), static_cast<std::streamsize>(n * sizeof(float)));
  }
}

void ResNet::load_state(std::istream& in) {
  for (auto* v : state()) {
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    if (!in || n != v->size()) throw std::runtime_error("checkpoint: parameter tensor size mismatch");
    in.read(reinterpret_cast<char*>(v->data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated parameter data");
  }
}

}  // namespace backmix
