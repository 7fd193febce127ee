#include <algorithm>
#include <cmath>
#include <string>

#include "backmix/attribution.hpp"
#include "backmix/pgm.hpp"

namespace backmix {

RawCam raw_gradcam(const CamModel& model, const nn::Tensor& features, int cls) {
  if (cls < 0 || cls >= model.num_classes())
    throw std::out_of_range("gradcam: class " + std::to_string(cls) + " outside [0, " +
                            std::to_string(model.num_classes()) + ")");
  if (features.batch != 1) throw ShapeError("raw_gradcam: expects features of a single sample");
  const nn::Tensor grad = model.logit_gradient(features, cls);
  const std::size_t hw = features.image_size();
  RawCam cam{features.height, features.width, std::vector<double>(hw, 0.0),
             std::vector<double>(static_cast<std::size_t>(features.channels), 0.0)};
  for (int c = 0; c < features.channels; ++c) {
    const float* g = grad.channel(c);
    double s = 0.0;
    for (std::size_t p = 0; p < hw; ++p) s += g[p];
    cam.channel_weights[static_cast<std::size_t>(c)] = s / static_cast<double>(hw);
  }
  for (int c = 0; c < features.channels; ++c) {
    const double w = cam.channel_weights[static_cast<std::size_t>(c)];
    const float* a = features.channel(c);
    for (std::size_t p = 0; p < hw; ++p) cam.values[p] += w * a[p];
  }
  for (auto& v : cam.values) v = std::max(v, 0.0);
  return cam;
}

std::vector<double> upsample_bilinear(std::span<const double> src, int src_h, int src_w, int dst_h, int dst_w) {
  if (src.size() != static_cast<std::size_t>(src_h) * static_cast<std::size_t>(src_w))
    throw ShapeError("upsample_bilinear: source size mismatch");
  std::vector<double> out(static_cast<std::size_t>(dst_h) * static_cast<std::size_t>(dst_w));
  const double sy_scale = static_cast<double>(src_h) / dst_h;
  const double sx_scale = static_cast<double>(src_w) / dst_w;
  auto at = [&](int y, int x) { return src[static_cast<std::size_t>(y) * src_w + x]; };
  for (int y = 0; y < dst_h; ++y) {
    const double sy = std::clamp((y + 0.5) * sy_scale - 0.5, 0.0, static_cast<double>(src_h - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, src_h - 1);
    const double fy = sy - y0;
    for (int x = 0; x < dst_w; ++x) {
      const double sx = std::clamp((x + 0.5) * sx_scale - 0.5, 0.0, static_cast<double>(src_w - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, src_w - 1);
      const double fx = sx - x0;
      out[static_cast<std::size_t>(y) * dst_w + x] =
          (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
    }
  }
  return out;
}

namespace {

ActivationMap finish(const RawCam& cam, int height, int width) {
  const auto up = upsample_bilinear(cam.values, cam.height, cam.width, height, width);
  ActivationMap map{Image(height, width), false};
  const double peak = up.empty() ? 0.0 : *std::max_element(up.begin(), up.end());
  if (!(peak > 0.0)) {
    map.degenerate = true;
    return map;
  }
  for (std::size_t i = 0; i < up.size(); ++i)
    map.scores[i] = static_cast<float>(std::clamp(up[i] / peak, 0.0, 1.0));
  return map;
}

nn::Tensor sample_features(const nn::Tensor& batch, int n) {
  nn::Tensor one(batch.channels, 1, batch.height, batch.width);
  const std::size_t hw = batch.image_size();
  for (int c = 0; c < batch.channels; ++c)
    std::copy_n(batch.channel(c) + static_cast<std::size_t>(n) * hw, hw, one.channel(c));
  return one;
}

}  // namespace

ActivationMap gradcam(const CamModel& model, const Image& image, int target_class) {
  if (target_class < 0 || target_class >= model.num_classes())
    throw std::out_of_range("gradcam: class " + std::to_string(target_class) + " outside [0, " +
                            std::to_string(model.num_classes()) + ")");
  std::vector<Image> one{image};
  const nn::Tensor features = model.target_features(to_batch(one));
  return finish(raw_gradcam(model, features, target_class), image.height(), image.width());
}

std::vector<ActivationMap> gradcam_batch(const CamModel& model, const std::vector<Frame>& frames,
                                         bool use_predicted_class) {
  std::vector<ActivationMap> out;
  out.reserve(frames.size());
  constexpr std::size_t kChunk = 64;
  const auto k = static_cast<std::size_t>(model.num_classes());
  for (std::size_t start = 0; start < frames.size(); start += kChunk) {
    const std::size_t end = std::min(frames.size(), start + kChunk);
    std::vector<const Image*> images;
    for (std::size_t i = start; i < end; ++i) {
      if (i > 0 && !frames[i].image.same_shape(frames[0].image.height(), frames[0].image.width()))
        throw AttributionError("gradcam_batch: frame " + std::to_string(i) + " differs in resolution");
      images.push_back(&frames[i].image);
    }
    nn::Tensor features;
    try {
      features = model.target_features(to_batch(std::span<const Image* const>(images)));
    } catch (const std::exception& e) {
      throw AttributionError("gradcam_batch: frames " + std::to_string(start) + ".." + std::to_string(end - 1) +
                             ": " + e.what());
    }
    const auto logits = use_predicted_class ? model.logits_from_features(features) : std::vector<double>{};
    for (std::size_t i = start; i < end; ++i) {
      const int n = static_cast<int>(i - start);
      int cls = frames[i].label;
      if (use_predicted_class) {
        const auto row = std::span<const double>(logits).subspan(static_cast<std::size_t>(n) * k, k);
        cls = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      }
      try {
        out.push_back(finish(raw_gradcam(model, sample_features(features, n), cls), frames[i].image.height(),
                             frames[i].image.width()));
      } catch (const std::exception& e) {
        throw AttributionError("gradcam_batch: frame " + std::to_string(i) + ": " + e.what());
      }
    }
  }
  return out;
}

void write_activation_map(const std::filesystem::path& path, const ActivationMap& map) {
  write_image(path, map.scores);
}

void write_overlay(const std::filesystem::path& path, const Image& image, const ActivationMap& map, double alpha) {
  if (!image.same_shape(map.scores.height(), map.scores.width())) throw ShapeError("write_overlay: shape mismatch");
  std::vector<std::uint8_t> rgb(image.size() * 3);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double z = map.scores[i];
    // jet-like ramp: blue -> cyan -> yellow -> red
    const double r = std::clamp(1.5 - std::abs(4.0 * z - 3.0), 0.0, 1.0);
    const double g = std::clamp(1.5 - std::abs(4.0 * z - 2.0), 0.0, 1.0);
    const double b = std::clamp(1.5 - std::abs(4.0 * z - 1.0), 0.0, 1.0);
    const double gray = image[i];
    const std::array<double, 3> mixed{(1 - alpha) * gray + alpha * r, (1 - alpha) * gray + alpha * g,
                                      (1 - alpha) * gray + alpha * b};
    for (std::size_t c = 0; c < 3; ++c)
      rgb[i * 3 + c] = static_cast<std::uint8_t>(std::lround(std::clamp(mixed[c], 0.0, 1.0) * 255.0));
  }
  write_ppm(path, image.height(), image.width(), rgb);
}

}  // namespace backmix
