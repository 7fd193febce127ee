#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace backmix::nn {

/// Activation tensor stored channel-major: (channels, batch, height, width).
/// Keeping the channel outermost makes every convolution a single GEMM whose
/// output already has this layout, and makes per-channel reductions contiguous.
struct Tensor {
  int channels = 0;
  int batch = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int c, int n, int h, int w, float fill = 0.0f)
      : channels(c), batch(n), height(h), width(w),
        data(static_cast<std::size_t>(c) * n * h * w, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(batch) * height * width; }
  std::size_t image_size() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return data.size(); }

  float* channel(int c) { return data.data() + static_cast<std::size_t>(c) * plane(); }
  const float* channel(int c) const { return data.data() + static_cast<std::size_t>(c) * plane(); }

  float& at(int c, int n, int y, int x) {
    return data[((static_cast<std::size_t>(c) * batch + n) * height + y) * width + x];
  }
  float at(int c, int n, int y, int x) const {
    return data[((static_cast<std::size_t>(c) * batch + n) * height + y) * width + x];
  }

  bool same_shape(const Tensor& o) const {
    return channels == o.channels && batch == o.batch && height == o.height && width == o.width;
  }
};

/// Trainable parameter with its gradient accumulator.
struct Param {
  std::string name;
  std::vector<float> value;
  std::vector<float> grad;

  Param() = default;
  Param(std::string n, std::size_t count) : name(std::move(n)), value(count, 0.0f), grad(count, 0.0f) {}
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

}  // namespace backmix::nn
