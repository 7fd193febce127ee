#pragma once

#include <vector>

#include "backmix/nn/tensor.hpp"
#include "backmix/rng.hpp"

namespace backmix::nn {

/// Square-kernel 2-D convolution without bias, padding kernel/2.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride);

  /// He-normal initialization (fan-out mode).
  void init(Rng& rng);

  Tensor forward(const Tensor& x) const;
  /// Accumulates the weight gradient and returns d(loss)/d(x).
  /// `x` must be the tensor passed to forward.
  Tensor backward(const Tensor& x, const Tensor& dy, bool need_input_grad = true);

  int out_size(int in_size) const { return (in_size + 2 * pad_ - kernel_) / stride_ + 1; }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  Param& weight() { return weight_; }
  const Param& weight() const { return weight_; }

 private:
  // Column buffers cover samples [n0, n1) so they stay cache-sized.
  void im2col(const Tensor& x, int n0, int n1, int out_h, int out_w, std::vector<float>& col) const;
  void col2im(const std::vector<float>& col, int n0, int n1, int out_h, int out_w, Tensor& dx) const;
  int chunk_size(const Tensor& x, int out_h, int out_w) const;

  int in_ = 0;
  int out_ = 0;
  int kernel_ = 3;
  int stride_ = 1;
  int pad_ = 1;
  Param weight_;  // out x (in * k * k), row-major
};

struct BatchNormCache {
  Tensor normalized;
  std::vector<float> inv_std;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(std::string name, int channels);

  /// Batch statistics; updates running estimates.
  Tensor forward_train(const Tensor& x, BatchNormCache& cache);
  Tensor forward_eval(const Tensor& x) const;
  Tensor backward(const BatchNormCache& cache, const Tensor& dy);

  Param& gamma() { return gamma_; }
  Param& beta() { return beta_; }
  std::vector<float>& running_mean() { return running_mean_; }
  std::vector<float>& running_var() { return running_var_; }
  const std::vector<float>& running_mean() const { return running_mean_; }
  const std::vector<float>& running_var() const { return running_var_; }

 private:
  int channels_ = 0;
  float momentum_ = 0.1f;
  float eps_ = 1e-5f;
  Param gamma_;
  Param beta_;
  std::vector<float> running_mean_;
  std::vector<float> running_var_;
};

void relu_inplace(Tensor& t);
/// dy *= (activation > 0), in place.
void relu_backward_inplace(const Tensor& activation, Tensor& dy);
void add_inplace(Tensor& acc, const Tensor& other);

}  // namespace backmix::nn
