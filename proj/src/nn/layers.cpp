#include "backmix/nn/layers.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace backmix::nn {
namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;
using ArrayMap = Eigen::Map<Eigen::ArrayXf>;
using ConstArrayMap = Eigen::Map<const Eigen::ArrayXf>;

}  // namespace

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride)
    : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), pad_(kernel / 2),
      weight_(std::move(name), static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel) {
  if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || stride <= 0)
    throw std::invalid_argument("Conv2d: invalid geometry");
}

void Conv2d::init(Rng& rng) {
  const double fan_out = static_cast<double>(out_) * kernel_ * kernel_;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_out));
  for (auto& w : weight_.value) w = static_cast<float>(dist(rng));
}

void Conv2d::im2col(const Tensor& x, int n0, int n1, int out_h, int out_w, std::vector<float>& col) const {
  const std::size_t m = static_cast<std::size_t>(n1 - n0) * out_h * out_w;
  col.assign(static_cast<std::size_t>(in_) * kernel_ * kernel_ * m, 0.0f);
  std::size_t row = 0;
  for (int c = 0; c < in_; ++c) {
    const float* src = x.channel(c);
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx, ++row) {
        float* dst = col.data() + row * m;
        for (int n = n0; n < n1; ++n) {
          const float* img = src + static_cast<std::size_t>(n) * x.height * x.width;
          for (int oy = 0; oy < out_h; ++oy) {
            float* out_row = dst + (static_cast<std::size_t>(n - n0) * out_h + oy) * out_w;
            const int iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= x.height) continue;
            const float* in_row = img + static_cast<std::size_t>(iy) * x.width;
            if (stride_ == 1) {
              // valid ox range: 0 <= ox + kx - pad < width
              const int lo = std::max(0, pad_ - kx);
              const int hi = std::min(out_w, x.width - kx + pad_);
              if (hi > lo) std::memcpy(out_row + lo, in_row + lo + kx - pad_, sizeof(float) * (hi - lo));
            } else {
              for (int ox = 0; ox < out_w; ++ox) {
                const int ix = ox * stride_ + kx - pad_;
                if (ix >= 0 && ix < x.width) out_row[ox] = in_row[ix];
              }
            }
          }
        }
      }
    }
  }
}

void Conv2d::col2im(const std::vector<float>& col, int n0, int n1, int out_h, int out_w, Tensor& dx) const {
  const std::size_t m = static_cast<std::size_t>(n1 - n0) * out_h * out_w;
  std::size_t row = 0;
  for (int c = 0; c < in_; ++c) {
    float* dst = dx.channel(c);
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx, ++row) {
        const float* src = col.data() + row * m;
        for (int n = n0; n < n1; ++n) {
          float* img = dst + static_cast<std::size_t>(n) * dx.height * dx.width;
          for (int oy = 0; oy < out_h; ++oy) {
            const int iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= dx.height) continue;
            const float* col_row = src + (static_cast<std::size_t>(n - n0) * out_h + oy) * out_w;
            float* img_row = img + static_cast<std::size_t>(iy) * dx.width;
            if (stride_ == 1) {
              const int lo = std::max(0, pad_ - kx);
              const int hi = std::min(out_w, dx.width - kx + pad_);
              float* base = img_row + kx - pad_;
              for (int ox = lo; ox < hi; ++ox) base[ox] += col_row[ox];
            } else {
              for (int ox = 0; ox < out_w; ++ox) {
                const int ix = ox * stride_ + kx - pad_;
                if (ix >= 0 && ix < dx.width) img_row[ix] += col_row[ox];
              }
            }
          }
        }
      }
    }
  }
}

int Conv2d::chunk_size(const Tensor& x, int out_h, int out_w) const {
  // keep the column buffer around 1 MiB
  const std::size_t per_sample = static_cast<std::size_t>(in_) * kernel_ * kernel_ * out_h * out_w * sizeof(float);
  const std::size_t target = std::size_t{1} << 20;
  const auto n = static_cast<int>(std::max<std::size_t>(1, target / std::max<std::size_t>(1, per_sample)));
  return std::min(n, x.batch);
}

Tensor Conv2d::forward(const Tensor& x) const {
  if (x.channels != in_) throw std::invalid_argument("Conv2d::forward: channel mismatch in " + weight_.name);
  const int oh = out_size(x.height);
  const int ow = out_size(x.width);
  Tensor y(out_, x.batch, oh, ow);
  const auto m = static_cast<Eigen::Index>(y.plane());
  const auto k = static_cast<Eigen::Index>(in_) * kernel_ * kernel_;
  const auto per_sample = static_cast<Eigen::Index>(oh) * ow;
  ConstMatrixMap w(weight_.value.data(), out_, k);
  const int chunk = chunk_size(x, oh, ow);
  std::vector<float> col;
  for (int n0 = 0; n0 < x.batch; n0 += chunk) {
    const int n1 = std::min(x.batch, n0 + chunk);
    const Eigen::Index cols = per_sample * (n1 - n0);
    im2col(x, n0, n1, oh, ow, col);
    StridedMap out(y.data.data() + per_sample * n0, out_, cols, Eigen::OuterStride<>(m));
    out.noalias() = w * ConstMatrixMap(col.data(), k, cols);
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& dy, bool need_input_grad) {
  const int oh = dy.height;
  const int ow = dy.width;
  const auto m = static_cast<Eigen::Index>(dy.plane());
  const auto k = static_cast<Eigen::Index>(in_) * kernel_ * kernel_;
  const auto per_sample = static_cast<Eigen::Index>(oh) * ow;
  ConstMatrixMap w(weight_.value.data(), out_, k);
  MatrixMap dw(weight_.grad.data(), out_, k);

  Tensor dx;
  if (need_input_grad) dx = Tensor(x.channels, x.batch, x.height, x.width);
  const int chunk = chunk_size(x, oh, ow);
  std::vector<float> col;
  for (int n0 = 0; n0 < x.batch; n0 += chunk) {
    const int n1 = std::min(x.batch, n0 + chunk);
    const Eigen::Index cols = per_sample * (n1 - n0);
    ConstStridedMap g(dy.data.data() + per_sample * n0, out_, cols, Eigen::OuterStride<>(m));
    im2col(x, n0, n1, oh, ow, col);
    dw.noalias() += g * ConstMatrixMap(col.data(), k, cols).transpose();
    if (need_input_grad) {
      MatrixMap(col.data(), k, cols).noalias() = w.transpose() * g;
      col2im(col, n0, n1, oh, ow, dx);
    }
  }
  return dx;
}

BatchNorm2d::BatchNorm2d(std::string name, int channels)
    : channels_(channels),
      gamma_(name + ".gamma", static_cast<std::size_t>(channels)),
      beta_(name + ".beta", static_cast<std::size_t>(channels)),
      running_mean_(static_cast<std::size_t>(channels), 0.0f),
      running_var_(static_cast<std::size_t>(channels), 1.0f) {
  std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0f);
}

namespace {

// Sequential double accumulation; Eigen's vectorized reductions peel to the
// first aligned address, which makes the result depend on heap placement.
double ordered_sum(const float* p, Eigen::Index m) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) s += p[i];
  return s;
}

}  // namespace

Tensor BatchNorm2d::forward_train(const Tensor& x, BatchNormCache& cache) {
  const auto m = static_cast<Eigen::Index>(x.plane());
  if (m < 2) throw std::invalid_argument("BatchNorm2d: need at least 2 values per channel in training");
  Tensor y(x.channels, x.batch, x.height, x.width);
  cache.normalized = Tensor(x.channels, x.batch, x.height, x.width);
  cache.inv_std.assign(static_cast<std::size_t>(channels_), 0.0f);
  for (int c = 0; c < channels_; ++c) {
    ConstArrayMap in(x.channel(c), m);
    const float mean = static_cast<float>(ordered_sum(x.channel(c), m) / static_cast<double>(m));
    double sq_acc = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double d = static_cast<double>(in[i]) - mean;
      sq_acc += d * d;
    }
    const auto sq = static_cast<float>(sq_acc);
    const float var = sq / static_cast<float>(m);
    const float inv_std = 1.0f / std::sqrt(var + eps_);
    cache.inv_std[c] = inv_std;
    ArrayMap xhat(cache.normalized.channel(c), m);
    xhat = (in - mean) * inv_std;
    ArrayMap(y.channel(c), m) = xhat * gamma_.value[c] + beta_.value[c];
    const float unbiased = sq / static_cast<float>(m - 1);
    running_mean_[c] = (1.0f - momentum_) * running_mean_[c] + momentum_ * mean;
    running_var_[c] = (1.0f - momentum_) * running_var_[c] + momentum_ * unbiased;
  }
  return y;
}

Tensor BatchNorm2d::forward_eval(const Tensor& x) const {
  Tensor y(x.channels, x.batch, x.height, x.width);
  const auto m = static_cast<Eigen::Index>(x.plane());
  for (int c = 0; c < channels_; ++c) {
    const float scale = gamma_.value[c] / std::sqrt(running_var_[c] + eps_);
    const float shift = beta_.value[c] - running_mean_[c] * scale;
    ArrayMap(y.channel(c), m) = ConstArrayMap(x.channel(c), m) * scale + shift;
  }
  return y;
}

Tensor BatchNorm2d::backward(const BatchNormCache& cache, const Tensor& dy) {
  const auto m = static_cast<Eigen::Index>(dy.plane());
  Tensor dx(dy.channels, dy.batch, dy.height, dy.width);
  for (int c = 0; c < channels_; ++c) {
    ConstArrayMap g(dy.channel(c), m);
    ConstArrayMap xhat(cache.normalized.channel(c), m);
    const auto dbeta = static_cast<float>(ordered_sum(dy.channel(c), m));
    double dgamma_acc = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) dgamma_acc += static_cast<double>(g[i]) * xhat[i];
    const auto dgamma = static_cast<float>(dgamma_acc);
    gamma_.grad[c] += dgamma;
    beta_.grad[c] += dbeta;
    const float scale = gamma_.value[c] * cache.inv_std[c] / static_cast<float>(m);
    ArrayMap(dx.channel(c), m) = scale * (static_cast<float>(m) * g - dbeta - xhat * dgamma);
  }
  return dx;
}

void relu_inplace(Tensor& t) {
  for (auto& v : t.data) v = v > 0.0f ? v : 0.0f;
}

void relu_backward_inplace(const Tensor& activation, Tensor& dy) {
  for (std::size_t i = 0; i < dy.data.size(); ++i) {
    if (!(activation.data[i] > 0.0f)) dy.data[i] = 0.0f;
  }
}

void add_inplace(Tensor& acc, const Tensor& other) {
  if (!acc.same_shape(other)) throw std::invalid_argument("add_inplace: shape mismatch");
  for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += other.data[i];
}

}  // namespace backmix::nn
