#include "gazeattn/layers.hpp"

#include <cmath>

#include "gazeattn/error.hpp"

namespace gazeattn {

template <typename T>
void init_fan_in(Tensor<T>& weight, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(double(std::max(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& w : weight.values()) w = T(dist(rng));
}

// ---------------------------------------------------------------- Conv3d

template <typename T>
Conv3d<T>::Conv3d(const std::string& name, int in_channels, int out_channels, Triple kernel, Triple stride,
                  Triple pad, bool bias)
    : weight(name + ".weight", {out_channels, in_channels, kernel[0], kernel[1], kernel[2]}),
      bias(name + ".bias", {bias ? out_channels : 0}),
      in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_(pad),
      has_bias_(bias) {
  if (in_channels < 1 || out_channels < 1) throw ConfigError(name + ": channel counts must be positive");
}

template <typename T>
void Conv3d<T>::init(std::mt19937_64& rng) {
  init_fan_in(weight.value, in_channels_ * kernel_[0] * kernel_[1] * kernel_[2], rng);
  bias.value.fill(T{0});
}

template <typename T>
Window3d Conv3d<T>::window(const Tensor<T>& x) const {
  if (x.rank() != 5 || x.dim(1) != in_channels_) {
    throw ShapeError(weight.name + ": expected N," + std::to_string(in_channels_) + ",T,H,W input, got " +
                     shape_string(x.shape()));
  }
  Window3d g;
  g.channels = in_channels_;
  g.in = {x.dim(2), x.dim(3), x.dim(4)};
  g.kernel = kernel_;
  g.stride = stride_;
  g.pad = pad_;
  g.validate();
  return g;
}

template <typename T>
Triple Conv3d<T>::out_dims(Triple in) const {
  Window3d g;
  g.in = in;
  g.kernel = kernel_;
  g.stride = stride_;
  g.pad = pad_;
  return g.out_dims();
}

template <typename T>
Tensor<T> Conv3d<T>::forward(const Tensor<T>& x) {
  const Window3d g = window(x);
  const auto [ot, oh, ow] = g.out_dims();
  Tensor<T> y({x.dim(0), out_channels_, ot, oh, ow});
  kernels::conv3d_forward(g, x.dim(0), out_channels_, x.data(), weight.value.data(),
                          has_bias_ ? bias.value.data() : nullptr, y.data(), workspace_);
  input_ = x;
  return y;
}

template <typename T>
Tensor<T> Conv3d<T>::backward(const Tensor<T>& dy, bool input_grad) {
  const Window3d g = window(input_);
  const auto [ot, oh, ow] = g.out_dims();
  require_shape(dy.shape(), {input_.dim(0), out_channels_, ot, oh, ow}, weight.name + " output grad");
  Tensor<T> dx;
  if (input_grad) dx.resize(input_.shape());
  kernels::conv3d_backward(g, input_.dim(0), out_channels_, input_.data(), weight.value.data(), dy.data(),
                           input_grad ? dx.data() : nullptr, weight.grad.data(),
                           has_bias_ ? bias.grad.data() : nullptr, workspace_);
  return dx;
}

template <typename T>
std::vector<Param<T>*> Conv3d<T>::params() {
  if (has_bias_) return {&weight, &bias};
  return {&weight};
}

// ----------------------------------------------------------- BatchNorm3d

template <typename T>
BatchNorm3d<T>::BatchNorm3d(const std::string& name, int channels, T momentum, T eps)
    : gamma(name + ".gamma", {channels}),
      beta(name + ".beta", {channels}),
      running_mean(name + ".running_mean", {channels}),
      running_var(name + ".running_var", {channels}),
      channels_(channels),
      momentum_(momentum),
      eps_(eps) {
  gamma.value.fill(T{1});
  running_var.value.fill(T{1});
}

template <typename T>
Tensor<T> BatchNorm3d<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.rank() != 5 || x.dim(1) != channels_) {
    throw ShapeError(gamma.name + ": channel mismatch, got " + shape_string(x.shape()));
  }
  const int n = x.dim(0);
  const std::size_t vol = x.stride0() / channels_;
  const std::size_t count = std::size_t(n) * vol;
  Tensor<T> y(x.shape());
  xhat_.resize(x.shape());
  inv_std_.assign(channels_, T{0});
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels_; ++c) {
    T mean, var;
    if (mode == Mode::Train) {
      double sum = 0.0, sq = 0.0;
      for (int s = 0; s < n; ++s) {
        const T* p = x.data() + (std::size_t(s) * channels_ + c) * vol;
        for (std::size_t i = 0; i < vol; ++i) sum += p[i];
      }
      const double m = sum / double(count);
      for (int s = 0; s < n; ++s) {
        const T* p = x.data() + (std::size_t(s) * channels_ + c) * vol;
        for (std::size_t i = 0; i < vol; ++i) sq += (p[i] - m) * (p[i] - m);
      }
      mean = T(m);
      var = T(sq / double(count));
      const T unbiased = count > 1 ? T(sq / double(count - 1)) : var;
      running_mean.value[c] = (T{1} - momentum_) * running_mean.value[c] + momentum_ * mean;
      running_var.value[c] = (T{1} - momentum_) * running_var.value[c] + momentum_ * unbiased;
    } else {
      mean = running_mean.value[c];
      var = running_var.value[c];
    }
    const T inv = T{1} / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    const T g = gamma.value[c], b = beta.value[c];
    for (int s = 0; s < n; ++s) {
      const std::size_t off = (std::size_t(s) * channels_ + c) * vol;
      for (std::size_t i = 0; i < vol; ++i) {
        const T xh = (x[off + i] - mean) * inv;
        xhat_[off + i] = xh;
        y[off + i] = g * xh + b;
      }
    }
  }
  train_mode_ = mode == Mode::Train;
  return y;
}

template <typename T>
Tensor<T> BatchNorm3d<T>::backward(const Tensor<T>& dy) {
  require_shape(dy.shape(), xhat_.shape(), gamma.name + " output grad");
  const int n = dy.dim(0);
  const std::size_t vol = dy.stride0() / channels_;
  const T count = T(std::size_t(n) * vol);
  Tensor<T> dx(dy.shape());
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels_; ++c) {
    T sum_dy{0}, sum_dy_xh{0};
    for (int s = 0; s < n; ++s) {
      const std::size_t off = (std::size_t(s) * channels_ + c) * vol;
      for (std::size_t i = 0; i < vol; ++i) {
        sum_dy += dy[off + i];
        sum_dy_xh += dy[off + i] * xhat_[off + i];
      }
    }
    gamma.grad[c] += sum_dy_xh;
    beta.grad[c] += sum_dy;
    const T scale = gamma.value[c] * inv_std_[c];
    for (int s = 0; s < n; ++s) {
      const std::size_t off = (std::size_t(s) * channels_ + c) * vol;
      for (std::size_t i = 0; i < vol; ++i) {
        dx[off + i] = train_mode_ ? scale * (dy[off + i] - sum_dy / count - xhat_[off + i] * sum_dy_xh / count)
                                  : scale * dy[off + i];
      }
    }
  }
  return dx;
}

template <typename T>
std::vector<Param<T>*> BatchNorm3d<T>::params() {
  return {&gamma, &beta};
}

template <typename T>
std::vector<Param<T>*> BatchNorm3d<T>::buffers() {
  return {&running_mean, &running_var};
}

// ------------------------------------------------------------------ ReLU

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x) {
  output_.resize(x.shape());
  kernels::relu_forward(x.size(), x.data(), output_.data());
  return output_;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& dy) {
  require_shape(dy.shape(), output_.shape(), "relu output grad");
  Tensor<T> dx(dy.shape());
  kernels::relu_backward(dy.size(), output_.data(), dy.data(), dx.data());
  return dx;
}

// ------------------------------------------------------------- MaxPool3d

template <typename T>
Tensor<T> MaxPool3d<T>::forward(const Tensor<T>& x) {
  if (x.rank() != 5) throw ShapeError("maxpool expects N,C,T,H,W input, got " + shape_string(x.shape()));
  Window3d g;
  g.channels = x.dim(1);
  g.in = {x.dim(2), x.dim(3), x.dim(4)};
  g.kernel = kernel_;
  g.stride = stride_;
  g.pad = pad_;
  const auto [ot, oh, ow] = g.out_dims();
  Tensor<T> y({x.dim(0), x.dim(1), ot, oh, ow});
  kernels::maxpool3d_forward(g, x.dim(0), x.data(), y.data(), argmax_);
  input_shape_ = x.shape();
  return y;
}

template <typename T>
Tensor<T> MaxPool3d<T>::backward(const Tensor<T>& dy) {
  Window3d g;
  g.channels = input_shape_.at(1);
  g.in = {input_shape_[2], input_shape_[3], input_shape_[4]};
  g.kernel = kernel_;
  g.stride = stride_;
  g.pad = pad_;
  if (dy.size() != argmax_.size()) throw ShapeError("maxpool output grad size mismatch");
  Tensor<T> dx(input_shape_);
  kernels::maxpool3d_backward(g, input_shape_[0], dy.data(), argmax_, dx.data());
  return dx;
}

// --------------------------------------------------------------- Dropout

template <typename T>
Dropout<T>::Dropout(double rate) : rate_(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0,1)");
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, Mode mode, std::mt19937_64& rng) {
  if (mode == Mode::Eval || rate_ == 0.0) {
    mask_.assign(x.size(), T{1});
    return x;
  }
  std::bernoulli_distribution keep(1.0 - rate_);
  const T scale = T(1.0 / (1.0 - rate_));
  mask_.resize(x.size());
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = keep(rng) ? scale : T{0};
    y[i] = x[i] * mask_[i];
  }
  return y;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& dy) {
  if (dy.size() != mask_.size()) throw ShapeError("dropout output grad size mismatch");
  Tensor<T> dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask_[i];
  return dx;
}

// --------------------------------------------------------- GlobalAvgPool

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x) {
  if (x.rank() != 5) throw ShapeError("global pool expects N,C,T,H,W input");
  input_shape_ = x.shape();
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t vol = x.stride0() / c;
  Tensor<T> y({n, c});
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n * c; ++i) {
    const T* p = x.data() + std::size_t(i) * vol;
    T acc{0};
    for (std::size_t j = 0; j < vol; ++j) acc += p[j];
    y[i] = acc / T(vol);
  }
  return y;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& dy) {
  Tensor<T> dx(input_shape_);
  const int nc = input_shape_[0] * input_shape_[1];
  if (int(dy.size()) != nc) throw ShapeError("global pool output grad size mismatch");
  const std::size_t vol = dx.size() / nc;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < nc; ++i) {
    const T v = dy[i] / T(vol);
    std::fill(dx.data() + std::size_t(i) * vol, dx.data() + std::size_t(i + 1) * vol, v);
  }
  return dx;
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(const std::string& name, int in_features, int out_features)
    : weight(name + ".weight", {out_features, in_features}),
      bias(name + ".bias", {out_features}),
      in_(in_features),
      out_(out_features) {}

template <typename T>
void Linear<T>::init(std::mt19937_64& rng) {
  init_fan_in(weight.value, in_, rng);
  bias.value.fill(T{0});
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
  if (x.rank() != 2 || x.dim(1) != in_) {
    throw ShapeError(weight.name + ": expected N," + std::to_string(in_) + " input, got " + shape_string(x.shape()));
  }
  const int n = x.dim(0);
  Tensor<T> y({n, out_});
  for (int s = 0; s < n; ++s)
    for (int o = 0; o < out_; ++o) {
      T acc = bias.value[o];
      for (int i = 0; i < in_; ++i) acc += weight.value[std::size_t(o) * in_ + i] * x[std::size_t(s) * in_ + i];
      y[std::size_t(s) * out_ + o] = acc;
    }
  input_ = x;
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& dy) {
  const int n = input_.dim(0);
  require_shape(dy.shape(), {n, out_}, weight.name + " output grad");
  Tensor<T> dx({n, in_});
  for (int s = 0; s < n; ++s)
    for (int o = 0; o < out_; ++o) {
      const T g = dy[std::size_t(s) * out_ + o];
      bias.grad[o] += g;
      for (int i = 0; i < in_; ++i) {
        weight.grad[std::size_t(o) * in_ + i] += g * input_[std::size_t(s) * in_ + i];
        dx[std::size_t(s) * in_ + i] += g * weight.value[std::size_t(o) * in_ + i];
      }
    }
  return dx;
}

#define GAZEATTN_LAYERS(T)                                                       \
  template void init_fan_in<T>(Tensor<T>&, int, std::mt19937_64&);             \
  template class Conv3d<T>;                                                      \
  template class BatchNorm3d<T>;                                                 \
  template class ReLU<T>;                                                        \
  template class MaxPool3d<T>;                                                   \
  template class Dropout<T>;                                                     \
  template class GlobalAvgPool<T>;                                               \
  template class Linear<T>;

GAZEATTN_LAYERS(float)
GAZEATTN_LAYERS(double)

}  // namespace gazeattn
