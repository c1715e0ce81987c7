#pragma once

// Differentiable building blocks over N,C,T,H,W tensors. Each layer caches
// what its backward pass needs during forward; backward accumulates into the
// parameter gradients and returns the input gradient.

#include <random>
#include <string>
#include <vector>

#include "gazeattn/kernels.hpp"
#include "gazeattn/tensor.hpp"

namespace gazeattn {

enum class Mode { Train, Eval };

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}
};

/// Centered uniform fan-in init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
void init_fan_in(Tensor<T>& weight, int fan_in, std::mt19937_64& rng);

template <typename T>
class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(const std::string& name, int in_channels, int out_channels, Triple kernel, Triple stride = {1, 1, 1},
         Triple pad = {0, 0, 0}, bool bias = true);

  void init(std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy, bool input_grad = true);

  /// Output dims for an input of (t,h,w).
  Triple out_dims(Triple in) const;
  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }
  Triple kernel() const { return kernel_; }
  std::vector<Param<T>*> params();

  Param<T> weight;
  Param<T> bias;

 private:
  Window3d window(const Tensor<T>& x) const;

  int in_channels_ = 0, out_channels_ = 0;
  Triple kernel_{1, 1, 1}, stride_{1, 1, 1}, pad_{0, 0, 0};
  bool has_bias_ = true;
  Tensor<T> input_;
  std::vector<T> workspace_;
};

/// Batch normalization over (N,T,H,W) per channel, with running statistics for Eval.
template <typename T>
class BatchNorm3d {
 public:
  BatchNorm3d() = default;
  BatchNorm3d(const std::string& name, int channels, T momentum = T(0.1), T eps = T(1e-5));

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& dy);
  std::vector<Param<T>*> params();
  /// Running mean and variance; persisted but not optimized.
  std::vector<Param<T>*> buffers();

  Param<T> gamma, beta, running_mean, running_var;

 private:
  int channels_ = 0;
  T momentum_ = T(0.1), eps_ = T(1e-5);
  bool train_mode_ = true;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  Tensor<T> output_;
};

template <typename T>
class MaxPool3d {
 public:
  MaxPool3d() = default;
  MaxPool3d(Triple kernel, Triple stride, Triple pad) : kernel_(kernel), stride_(stride), pad_(pad) {}

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  Triple kernel_{1, 1, 1}, stride_{1, 1, 1}, pad_{0, 0, 0};
  Shape input_shape_;
  std::vector<int> argmax_;
};

/// Inverted dropout; identity in Eval mode.
template <typename T>
class Dropout {
 public:
  explicit Dropout(double rate = 0.5);

  Tensor<T> forward(const Tensor<T>& x, Mode mode, std::mt19937_64& rng);
  Tensor<T> backward(const Tensor<T>& dy);
  double rate() const { return rate_; }

 private:
  double rate_;
  std::vector<T> mask_;
};

/// N,C,T,H,W -> N,C mean over the spatio-temporal volume.
template <typename T>
class GlobalAvgPool {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  Shape input_shape_;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in_features, int out_features);

  void init(std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);
  std::vector<Param<T>*> params() { return {&weight, &bias}; }

  Param<T> weight, bias;

 private:
  int in_ = 0, out_ = 0;
  Tensor<T> input_;
};

}  // namespace gazeattn
