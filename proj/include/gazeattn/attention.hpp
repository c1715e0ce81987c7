#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "gazeattn/layers.hpp"
#include "gazeattn/tensor.hpp"

namespace gazeattn {

/// Region over which the pre-scale response is mapped onto [0,1].
enum class ScaleScope { Volume, PerTimestamp };

/// Output widths of the four Inception branches and the two reductions.
struct AttentionWidths {
  int w0 = 32, w1 = 32, w2 = 16, w3 = 16;
  int r1 = 24, r2 = 8;

  int concat() const { return w0 + w1 + w2 + w3; }
  bool operator==(const AttentionWidths&) const = default;
};

/// (v - min) / (max - min); all zeros when the input is constant.
template <typename T>
void minmax_scale(std::span<const T> v, std::span<T> out);

/// Writes d(loss)/dv given the upstream gradient of the scaled output.
template <typename T>
void minmax_scale_backward(std::span<const T> v, std::span<const T> dout, std::span<T> dv);

/// Spatio-temporal attention: four 3D Inception branches over X, channel
/// concatenation, a 1x1x1 head to a single channel, then min-max scaling.
///
///   b0 = conv1(X)            b1 = conv3(conv1(X))
///   b2 = conv3(conv1(X))     b3 = conv1(maxpool3(X))
///   A  = scale(conv1(concat(b0, b1, b2, b3)))
///
/// Every branch keeps T,H,W (stride 1, same padding).
template <typename T>
class AttentionModule {
 public:
  AttentionModule() = default;
  AttentionModule(int in_channels, AttentionWidths widths = {}, ScaleScope scope = ScaleScope::Volume,
                  const std::string& prefix = "attention");

  void init(std::mt19937_64& rng);

  /// X: N,C,T,H,W -> A: N,T,H,W with values in [0,1].
  Tensor<T> forward(const Tensor<T>& x);
  /// dA: N,T,H,W -> dX: N,C,T,H,W; accumulates parameter gradients.
  Tensor<T> backward(const Tensor<T>& da);

  /// Pre-scale head output from the last forward, N,1,T,H,W.
  const Tensor<T>& response() const { return response_; }
  int in_channels() const { return in_channels_; }
  const AttentionWidths& widths() const { return widths_; }
  ScaleScope scope() const { return scope_; }
  std::vector<Param<T>*> params();

 private:
  int in_channels_ = 0;
  AttentionWidths widths_;
  ScaleScope scope_ = ScaleScope::Volume;
  Conv3d<T> b0_, b1_reduce_, b1_, b2_reduce_, b2_, b3_, head_;
  MaxPool3d<T> pool_;
  Tensor<T> response_;
};

/// X' = X * (1 + A), A broadcast over channels. A: N,T,H,W (or T,H,W when N = 1).
template <typename T>
Tensor<T> apply_attention(const Tensor<T>& x, const Tensor<T>& a);

template <typename T>
void apply_attention_backward(const Tensor<T>& x, const Tensor<T>& a, const Tensor<T>& dy, Tensor<T>& dx,
                              Tensor<T>& da);

inline constexpr double kAttentionEps = 1e-8;

/// Mean over spatial slices of KL(G || (A + eps) / sum(A + eps)). The last two
/// axes are spatial; slices flagged false in `valid` are skipped. When `grad`
/// is non-null it receives d(loss)/dA.
template <typename T>
T attention_loss(const Tensor<T>& a, const Tensor<T>& g, Tensor<T>* grad = nullptr,
                 const std::vector<bool>* valid = nullptr);

}  // namespace gazeattn
