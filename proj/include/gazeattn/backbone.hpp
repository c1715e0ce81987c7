#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gazeattn/attention.hpp"
#include "gazeattn/dataset.hpp"
#include "gazeattn/layers.hpp"

namespace gazeattn {

struct StageConfig {
  int channels = 16;
  Triple stride{1, 1, 1};

  bool operator==(const StageConfig&) const = default;
};

struct BackboneConfig {
  int frames = 8;
  int height = 64;
  int width = 64;
  int stem_channels = 16;
  Triple stem_kernel{3, 3, 3};
  Triple stem_stride{2, 2, 2};
  std::vector<StageConfig> stages{{16, {1, 1, 1}}, {32, {1, 2, 2}}, {64, {1, 2, 2}}};
  int attention_stage = 2;  // 1-based; attention follows this stage
  AttentionWidths attention_widths{};
  ScaleScope attention_scope = ScaleScope::Volume;
  int num_classes = 4;
  double dropout = 0.5;

  void validate() const;
  /// (T', H', W') of the feature volume that hosts the attention module.
  Triple attention_dims() const;
  int attention_channels() const;

  bool operator==(const BackboneConfig&) const = default;
};

/// (Cout, Cin, kH, kW) -> (Cout, Cin, N, kH, kW), every temporal slice = filter / N.
template <typename T>
Tensor<T> inflate_2d(const Tensor<T>& filter2d, int n);

template <typename T>
struct ForwardResult {
  Tensor<T> logits;     // N x num_classes
  Tensor<T> attention;  // N x T' x H' x W'
};

/// Stem conv -> [conv, BN, ReLU] stages with attention after the configured
/// stage -> global average pooling -> dropout -> affine classifier.
template <typename T>
class Backbone {
 public:
  explicit Backbone(BackboneConfig config);

  void init(std::uint64_t seed);

  /// clips: N x 3 x T x H x W. `rng` drives dropout in Train mode.
  ForwardResult<T> forward(const Tensor<T>& clips, Mode mode, std::mt19937_64* rng = nullptr);
  /// Backpropagates the logit gradient plus an optional direct gradient on the attention map.
  void backward(const Tensor<T>& dlogits, const Tensor<T>* dattention);

  void zero_grad();
  std::vector<Param<T>*> params();
  /// Non-optimized persistent state (batch-norm running statistics).
  std::vector<Param<T>*> buffers();
  const BackboneConfig& config() const { return config_; }
  AttentionModule<T>& attention() { return attention_; }

 private:
  struct Unit {
    Conv3d<T> conv;
    BatchNorm3d<T> bn;
    ReLU<T> relu;
  };
  Tensor<T> unit_forward(Unit& u, const Tensor<T>& x, Mode mode);
  Tensor<T> unit_backward(Unit& u, const Tensor<T>& dy, bool input_grad);

  BackboneConfig config_;
  Unit stem_;
  std::vector<Unit> stages_;
  AttentionModule<T> attention_;
  GlobalAvgPool<T> pool_;
  Dropout<T> dropout_;
  Linear<T> classifier_;
  Tensor<T> attention_input_, attention_map_;
};

/// Converts T x H x W x 3 clips into an N x 3 x T x H x W batch.
Tensor<float> pack_clips(const std::vector<Clip>& clips);

}  // namespace gazeattn
