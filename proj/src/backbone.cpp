#include "gazeattn/backbone.hpp"

#include <algorithm>

#include "gazeattn/error.hpp"

namespace gazeattn {

namespace {

Triple conv_out(Triple in, Triple kernel, Triple stride, Triple pad) {
  Window3d g;
  g.in = in;
  g.kernel = kernel;
  g.stride = stride;
  g.pad = pad;
  g.validate();
  return g.out_dims();
}

Triple same_pad(Triple kernel) { return {kernel[0] / 2, kernel[1] / 2, kernel[2] / 2}; }

}  // namespace

void BackboneConfig::validate() const {
  if (frames < 1 || height < 1 || width < 1) throw ConfigError("clip dimensions must be positive");
  if (stem_channels < 1) throw ConfigError("stem channels must be positive");
  if (stages.empty()) throw ConfigError("backbone needs at least one stage");
  for (const auto& s : stages) {
    if (s.channels < 1) throw ConfigError("stage channels must be positive");
    for (int v : s.stride)
      if (v < 1) throw ConfigError("stage strides must be positive");
  }
  if (attention_stage < 1 || attention_stage > int(stages.size())) {
    throw ConfigError("attention stage " + std::to_string(attention_stage) + " is not in 1.." +
                      std::to_string(stages.size()));
  }
  if (num_classes < 1 || num_classes > kNumGestures) throw ConfigError("num_classes must lie in 1..10");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
  const auto& w = attention_widths;
  if (w.w0 < 1 || w.w1 < 1 || w.w2 < 1 || w.w3 < 1 || w.r1 < 1 || w.r2 < 1) {
    throw ConfigError("attention branch widths must be positive");
  }
  attention_dims();
}

Triple BackboneConfig::attention_dims() const {
  Triple dims = conv_out({frames, height, width}, stem_kernel, stem_stride, same_pad(stem_kernel));
  for (int i = 0; i < attention_stage; ++i) dims = conv_out(dims, {3, 3, 3}, stages[i].stride, {1, 1, 1});
  return dims;
}

int BackboneConfig::attention_channels() const { return stages.at(std::size_t(attention_stage - 1)).channels; }

template <typename T>
Tensor<T> inflate_2d(const Tensor<T>& filter2d, int n) {
  if (n < 1) throw ConfigError("inflation depth must be at least 1");
  if (filter2d.rank() != 4) throw ShapeError("inflate_2d expects a (Cout,Cin,kH,kW) filter");
  const int cout = filter2d.dim(0), cin = filter2d.dim(1), kh = filter2d.dim(2), kw = filter2d.dim(3);
  Tensor<T> out({cout, cin, n, kh, kw});
  const std::size_t plane = std::size_t(kh) * kw;
  for (int pair = 0; pair < cout * cin; ++pair) {
    const T* src = filter2d.data() + pair * plane;
    for (int t = 0; t < n; ++t) {
      T* dst = out.data() + (std::size_t(pair) * n + t) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] / T(n);
    }
  }
  return out;
}

template <typename T>
Backbone<T>::Backbone(BackboneConfig config)
    : config_((config.validate(), std::move(config))),
      dropout_(config_.dropout) {
  stem_.conv = Conv3d<T>("stem.conv", 3, config_.stem_channels, config_.stem_kernel, config_.stem_stride,
                         same_pad(config_.stem_kernel), false);
  stem_.bn = BatchNorm3d<T>("stem.bn", config_.stem_channels);
  int channels = config_.stem_channels;
  for (std::size_t i = 0; i < config_.stages.size(); ++i) {
    const std::string name = "stage" + std::to_string(i + 1);
    Unit u;
    u.conv = Conv3d<T>(name + ".conv", channels, config_.stages[i].channels, {3, 3, 3}, config_.stages[i].stride,
                       {1, 1, 1}, false);
    u.bn = BatchNorm3d<T>(name + ".bn", config_.stages[i].channels);
    stages_.push_back(std::move(u));
    channels = config_.stages[i].channels;
  }
  attention_ = AttentionModule<T>(config_.attention_channels(), config_.attention_widths, config_.attention_scope);
  classifier_ = Linear<T>("classifier", channels, config_.num_classes);
}

template <typename T>
void Backbone<T>::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  stem_.conv.init(rng);
  for (auto& u : stages_) u.conv.init(rng);
  attention_.init(rng);
  classifier_.init(rng);
}

template <typename T>
Tensor<T> Backbone<T>::unit_forward(Unit& u, const Tensor<T>& x, Mode mode) {
  return u.relu.forward(u.bn.forward(u.conv.forward(x), mode));
}

template <typename T>
Tensor<T> Backbone<T>::unit_backward(Unit& u, const Tensor<T>& dy, bool input_grad) {
  return u.conv.backward(u.bn.backward(u.relu.backward(dy)), input_grad);
}

template <typename T>
ForwardResult<T> Backbone<T>::forward(const Tensor<T>& clips, Mode mode, std::mt19937_64* rng) {
  if (clips.rank() != 5) throw ShapeError("backbone expects N,3,T,H,W clips, got " + shape_string(clips.shape()));
  require_shape({clips.dim(1), clips.dim(2), clips.dim(3), clips.dim(4)},
                {3, config_.frames, config_.height, config_.width}, "backbone input");
  if (mode == Mode::Train && config_.dropout > 0.0 && !rng) {
    throw ConfigError("training forward pass needs a dropout generator");
  }
  Tensor<T> x = unit_forward(stem_, clips, mode);
  ForwardResult<T> out;
  for (int i = 0; i < int(stages_.size()); ++i) {
    x = unit_forward(stages_[i], x, mode);
    if (i + 1 == config_.attention_stage) {
      attention_input_ = x;
      attention_map_ = attention_.forward(x);
      out.attention = attention_map_;
      x = apply_attention(x, attention_map_);
    }
  }
  std::mt19937_64 unused;
  x = dropout_.forward(pool_.forward(x), mode, rng ? *rng : unused);
  out.logits = classifier_.forward(x);
  return out;
}

template <typename T>
void Backbone<T>::backward(const Tensor<T>& dlogits, const Tensor<T>* dattention) {
  Tensor<T> dx = pool_.backward(dropout_.backward(classifier_.backward(dlogits)));
  for (int i = int(stages_.size()) - 1; i >= 0; --i) {
    if (i + 1 == config_.attention_stage) {
      Tensor<T> dfeat, dmap;
      apply_attention_backward(attention_input_, attention_map_, dx, dfeat, dmap);
      if (dattention) {
        require_shape(dattention->shape(), dmap.shape(), "attention map grad");
        for (std::size_t j = 0; j < dmap.size(); ++j) dmap[j] += (*dattention)[j];
      }
      const Tensor<T> dthrough = attention_.backward(dmap);
      for (std::size_t j = 0; j < dfeat.size(); ++j) dfeat[j] += dthrough[j];
      dx = std::move(dfeat);
    }
    dx = unit_backward(stages_[i], dx, true);
  }
  unit_backward(stem_, dx, false);
}

template <typename T>
void Backbone<T>::zero_grad() {
  for (auto* p : params()) p->grad.fill(T{0});
}

template <typename T>
std::vector<Param<T>*> Backbone<T>::params() {
  std::vector<Param<T>*> out;
  auto add = [&](std::vector<Param<T>*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  add(stem_.conv.params());
  add(stem_.bn.params());
  for (auto& u : stages_) {
    add(u.conv.params());
    add(u.bn.params());
  }
  add(attention_.params());
  add(classifier_.params());
  return out;
}

template <typename T>
std::vector<Param<T>*> Backbone<T>::buffers() {
  std::vector<Param<T>*> out = stem_.bn.buffers();
  for (auto& u : stages_) {
    for (auto* p : u.bn.buffers()) out.push_back(p);
  }
  return out;
}

Tensor<float> pack_clips(const std::vector<Clip>& clips) {
  if (clips.empty()) throw ShapeError("cannot pack an empty clip list");
  const Shape& s = clips.front().frames.shape();
  if (s.size() != 4 || s[3] != 3) throw ShapeError("clips must be T x H x W x 3");
  const int t = s[0], h = s[1], w = s[2];
  const std::size_t plane = std::size_t(h) * w;
  Tensor<float> batch({int(clips.size()), 3, t, h, w});
  for (std::size_t n = 0; n < clips.size(); ++n) {
    require_shape(clips[n].frames.shape(), s, "clip");
    const float* src = clips[n].frames.data();
    float* dst = batch.data() + n * batch.stride0();
    for (int f = 0; f < t; ++f)
      for (std::size_t p = 0; p < plane; ++p)
        for (int c = 0; c < 3; ++c) dst[(std::size_t(c) * t + f) * plane + p] = src[(f * plane + p) * 3 + c];
  }
  return batch;
}

template Tensor<float> inflate_2d<float>(const Tensor<float>&, int);
template Tensor<double> inflate_2d<double>(const Tensor<double>&, int);
template class Backbone<float>;
template class Backbone<double>;

}  // namespace gazeattn
