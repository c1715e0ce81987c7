#include "gazeattn/attention.hpp"

#include <algorithm>
#include <cmath>

#include "gazeattn/error.hpp"

namespace gazeattn {

template <typename T>
void minmax_scale(std::span<const T> v, std::span<T> out) {
  if (v.size() != out.size()) throw ShapeError("minmax_scale: size mismatch");
  if (v.empty()) return;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const T range = *hi - *lo;
  if (!(range > T{0})) {
    std::fill(out.begin(), out.end(), T{0});
    return;
  }
  const T m = *lo;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - m) / range;
}

template <typename T>
void minmax_scale_backward(std::span<const T> v, std::span<const T> dout, std::span<T> dv) {
  if (v.size() != dout.size() || v.size() != dv.size()) throw ShapeError("minmax_scale_backward: size mismatch");
  std::fill(dv.begin(), dv.end(), T{0});
  if (v.empty()) return;
  const auto lo = std::min_element(v.begin(), v.end());
  const auto hi = std::max_element(v.begin(), v.end());
  const T range = *hi - *lo;
  if (!(range > T{0})) return;
  const T m = *lo, mx = *hi;
  const T inv = T{1} / range;
  T d_min{0}, d_max{0};
  for (std::size_t i = 0; i < v.size(); ++i) {
    dv[i] = dout[i] * inv;
    d_min += dout[i] * (v[i] - mx);
    d_max -= dout[i] * (v[i] - m);
  }
  dv[std::size_t(lo - v.begin())] += d_min * inv * inv;
  dv[std::size_t(hi - v.begin())] += d_max * inv * inv;
}

// --------------------------------------------------------------- module

template <typename T>
AttentionModule<T>::AttentionModule(int in_channels, AttentionWidths widths, ScaleScope scope,
                                    const std::string& prefix)
    : in_channels_(in_channels),
      widths_(widths),
      scope_(scope),
      b0_(prefix + ".b0", in_channels, widths.w0, {1, 1, 1}),
      b1_reduce_(prefix + ".b1_reduce", in_channels, widths.r1, {1, 1, 1}),
      b1_(prefix + ".b1", widths.r1, widths.w1, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}),
      b2_reduce_(prefix + ".b2_reduce", in_channels, widths.r2, {1, 1, 1}),
      b2_(prefix + ".b2", widths.r2, widths.w2, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}),
      b3_(prefix + ".b3", in_channels, widths.w3, {1, 1, 1}),
      head_(prefix + ".head", widths.concat(), 1, {1, 1, 1}),
      pool_({3, 3, 3}, {1, 1, 1}, {1, 1, 1}) {}

template <typename T>
void AttentionModule<T>::init(std::mt19937_64& rng) {
  for (auto* c : {&b0_, &b1_reduce_, &b1_, &b2_reduce_, &b2_, &b3_, &head_}) c->init(rng);
}

template <typename T>
std::vector<Param<T>*> AttentionModule<T>::params() {
  std::vector<Param<T>*> out;
  for (auto* c : {&b0_, &b1_reduce_, &b1_, &b2_reduce_, &b2_, &b3_, &head_}) {
    for (auto* p : c->params()) out.push_back(p);
  }
  return out;
}

template <typename T>
Tensor<T> AttentionModule<T>::forward(const Tensor<T>& x) {
  if (x.rank() != 5 || x.dim(1) != in_channels_) {
    throw ShapeError("attention expects N," + std::to_string(in_channels_) + ",T,H,W features, got " +
                     shape_string(x.shape()));
  }
  const int n = x.dim(0), t = x.dim(2), h = x.dim(3), w = x.dim(4);
  const std::size_t vol = std::size_t(t) * h * w;
  const Tensor<T> y0 = b0_.forward(x);
  const Tensor<T> y1 = b1_.forward(b1_reduce_.forward(x));
  const Tensor<T> y2 = b2_.forward(b2_reduce_.forward(x));
  const Tensor<T> y3 = b3_.forward(pool_.forward(x));

  Tensor<T> cat({n, widths_.concat(), t, h, w});
  for (int s = 0; s < n; ++s) {
    T* dst = cat.data() + std::size_t(s) * cat.stride0();
    for (const Tensor<T>* part : {&y0, &y1, &y2, &y3}) {
      const T* src = part->data() + std::size_t(s) * part->stride0();
      dst = std::copy(src, src + part->stride0(), dst);
    }
  }
  response_ = head_.forward(cat);

  Tensor<T> a({n, t, h, w});
  const std::size_t chunk = scope_ == ScaleScope::Volume ? vol : std::size_t(h) * w;
  for (std::size_t off = 0; off < a.size(); off += chunk) {
    minmax_scale<T>(std::span<const T>(response_.data() + off, chunk), std::span<T>(a.data() + off, chunk));
  }
  return a;
}

template <typename T>
Tensor<T> AttentionModule<T>::backward(const Tensor<T>& da) {
  const Shape& rs = response_.shape();
  require_shape(da.shape(), {rs[0], rs[2], rs[3], rs[4]}, "attention map grad");
  const std::size_t chunk =
      scope_ == ScaleScope::Volume ? std::size_t(rs[2]) * rs[3] * rs[4] : std::size_t(rs[3]) * rs[4];
  Tensor<T> dresp(rs);
  for (std::size_t off = 0; off < dresp.size(); off += chunk) {
    minmax_scale_backward<T>(std::span<const T>(response_.data() + off, chunk),
                             std::span<const T>(da.data() + off, chunk), std::span<T>(dresp.data() + off, chunk));
  }
  const Tensor<T> dcat = head_.backward(dresp);

  const int n = rs[0];
  const std::size_t vol = std::size_t(rs[2]) * rs[3] * rs[4];
  const Shape base{n, 0, rs[2], rs[3], rs[4]};
  auto slice = [&](int offset, int width) {
    Shape s = base;
    s[1] = width;
    Tensor<T> out(s);
    for (int i = 0; i < n; ++i) {
      const T* src = dcat.data() + std::size_t(i) * dcat.stride0() + std::size_t(offset) * vol;
      std::copy(src, src + std::size_t(width) * vol, out.data() + std::size_t(i) * out.stride0());
    }
    return out;
  };
  const auto& wd = widths_;
  Tensor<T> dx = b0_.backward(slice(0, wd.w0));
  const Tensor<T> d1 = b1_reduce_.backward(b1_.backward(slice(wd.w0, wd.w1)));
  const Tensor<T> d2 = b2_reduce_.backward(b2_.backward(slice(wd.w0 + wd.w1, wd.w2)));
  const Tensor<T> d3 = pool_.backward(b3_.backward(slice(wd.w0 + wd.w1 + wd.w2, wd.w3)));
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += d1[i] + d2[i] + d3[i];
  return dx;
}

// ---------------------------------------------------------- application

namespace {

template <typename T>
void check_attention_shapes(const Tensor<T>& x, const Tensor<T>& a) {
  if (x.rank() != 5) throw ShapeError("apply_attention expects N,C,T,H,W features");
  const Shape batched{x.dim(0), x.dim(2), x.dim(3), x.dim(4)};
  const Shape single{x.dim(2), x.dim(3), x.dim(4)};
  if (a.shape() != batched && !(x.dim(0) == 1 && a.shape() == single)) {
    throw ShapeError("attention map " + shape_string(a.shape()) + " does not match features " +
                     shape_string(x.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> apply_attention(const Tensor<T>& x, const Tensor<T>& a) {
  check_attention_shapes(x, a);
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t vol = x.stride0() / c;
  Tensor<T> y(x.shape());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n * c; ++i) {
    const T* av = a.data() + std::size_t(i / c) * vol;
    const T* xv = x.data() + std::size_t(i) * vol;
    T* yv = y.data() + std::size_t(i) * vol;
    for (std::size_t j = 0; j < vol; ++j) yv[j] = xv[j] * (T{1} + av[j]);
  }
  return y;
}

template <typename T>
void apply_attention_backward(const Tensor<T>& x, const Tensor<T>& a, const Tensor<T>& dy, Tensor<T>& dx,
                              Tensor<T>& da) {
  check_attention_shapes(x, a);
  require_shape(dy.shape(), x.shape(), "apply_attention output grad");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t vol = x.stride0() / c;
  dx.resize(x.shape());
  da.resize(a.shape());
#pragma omp parallel for schedule(static)
  for (int s = 0; s < n; ++s) {
    const T* av = a.data() + std::size_t(s) * vol;
    T* dav = da.data() + std::size_t(s) * vol;
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (std::size_t(s) * c + ch) * vol;
      for (std::size_t j = 0; j < vol; ++j) {
        dx[off + j] = dy[off + j] * (T{1} + av[j]);
        dav[j] += dy[off + j] * x[off + j];
      }
    }
  }
}

// ------------------------------------------------------------------ loss

template <typename T>
T attention_loss(const Tensor<T>& a, const Tensor<T>& g, Tensor<T>* grad, const std::vector<bool>* valid) {
  require_shape(g.shape(), a.shape(), "gaze heatmap");
  if (a.rank() < 2) throw ShapeError("attention_loss expects at least a 2D map");
  const std::size_t plane = std::size_t(a.dim(a.rank() - 2)) * a.dim(a.rank() - 1);
  const std::size_t slices = a.size() / plane;
  if (valid && valid->size() != slices) throw ShapeError("attention_loss: validity mask length mismatch");
  if (grad) grad->resize(a.shape());
  const T eps = T(kAttentionEps);
  std::size_t used = 0;
  for (std::size_t s = 0; s < slices; ++s) used += (!valid || (*valid)[s]) ? 1 : 0;
  if (used == 0) return T{0};
  T total{0};
  for (std::size_t s = 0; s < slices; ++s) {
    if (valid && !(*valid)[s]) continue;
    const T* av = a.data() + s * plane;
    const T* gv = g.data() + s * plane;
    T norm{0}, gsum{0};
    for (std::size_t j = 0; j < plane; ++j) {
      norm += av[j] + eps;
      gsum += gv[j];
    }
    T kl{0};
    for (std::size_t j = 0; j < plane; ++j) {
      if (gv[j] > T{0}) kl += gv[j] * (std::log(gv[j]) - std::log((av[j] + eps) / norm));
    }
    total += kl;
    if (grad) {
      T* dv = grad->data() + s * plane;
      for (std::size_t j = 0; j < plane; ++j) dv[j] = (gsum / norm - gv[j] / (av[j] + eps)) / T(used);
    }
  }
  return total / T(used);
}

#define GAZEATTN_ATTENTION(T)                                                                            \
  template void minmax_scale<T>(std::span<const T>, std::span<T>);                                      \
  template void minmax_scale_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);         \
  template class AttentionModule<T>;                                                                     \
  template Tensor<T> apply_attention<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template void apply_attention_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                            Tensor<T>&, Tensor<T>&);                                     \
  template T attention_loss<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>*, const std::vector<bool>*);

GAZEATTN_ATTENTION(float)
GAZEATTN_ATTENTION(double)

}  // namespace gazeattn
