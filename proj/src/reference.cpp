#include "gazeattn/reference.hpp"

#include <algorithm>
#include <limits>

namespace gazeattn::reference {
namespace {

// Input offset for an output position and kernel tap, or -1 when it falls in padding.
inline long tap_offset(const Window3d& g, int t, int h, int w, int dt, int dh, int dw) {
  const int it = t * g.stride[0] - g.pad[0] + dt;
  const int ih = h * g.stride[1] - g.pad[1] + dh;
  const int iw = w * g.stride[2] - g.pad[2] + dw;
  if (it < 0 || it >= g.in[0] || ih < 0 || ih >= g.in[1] || iw < 0 || iw >= g.in[2]) return -1;
  return (long(it) * g.in[1] + ih) * g.in[2] + iw;
}

}  // namespace

template <typename T>
void conv3d_forward(const Window3d& g, int batch, int out_channels, const T* input, const T* weight,
                    const T* bias, T* output) {
  g.validate();
  const auto [ot, oh, ow] = g.out_dims();
  const auto [kt, kh, kw] = g.kernel;
  for (int s = 0; s < batch; ++s)
    for (int o = 0; o < out_channels; ++o)
      for (int t = 0; t < ot; ++t)
        for (int h = 0; h < oh; ++h)
          for (int w = 0; w < ow; ++w) {
            T acc = bias ? bias[o] : T{0};
            for (int c = 0; c < g.channels; ++c)
              for (int dt = 0; dt < kt; ++dt)
                for (int dh = 0; dh < kh; ++dh)
                  for (int dw = 0; dw < kw; ++dw) {
                    const long off = tap_offset(g, t, h, w, dt, dh, dw);
                    if (off < 0) continue;
                    const T x = input[(long(s) * g.channels + c) * long(g.in_volume()) + off];
                    acc += weight[(((long(o) * g.channels + c) * kt + dt) * kh + dh) * kw + dw] * x;
                  }
            output[((long(s) * out_channels + o) * ot + t) * oh * ow + long(h) * ow + w] = acc;
          }
}

template <typename T>
void conv3d_backward(const Window3d& g, int batch, int out_channels, const T* input, const T* weight,
                     const T* output_grad, T* input_grad, T* weight_grad, T* bias_grad) {
  g.validate();
  const auto [ot, oh, ow] = g.out_dims();
  const auto [kt, kh, kw] = g.kernel;
  if (input_grad) std::fill(input_grad, input_grad + long(batch) * g.channels * long(g.in_volume()), T{0});
  for (int s = 0; s < batch; ++s)
    for (int o = 0; o < out_channels; ++o)
      for (int t = 0; t < ot; ++t)
        for (int h = 0; h < oh; ++h)
          for (int w = 0; w < ow; ++w) {
            const T dy = output_grad[((long(s) * out_channels + o) * ot + t) * oh * ow + long(h) * ow + w];
            if (bias_grad) bias_grad[o] += dy;
            for (int c = 0; c < g.channels; ++c)
              for (int dt = 0; dt < kt; ++dt)
                for (int dh = 0; dh < kh; ++dh)
                  for (int dw = 0; dw < kw; ++dw) {
                    const long off = tap_offset(g, t, h, w, dt, dh, dw);
                    if (off < 0) continue;
                    const long xi = (long(s) * g.channels + c) * long(g.in_volume()) + off;
                    const long wi = (((long(o) * g.channels + c) * kt + dt) * kh + dh) * kw + dw;
                    weight_grad[wi] += dy * input[xi];
                    if (input_grad) input_grad[xi] += dy * weight[wi];
                  }
          }
}

template <typename T>
void maxpool3d_forward(const Window3d& g, int batch, const T* input, T* output) {
  g.validate();
  const auto [ot, oh, ow] = g.out_dims();
  for (int pl = 0; pl < batch * g.channels; ++pl)
    for (int t = 0; t < ot; ++t)
      for (int h = 0; h < oh; ++h)
        for (int w = 0; w < ow; ++w) {
          T best = -std::numeric_limits<T>::infinity();
          for (int dt = 0; dt < g.kernel[0]; ++dt)
            for (int dh = 0; dh < g.kernel[1]; ++dh)
              for (int dw = 0; dw < g.kernel[2]; ++dw) {
                const long off = tap_offset(g, t, h, w, dt, dh, dw);
                if (off >= 0) best = std::max(best, input[long(pl) * long(g.in_volume()) + off]);
              }
          output[((long(pl) * ot + t) * oh + h) * ow + w] = best;
        }
}

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda, const T* b,
          int ldb, T beta, T* c, int ldc) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T acc{0};
      for (int p = 0; p < k; ++p) {
        const T av = trans_a ? a[long(p) * lda + i] : a[long(i) * lda + p];
        const T bv = trans_b ? b[long(j) * ldb + p] : b[long(p) * ldb + j];
        acc += av * bv;
      }
      T& out = c[long(i) * ldc + j];
      out = beta == T{0} ? alpha * acc : alpha * acc + beta * out;
    }
}

#define GAZEATTN_REFERENCE(T)                                                                         \
  template void conv3d_forward<T>(const Window3d&, int, int, const T*, const T*, const T*, T*);       \
  template void conv3d_backward<T>(const Window3d&, int, int, const T*, const T*, const T*, T*, T*, T*); \
  template void maxpool3d_forward<T>(const Window3d&, int, const T*, T*);                             \
  template void gemm<T>(bool, bool, int, int, int, T, const T*, int, const T*, int, T, T*, int);

GAZEATTN_REFERENCE(float)
GAZEATTN_REFERENCE(double)

}  // namespace gazeattn::reference
