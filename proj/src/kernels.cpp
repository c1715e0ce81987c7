#include "gazeattn/kernels.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "gazeattn/error.hpp"

namespace gazeattn {

bool Window3d::pointwise() const {
  return kernel == Triple{1, 1, 1} && stride == Triple{1, 1, 1} && pad == Triple{0, 0, 0};
}

void Window3d::validate() const {
  if (channels < 1) throw ShapeError("window needs at least one channel");
  for (int a = 0; a < 3; ++a) {
    if (in[a] < 1 || kernel[a] < 1 || stride[a] < 1 || pad[a] < 0) {
      throw ShapeError("invalid window geometry on axis " + std::to_string(a));
    }
    if (in[a] + 2 * pad[a] < kernel[a]) {
      throw ShapeError("kernel extent " + std::to_string(kernel[a]) + " exceeds padded input " +
                       std::to_string(in[a] + 2 * pad[a]) + " on axis " + std::to_string(a));
    }
  }
}

namespace kernels {
namespace {

template <typename T>
constexpr int kTileRows = 4;
template <typename T>
constexpr int kTileCols = 256 / int(sizeof(T));

// Full MR x NR tile; the accumulator block is sized to stay in vector registers.
template <typename T>
inline void tile_full(int n, int k, T alpha, const T* __restrict a, const T* __restrict b, T beta,
                      T* __restrict c, int ldc) {
  constexpr int MR = kTileRows<T>;
  constexpr int NR = kTileCols<T>;
  T acc[MR][NR] = {};
  for (int p = 0; p < k; ++p) {
    const T* __restrict brow = b + std::size_t(p) * n;
    for (int r = 0; r < MR; ++r) {
      const T av = a[std::size_t(r) * k + p];
#pragma omp simd
      for (int j = 0; j < NR; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (int r = 0; r < MR; ++r) {
    T* crow = c + std::size_t(r) * ldc;
    if (beta == T{0}) {
      for (int j = 0; j < NR; ++j) crow[j] = alpha * acc[r][j];
    } else {
      for (int j = 0; j < NR; ++j) crow[j] = alpha * acc[r][j] + beta * crow[j];
    }
  }
}

template <typename T>
inline void tile_edge(int rows, int cols, int n, int k, T alpha, const T* a, const T* b, T beta, T* c,
                      int ldc) {
  constexpr int NR = kTileCols<T>;
  T acc[NR];
  for (int r = 0; r < rows; ++r) {
    std::fill(acc, acc + cols, T{0});
    for (int p = 0; p < k; ++p) {
      const T av = a[std::size_t(r) * k + p];
      const T* brow = b + std::size_t(p) * n;
      for (int j = 0; j < cols; ++j) acc[j] += av * brow[j];
    }
    T* crow = c + std::size_t(r) * ldc;
    for (int j = 0; j < cols; ++j) {
      crow[j] = beta == T{0} ? alpha * acc[j] : alpha * acc[j] + beta * crow[j];
    }
  }
}

// Copies op(X) (rows x cols) into a dense row-major buffer.
template <typename T>
const T* pack(bool trans, int rows, int cols, const T* x, int ldx, std::vector<T>& buf) {
  if (!trans && ldx == cols) return x;
  buf.resize(std::size_t(rows) * cols);
  if (trans) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) buf[std::size_t(i) * cols + j] = x[std::size_t(j) * ldx + i];
  } else {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i)
      std::copy_n(x + std::size_t(i) * ldx, cols, buf.data() + std::size_t(i) * cols);
  }
  return buf.data();
}

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda, const T* b,
          int ldb, T beta, T* c, int ldc) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) c[std::size_t(i) * ldc + j] *= beta;
    return;
  }
  thread_local std::vector<T> abuf, bbuf;
  const T* ap = pack(trans_a, m, k, a, lda, abuf);
  const T* bp = pack(trans_b, k, n, b, ldb, bbuf);

  constexpr int MR = kTileRows<T>;
  constexpr int NR = kTileCols<T>;
  const int row_tiles = (m + MR - 1) / MR;
  const int col_tiles = (n + NR - 1) / NR;
#pragma omp parallel for collapse(2) schedule(static)
  for (int jt = 0; jt < col_tiles; ++jt) {
    for (int it = 0; it < row_tiles; ++it) {
      const int i0 = it * MR, j0 = jt * NR;
      const int rows = std::min(MR, m - i0), cols = std::min(NR, n - j0);
      const T* at = ap + std::size_t(i0) * k;
      const T* bt = bp + j0;
      T* ct = c + std::size_t(i0) * ldc + j0;
      if (rows == MR && cols == NR) {
        tile_full<T>(n, k, alpha, at, bt, beta, ct, ldc);
      } else {
        tile_edge<T>(rows, cols, n, k, alpha, at, bt, beta, ct, ldc);
      }
    }
  }
}

template <typename T>
void im2col(const Window3d& g, const T* input, T* cols) {
  const auto [ot, oh, ow] = g.out_dims();
  const int kt = g.kernel[0], kh = g.kernel[1], kw = g.kernel[2];
  const int rows = g.channels * kt * kh * kw;
  const std::size_t plane = g.out_volume();
#pragma omp parallel for schedule(static)
  for (int row = 0; row < rows; ++row) {
    const int dw = row % kw, dh = (row / kw) % kh, dt = (row / (kw * kh)) % kt, c = row / (kw * kh * kt);
    const T* src = input + std::size_t(c) * g.in_volume();
    T* dst = cols + std::size_t(row) * plane;
    for (int t = 0; t < ot; ++t) {
      const int it = t * g.stride[0] - g.pad[0] + dt;
      for (int h = 0; h < oh; ++h) {
        const int ih = h * g.stride[1] - g.pad[1] + dh;
        T* out = dst + (std::size_t(t) * oh + h) * ow;
        if (it < 0 || it >= g.in[0] || ih < 0 || ih >= g.in[1]) {
          std::fill(out, out + ow, T{0});
          continue;
        }
        const T* line = src + (std::size_t(it) * g.in[1] + ih) * g.in[2];
        for (int w = 0; w < ow; ++w) {
          const int iw = w * g.stride[2] - g.pad[2] + dw;
          out[w] = (iw >= 0 && iw < g.in[2]) ? line[iw] : T{0};
        }
      }
    }
  }
}

template <typename T>
void col2im(const Window3d& g, const T* cols, T* input_grad) {
  const auto [ot, oh, ow] = g.out_dims();
  const int kt = g.kernel[0], kh = g.kernel[1], kw = g.kernel[2];
  const int taps = kt * kh * kw;
  const std::size_t plane = g.out_volume();
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.channels; ++c) {
    T* dst = input_grad + std::size_t(c) * g.in_volume();
    for (int tap = 0; tap < taps; ++tap) {
      const int dw = tap % kw, dh = (tap / kw) % kh, dt = tap / (kw * kh);
      const T* src = cols + (std::size_t(c) * taps + tap) * plane;
      for (int t = 0; t < ot; ++t) {
        const int it = t * g.stride[0] - g.pad[0] + dt;
        if (it < 0 || it >= g.in[0]) continue;
        for (int h = 0; h < oh; ++h) {
          const int ih = h * g.stride[1] - g.pad[1] + dh;
          if (ih < 0 || ih >= g.in[1]) continue;
          T* line = dst + (std::size_t(it) * g.in[1] + ih) * g.in[2];
          const T* in = src + (std::size_t(t) * oh + h) * ow;
          for (int w = 0; w < ow; ++w) {
            const int iw = w * g.stride[2] - g.pad[2] + dw;
            if (iw >= 0 && iw < g.in[2]) line[iw] += in[w];
          }
        }
      }
    }
  }
}

template <typename T>
void conv3d_forward(const Window3d& g, int batch, int out_channels, const T* input, const T* weight,
                    const T* bias, T* output, std::vector<T>& workspace) {
  g.validate();
  const int k = int(g.channels * g.taps());
  const int p = int(g.out_volume());
  const bool direct = g.pointwise();
  if (!direct) workspace.resize(std::size_t(k) * p);
  for (int s = 0; s < batch; ++s) {
    const T* x = input + std::size_t(s) * g.channels * g.in_volume();
    T* y = output + std::size_t(s) * out_channels * p;
    const T* cols = x;
    if (!direct) {
      im2col(g, x, workspace.data());
      cols = workspace.data();
    }
    gemm<T>(false, false, out_channels, p, k, T{1}, weight, k, cols, p, T{0}, y, p);
    if (bias) {
#pragma omp parallel for schedule(static)
      for (int o = 0; o < out_channels; ++o) {
        T* row = y + std::size_t(o) * p;
        const T b = bias[o];
        for (int j = 0; j < p; ++j) row[j] += b;
      }
    }
  }
}

template <typename T>
void conv3d_backward(const Window3d& g, int batch, int out_channels, const T* input, const T* weight,
                     const T* output_grad, T* input_grad, T* weight_grad, T* bias_grad,
                     std::vector<T>& workspace) {
  g.validate();
  const int k = int(g.channels * g.taps());
  const int p = int(g.out_volume());
  const bool direct = g.pointwise();
  const std::size_t cols_size = std::size_t(k) * p;
  if (!direct) workspace.resize(2 * cols_size);
  for (int s = 0; s < batch; ++s) {
    const T* x = input + std::size_t(s) * g.channels * g.in_volume();
    const T* dy = output_grad + std::size_t(s) * out_channels * p;
    const T* cols = x;
    if (!direct) {
      im2col(g, x, workspace.data());
      cols = workspace.data();
    }
    gemm<T>(false, true, out_channels, k, p, T{1}, dy, p, cols, p, T{1}, weight_grad, k);
    if (bias_grad) {
#pragma omp parallel for schedule(static)
      for (int o = 0; o < out_channels; ++o) {
        const T* row = dy + std::size_t(o) * p;
        T acc{0};
        for (int j = 0; j < p; ++j) acc += row[j];
        bias_grad[o] += acc;
      }
    }
    if (input_grad) {
      T* dx = input_grad + std::size_t(s) * g.channels * g.in_volume();
      if (direct) {
        gemm<T>(true, false, k, p, out_channels, T{1}, weight, k, dy, p, T{0}, dx, p);
      } else {
        T* dcols = workspace.data() + cols_size;
        gemm<T>(true, false, k, p, out_channels, T{1}, weight, k, dy, p, T{0}, dcols, p);
        std::fill(dx, dx + std::size_t(g.channels) * g.in_volume(), T{0});
        col2im(g, dcols, dx);
      }
    }
  }
}

template <typename T>
void maxpool3d_forward(const Window3d& g, int batch, const T* input, T* output, std::vector<int>& argmax) {
  g.validate();
  const auto [ot, oh, ow] = g.out_dims();
  const int planes = batch * g.channels;
  const std::size_t in_plane = g.in_volume(), out_plane = g.out_volume();
  argmax.resize(planes * out_plane);
#pragma omp parallel for schedule(static)
  for (int pl = 0; pl < planes; ++pl) {
    const T* x = input + pl * in_plane;
    for (int t = 0; t < ot; ++t)
      for (int h = 0; h < oh; ++h)
        for (int w = 0; w < ow; ++w) {
          T best = -std::numeric_limits<T>::infinity();
          int best_at = -1;
          for (int dt = 0; dt < g.kernel[0]; ++dt) {
            const int it = t * g.stride[0] - g.pad[0] + dt;
            if (it < 0 || it >= g.in[0]) continue;
            for (int dh = 0; dh < g.kernel[1]; ++dh) {
              const int ih = h * g.stride[1] - g.pad[1] + dh;
              if (ih < 0 || ih >= g.in[1]) continue;
              for (int dw = 0; dw < g.kernel[2]; ++dw) {
                const int iw = w * g.stride[2] - g.pad[2] + dw;
                if (iw < 0 || iw >= g.in[2]) continue;
                const int at = (it * g.in[1] + ih) * g.in[2] + iw;
                if (best_at < 0 || x[at] > best) {
                  best = x[at];
                  best_at = at;
                }
              }
            }
          }
          const std::size_t o = pl * out_plane + (std::size_t(t) * oh + h) * ow + w;
          output[o] = best;
          argmax[o] = best_at;
        }
  }
}

template <typename T>
void maxpool3d_backward(const Window3d& g, int batch, const T* output_grad, const std::vector<int>& argmax,
                        T* input_grad) {
  const int planes = batch * g.channels;
  const std::size_t in_plane = g.in_volume(), out_plane = g.out_volume();
#pragma omp parallel for schedule(static)
  for (int pl = 0; pl < planes; ++pl) {
    T* dx = input_grad + pl * in_plane;
    std::fill(dx, dx + in_plane, T{0});
    for (std::size_t o = 0; o < out_plane; ++o) {
      const std::size_t idx = pl * out_plane + o;
      dx[argmax[idx]] += output_grad[idx];
    }
  }
}

template <typename T>
void relu_forward(std::size_t n, const T* x, T* y) {
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
}

template <typename T>
void relu_backward(std::size_t n, const T* y, const T* dy, T* dx) {
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) dx[i] = y[i] > T{0} ? dy[i] : T{0};
}

#define GAZEATTN_KERNELS(T)                                                                              \
  template void gemm<T>(bool, bool, int, int, int, T, const T*, int, const T*, int, T, T*, int);          \
  template void im2col<T>(const Window3d&, const T*, T*);                                                \
  template void col2im<T>(const Window3d&, const T*, T*);                                                \
  template void conv3d_forward<T>(const Window3d&, int, int, const T*, const T*, const T*, T*,           \
                                  std::vector<T>&);                                                      \
  template void conv3d_backward<T>(const Window3d&, int, int, const T*, const T*, const T*, T*, T*, T*, \
                                   std::vector<T>&);                                                     \
  template void maxpool3d_forward<T>(const Window3d&, int, const T*, T*, std::vector<int>&);             \
  template void maxpool3d_backward<T>(const Window3d&, int, const T*, const std::vector<int>&, T*);      \
  template void relu_forward<T>(std::size_t, const T*, T*);                                              \
  template void relu_backward<T>(std::size_t, const T*, const T*, T*);

GAZEATTN_KERNELS(float)
GAZEATTN_KERNELS(double)

}  // namespace kernels
}  // namespace gazeattn
