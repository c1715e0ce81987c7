#pragma once

// OpenMP-parallel compute kernels. Every parallel loop partitions independent
// outputs, and each output is reduced in a fixed order, so results are
// bit-identical for any thread count. Serial counterparts for testing live in
// reference.hpp.

#include <array>
#include <cstddef>
#include <vector>

namespace gazeattn {

using Triple = std::array<int, 3>;  // (t, h, w)

/// Geometry of a 3D convolution or pooling window over one C,T,H,W sample.
struct Window3d {
  int channels = 1;
  Triple in{1, 1, 1};
  Triple kernel{1, 1, 1};
  Triple stride{1, 1, 1};
  Triple pad{0, 0, 0};

  int out(int axis) const { return (in[axis] + 2 * pad[axis] - kernel[axis]) / stride[axis] + 1; }
  Triple out_dims() const { return {out(0), out(1), out(2)}; }
  std::size_t in_volume() const { return std::size_t(in[0]) * in[1] * in[2]; }
  std::size_t out_volume() const { return std::size_t(out(0)) * out(1) * out(2); }
  std::size_t taps() const { return std::size_t(kernel[0]) * kernel[1] * kernel[2]; }
  bool pointwise() const;
  /// Throws ShapeError if the window does not fit the input.
  void validate() const;
};

namespace kernels {

/// C[MxN] = alpha * op(A) * op(B) + beta * C, row-major, op = transpose when flagged.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda, const T* b,
          int ldb, T beta, T* c, int ldc);

/// Unfolds one sample into a (channels*taps) x out_volume column matrix.
template <typename T>
void im2col(const Window3d& g, const T* input, T* cols);

/// Accumulates a column matrix back into the (zero-initialized or partial) input gradient.
template <typename T>
void col2im(const Window3d& g, const T* cols, T* input_grad);

/// Batched convolution. input: N x Cin x in; weight: Cout x Cin x kernel; output: N x Cout x out.
template <typename T>
void conv3d_forward(const Window3d& g, int batch, int out_channels, const T* input, const T* weight,
                    const T* bias, T* output, std::vector<T>& workspace);

/// Accumulates weight/bias gradients; writes input_grad when non-null.
template <typename T>
void conv3d_backward(const Window3d& g, int batch, int out_channels, const T* input, const T* weight,
                     const T* output_grad, T* input_grad, T* weight_grad, T* bias_grad,
                     std::vector<T>& workspace);

/// Max pooling with padding treated as -inf. argmax receives flat input offsets per output.
template <typename T>
void maxpool3d_forward(const Window3d& g, int batch, const T* input, T* output, std::vector<int>& argmax);

template <typename T>
void maxpool3d_backward(const Window3d& g, int batch, const T* output_grad, const std::vector<int>& argmax,
                        T* input_grad);

template <typename T>
void relu_forward(std::size_t n, const T* x, T* y);

template <typename T>
void relu_backward(std::size_t n, const T* y, const T* dy, T* dx);

}  // namespace kernels
}  // namespace gazeattn
