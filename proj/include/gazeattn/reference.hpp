#pragma once

// Serial reference kernels: direct nested loops with no unfolding or blocking.
// They exist to check the parallel kernels and to give the benchmark a baseline.

#include <vector>

#include "gazeattn/kernels.hpp"

namespace gazeattn::reference {

template <typename T>
void conv3d_forward(const Window3d& g, int batch, int out_channels, const T* input, const T* weight,
                    const T* bias, T* output);

template <typename T>
void conv3d_backward(const Window3d& g, int batch, int out_channels, const T* input, const T* weight,
                     const T* output_grad, T* input_grad, T* weight_grad, T* bias_grad);

template <typename T>
void maxpool3d_forward(const Window3d& g, int batch, const T* input, T* output);

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda, const T* b,
          int ldb, T beta, T* c, int ldc);

}  // namespace gazeattn::reference
