#ifndef RADDEPTH_KERNELS_HPP
#define RADDEPTH_KERNELS_HPP

#include <cstddef>

// Low-level dense kernels. Every entry point has an OpenMP-parallel
// implementation (the default) and a plain serial reference used by the
// tests and the benchmark target. Layouts: tensors are NCHW, weights are
// OIHW, matrices are row-major.

namespace rd::kernels {

// C[MxN] = A[MxK] * B[KxN]  (+ C if accumulate)
void gemm(const float* A, const float* B, float* C, int M, int K, int N,
          bool accumulate = false);
void gemm_serial(const float* A, const float* B, float* C, int M, int K, int N,
                 bool accumulate = false);

// C[MxN] = A^T[MxK] * B[KxN] with A stored [KxM]
void gemm_at(const float* A, const float* B, float* C, int M, int K, int N,
             bool accumulate = false);
// C[MxN] = A[MxK] * B^T[KxN] with B stored [NxK]
void gemm_bt(const float* A, const float* B, float* C, int M, int K, int N,
             bool accumulate = false);

// im2col for a single image: x[C,H,W] -> cols[C*k*k, OH*OW]
void im2col(const float* x, int C, int H, int W, int k, int stride, int pad,
            float* cols);
// col2im scatter-add, inverse of im2col
void col2im(const float* cols, int C, int H, int W, int k, int stride, int pad,
            float* x);

// y[N,O,OH,OW] = conv(x[N,C,H,W], w[O,C,k,k]) + b[O]
void conv2d_forward(const float* x, const float* w, const float* b, float* y,
                    int N, int C, int H, int W, int O, int k, int stride,
                    int pad, float* cols_scratch);
void conv2d_forward_serial(const float* x, const float* w, const float* b,
                           float* y, int N, int C, int H, int W, int O, int k,
                           int stride, int pad);

// Gradients. dx/dw/db are accumulated into (caller zeroes as needed).
void conv2d_backward(const float* x, const float* w, const float* dy,
                     float* dx, float* dw, float* db, int N, int C, int H,
                     int W, int O, int k, int stride, int pad,
                     float* cols_scratch);

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// 2x2 max pooling, stride 2. argmax records the winning input index per
// output element for the backward pass.
void maxpool2x2_forward(const float* x, float* y, int* argmax, int N, int C,
                        int H, int W);
void maxpool2x2_backward(const float* dy, const int* argmax, float* dx,
                         int N, int C, int H, int W);

// Nearest-neighbor 2x upsample.
void upsample2x_forward(const float* x, float* y, int N, int C, int H, int W);
void upsample2x_backward(const float* dy, float* dx, int N, int C, int H, int W);

}  // namespace rd::kernels

#endif
