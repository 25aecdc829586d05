#include "raddepth/kernels.hpp"

#include <Eigen/Core>
#include <cstring>
#include <vector>

namespace rd::kernels {

using MatMap = Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>;
using CMatMap = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic,
                                               Eigen::Dynamic, Eigen::RowMajor>>;

void gemm(const float* A, const float* B, float* C, int M, int K, int N,
          bool accumulate) {
  CMatMap a(A, M, K), b(B, K, N);
  MatMap c(C, M, N);
  if (accumulate)
    c.noalias() += a * b;
  else
    c.noalias() = a * b;
}

void gemm_serial(const float* A, const float* B, float* C, int M, int K, int N,
                 bool accumulate) {
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < N; ++j) {
      double acc = accumulate ? C[size_t(i) * N + j] : 0.0;
      for (int k = 0; k < K; ++k)
        acc += double(A[size_t(i) * K + k]) * double(B[size_t(k) * N + j]);
      C[size_t(i) * N + j] = float(acc);
    }
  }
}

void gemm_at(const float* A, const float* B, float* C, int M, int K, int N,
             bool accumulate) {
  CMatMap a(A, K, M), b(B, K, N);
  MatMap c(C, M, N);
  if (accumulate)
    c.noalias() += a.transpose() * b;
  else
    c.noalias() = a.transpose() * b;
}

void gemm_bt(const float* A, const float* B, float* C, int M, int K, int N,
             bool accumulate) {
  CMatMap a(A, M, K), b(B, N, K);
  MatMap c(C, M, N);
  if (accumulate)
    c.noalias() += a * b.transpose();
  else
    c.noalias() = a * b.transpose();
}

void im2col(const float* x, int C, int H, int W, int k, int stride, int pad,
            float* cols) {
  const int OH = conv_out_dim(H, k, stride, pad);
  const int OW = conv_out_dim(W, k, stride, pad);
#pragma omp parallel for schedule(static)
  for (int row = 0; row < C * k * k; ++row) {
    const int c = row / (k * k);
    const int ki = (row / k) % k;
    const int kj = row % k;
    float* out = cols + size_t(row) * OH * OW;
    for (int oi = 0; oi < OH; ++oi) {
      const int ii = oi * stride + ki - pad;
      if (ii < 0 || ii >= H) {
        std::memset(out + size_t(oi) * OW, 0, sizeof(float) * OW);
        continue;
      }
      const float* src = x + (size_t(c) * H + ii) * W;
      for (int oj = 0; oj < OW; ++oj) {
        const int jj = oj * stride + kj - pad;
        out[size_t(oi) * OW + oj] = (jj >= 0 && jj < W) ? src[jj] : 0.0f;
      }
    }
  }
}

void col2im(const float* cols, int C, int H, int W, int k, int stride, int pad,
            float* x) {
  const int OH = conv_out_dim(H, k, stride, pad);
  const int OW = conv_out_dim(W, k, stride, pad);
  // Parallel over channels: each channel's scatter targets are disjoint.
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const int row = (c * k + ki) * k + kj;
        const float* src = cols + size_t(row) * OH * OW;
        for (int oi = 0; oi < OH; ++oi) {
          const int ii = oi * stride + ki - pad;
          if (ii < 0 || ii >= H) continue;
          float* dst = x + (size_t(c) * H + ii) * W;
          for (int oj = 0; oj < OW; ++oj) {
            const int jj = oj * stride + kj - pad;
            if (jj >= 0 && jj < W) dst[jj] += src[size_t(oi) * OW + oj];
          }
        }
      }
    }
  }
}

void conv2d_forward(const float* x, const float* w, const float* b, float* y,
                    int N, int C, int H, int W, int O, int k, int stride,
                    int pad, float* cols_scratch) {
  const int OH = conv_out_dim(H, k, stride, pad);
  const int OW = conv_out_dim(W, k, stride, pad);
  const size_t cols_size = size_t(C) * k * k * OH * OW;
  std::vector<float> local;
  float* cols = cols_scratch;
  if (!cols) {
    local.resize(cols_size);
    cols = local.data();
  }
  for (int n = 0; n < N; ++n) {
    im2col(x + size_t(n) * C * H * W, C, H, W, k, stride, pad, cols);
    float* yn = y + size_t(n) * O * OH * OW;
    gemm(w, cols, yn, O, C * k * k, OH * OW);
    if (b) {
#pragma omp parallel for schedule(static)
      for (int o = 0; o < O; ++o) {
        float* dst = yn + size_t(o) * OH * OW;
        for (int i = 0; i < OH * OW; ++i) dst[i] += b[o];
      }
    }
  }
}

void conv2d_forward_serial(const float* x, const float* w, const float* b,
                           float* y, int N, int C, int H, int W, int O, int k,
                           int stride, int pad) {
  const int OH = conv_out_dim(H, k, stride, pad);
  const int OW = conv_out_dim(W, k, stride, pad);
  for (int n = 0; n < N; ++n) {
    for (int o = 0; o < O; ++o) {
      for (int oi = 0; oi < OH; ++oi) {
        for (int oj = 0; oj < OW; ++oj) {
          double acc = b ? b[o] : 0.0;
          for (int c = 0; c < C; ++c) {
            for (int ki = 0; ki < k; ++ki) {
              const int ii = oi * stride + ki - pad;
              if (ii < 0 || ii >= H) continue;
              for (int kj = 0; kj < k; ++kj) {
                const int jj = oj * stride + kj - pad;
                if (jj < 0 || jj >= W) continue;
                acc += double(x[((size_t(n) * C + c) * H + ii) * W + jj]) *
                       double(w[((size_t(o) * C + c) * k + ki) * k + kj]);
              }
            }
          }
          y[((size_t(n) * O + o) * OH + oi) * OW + oj] = float(acc);
        }
      }
    }
  }
}

void conv2d_backward(const float* x, const float* w, const float* dy,
                     float* dx, float* dw, float* db, int N, int C, int H,
                     int W, int O, int k, int stride, int pad,
                     float* cols_scratch) {
  const int OH = conv_out_dim(H, k, stride, pad);
  const int OW = conv_out_dim(W, k, stride, pad);
  const int K = C * k * k;
  const size_t cols_size = size_t(K) * OH * OW;
  std::vector<float> local;
  float* cols = cols_scratch;
  if (!cols) {
    local.resize(cols_size);
    cols = local.data();
  }
  for (int n = 0; n < N; ++n) {
    const float* dyn = dy + size_t(n) * O * OH * OW;
    if (dw) {
      // dw += dy_n * cols_n^T
      im2col(x + size_t(n) * C * H * W, C, H, W, k, stride, pad, cols);
      gemm_bt(dyn, cols, dw, O, OH * OW, K, /*accumulate=*/true);
    }
    if (db) {
#pragma omp parallel for schedule(static)
      for (int o = 0; o < O; ++o) {
        double acc = 0.0;
        const float* src = dyn + size_t(o) * OH * OW;
        for (int i = 0; i < OH * OW; ++i) acc += src[i];
        db[o] += float(acc);
      }
    }
    if (dx) {
      // dcols = w^T * dy_n, then scatter back
      gemm_at(w, dyn, cols, K, O, OH * OW);
      col2im(cols, C, H, W, k, stride, pad, dx + size_t(n) * C * H * W);
    }
  }
}

void maxpool2x2_forward(const float* x, float* y, int* argmax, int N, int C,
                        int H, int W) {
  const int OH = H / 2, OW = W / 2;
#pragma omp parallel for schedule(static)
  for (int nc = 0; nc < N * C; ++nc) {
    const float* src = x + size_t(nc) * H * W;
    float* dst = y + size_t(nc) * OH * OW;
    int* am = argmax + size_t(nc) * OH * OW;
    for (int oi = 0; oi < OH; ++oi) {
      for (int oj = 0; oj < OW; ++oj) {
        int base = (2 * oi) * W + 2 * oj;
        int best = base;
        float bv = src[base];
        const int cand[3] = {base + 1, base + W, base + W + 1};
        for (int idx : cand)
          if (src[idx] > bv) { bv = src[idx]; best = idx; }
        dst[oi * OW + oj] = bv;
        am[oi * OW + oj] = best;
      }
    }
  }
}

void maxpool2x2_backward(const float* dy, const int* argmax, float* dx,
                         int N, int C, int H, int W) {
  const int OH = H / 2, OW = W / 2;
#pragma omp parallel for schedule(static)
  for (int nc = 0; nc < N * C; ++nc) {
    const float* src = dy + size_t(nc) * OH * OW;
    const int* am = argmax + size_t(nc) * OH * OW;
    float* dst = dx + size_t(nc) * H * W;
    for (int i = 0; i < OH * OW; ++i) dst[am[i]] += src[i];
  }
}

void upsample2x_forward(const float* x, float* y, int N, int C, int H, int W) {
#pragma omp parallel for schedule(static)
  for (int nc = 0; nc < N * C; ++nc) {
    const float* src = x + size_t(nc) * H * W;
    float* dst = y + size_t(nc) * 4 * H * W;
    const int OW = 2 * W;
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        const float v = src[i * W + j];
        float* d = dst + (2 * i) * OW + 2 * j;
        d[0] = v;
        d[1] = v;
        d[OW] = v;
        d[OW + 1] = v;
      }
    }
  }
}

void upsample2x_backward(const float* dy, float* dx, int N, int C, int H,
                         int W) {
#pragma omp parallel for schedule(static)
  for (int nc = 0; nc < N * C; ++nc) {
    const float* src = dy + size_t(nc) * 4 * H * W;
    float* dst = dx + size_t(nc) * H * W;
    const int OW = 2 * W;
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        const float* s = src + (2 * i) * OW + 2 * j;
        dst[i * W + j] += s[0] + s[1] + s[OW] + s[OW + 1];
      }
    }
  }
}

}  // namespace rd::kernels
