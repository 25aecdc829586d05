#ifndef RADDEPTH_OBJECTIVE_HPP
#define RADDEPTH_OBJECTIVE_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

// Loss terms with hand-derived analytic gradients. Everything is templated
// on the scalar type: training runs in float, the finite-difference checks
// run the same code in double.

namespace rd::objective {

struct LossWeights {
  double w1 = 0.0;
  double w2 = 0.0;
};

struct LossReport {
  double l1_stage1 = 0.0;
  double l1_stage2 = 0.0;
  double smooth = 0.0;
  double total = 0.0;
};

constexpr double kSmoothCoeff = 1e-3;

// Mean |pred - gt| over valid (gt > 0) pixels. grad, when given, is
// accumulated with d(loss)/d(pred).
template <typename T>
T masked_l1(const T* pred, const T* gt, size_t n, T* grad = nullptr,
            T grad_scale = T(1)) {
  size_t valid = 0;
  for (size_t i = 0; i < n; ++i)
    if (gt[i] > T(0)) ++valid;
  if (valid == 0) throw std::invalid_argument("masked_l1: no valid pixels");
  T sum = 0;
  for (size_t i = 0; i < n; ++i) {
    if (gt[i] <= T(0)) continue;
    const T d = pred[i] - gt[i];
    sum += std::abs(d);
    if (grad) grad[i] += grad_scale * (d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0))) / T(valid);
  }
  return sum / T(valid);
}

// Edge-aware smoothness: mean over forward differences of
// |grad pred| * exp(-|grad image|), per axis, image gradient averaged over
// the 3 channels before the exponent. u = height axis, v = width axis.
template <typename T>
T edge_aware_smoothness(const T* pred, const T* image3, int H, int W,
                        T* grad = nullptr, T grad_scale = T(1)) {
  const size_t plane = size_t(H) * W;
  auto img = [&](int c, int r, int col) -> T { return image3[c * plane + size_t(r) * W + col]; };
  T total = 0;
  // along height (last row excluded)
  if (H > 1) {
    const T inv_n = T(1) / T(size_t(H - 1) * W);
    for (int r = 0; r + 1 < H; ++r)
      for (int c = 0; c < W; ++c) {
        const T dp = pred[size_t(r + 1) * W + c] - pred[size_t(r) * W + c];
        T gi = 0;
        for (int ch = 0; ch < 3; ++ch) gi += std::abs(img(ch, r + 1, c) - img(ch, r, c));
        gi /= T(3);
        const T wgt = std::exp(-gi);
        total += std::abs(dp) * wgt * inv_n;
        if (grad) {
          const T s = grad_scale * wgt * inv_n * (dp > T(0) ? T(1) : (dp < T(0) ? T(-1) : T(0)));
          grad[size_t(r + 1) * W + c] += s;
          grad[size_t(r) * W + c] -= s;
        }
      }
  }
  // along width (last column excluded)
  if (W > 1) {
    const T inv_n = T(1) / T(size_t(H) * (W - 1));
    for (int r = 0; r < H; ++r)
      for (int c = 0; c + 1 < W; ++c) {
        const T dp = pred[size_t(r) * W + c + 1] - pred[size_t(r) * W + c];
        T gi = 0;
        for (int ch = 0; ch < 3; ++ch) gi += std::abs(img(ch, r, c + 1) - img(ch, r, c));
        gi /= T(3);
        const T wgt = std::exp(-gi);
        total += std::abs(dp) * wgt * inv_n;
        if (grad) {
          const T s = grad_scale * wgt * inv_n * (dp > T(0) ? T(1) : (dp < T(0) ? T(-1) : T(0)));
          grad[size_t(r) * W + c + 1] += s;
          grad[size_t(r) * W + c] -= s;
        }
      }
  }
  return total;
}

// total = e^{-w1} (L1(stage1, gt) + 1e-3 * smooth * [smoothness_on])
//       + e^{-w2} L1(final, gt) + w1 + w2
// Gradients (all optional, accumulated):
//   d/dstage1, d/dfinal over the pixel grids; dw1, dw2 scalars.
template <typename T>
LossReport total_loss(const T* stage1, const T* final_pred, const T* gt,
                      const T* image3, int H, int W, const LossWeights& w,
                      bool smoothness_on, T* grad_stage1 = nullptr,
                      T* grad_final = nullptr, T* dw1 = nullptr,
                      T* dw2 = nullptr) {
  const size_t n = size_t(H) * W;
  const T e1 = std::exp(T(-w.w1));
  const T e2 = std::exp(T(-w.w2));
  LossReport rep;
  rep.l1_stage1 = double(masked_l1<T>(stage1, gt, n, grad_stage1, e1));
  rep.l1_stage2 = double(masked_l1<T>(final_pred, gt, n, grad_final, e2));
  if (smoothness_on)
    rep.smooth = double(edge_aware_smoothness<T>(stage1, image3, H, W, grad_stage1,
                                                 e1 * T(kSmoothCoeff)));
  const double stage1_term = rep.l1_stage1 + (smoothness_on ? kSmoothCoeff * rep.smooth : 0.0);
  rep.total = double(e1) * stage1_term + double(e2) * rep.l1_stage2 + w.w1 + w.w2;
  if (dw1) *dw1 += T(-double(e1) * stage1_term + 1.0);
  if (dw2) *dw2 += T(-double(e2) * rep.l1_stage2 + 1.0);
  return rep;
}

}  // namespace rd::objective

#endif
