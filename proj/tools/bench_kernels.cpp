// Timing comparison of the parallel conv path (im2col + GEMM, OpenMP) against
// the serial reference implementation kept for testing.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "raddepth/kernels.hpp"

using namespace rd::kernels;
using clk = std::chrono::steady_clock;

namespace {

void fill(std::vector<float>& v, unsigned seed) {
  unsigned s = seed * 2654435761u + 1;
  for (float& x : v) {
    s = s * 1664525u + 1013904223u;
    x = float(int(s >> 9) % 2048 - 1024) / 1024.0f;
  }
}

template <typename F>
double time_best_of(int reps, F&& f) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = clk::now();
    f();
    const auto t1 = clk::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

struct Case {
  int n, cin, h, w, cout, k, stride, pad;
};

}  // namespace

int main() {
  const Case cases[] = {
      {1, 3, 96, 160, 16, 7, 2, 3},    // stem
      {2, 16, 48, 80, 32, 3, 2, 1},    // early stage
      {4, 64, 12, 20, 128, 3, 1, 1},   // deep stage
      {1, 32, 225, 400, 32, 5, 1, 2},  // decoder at large resolution
  };

  std::printf("%-28s %10s %10s %8s %10s\n", "conv2d (NxCxHxW out k s p)",
              "serial ms", "openmp ms", "speedup", "max|diff|");
  for (const Case& c : cases) {
    const int oh = conv_out_dim(c.h, c.k, c.stride, c.pad);
    const int ow = conv_out_dim(c.w, c.k, c.stride, c.pad);
    std::vector<float> x(size_t(c.n) * c.cin * c.h * c.w);
    std::vector<float> wgt(size_t(c.cout) * c.cin * c.k * c.k);
    std::vector<float> bias(size_t(c.cout));
    std::vector<float> y_fast(size_t(c.n) * c.cout * oh * ow);
    std::vector<float> y_ref(y_fast.size());
    fill(x, 1);
    fill(wgt, 2);
    fill(bias, 3);

    const double t_ref = time_best_of(3, [&] {
      conv2d_forward_serial(x.data(), wgt.data(), bias.data(), y_ref.data(),
                            c.n, c.cin, c.h, c.w, c.cout, c.k, c.stride, c.pad);
    });
    std::vector<float> cols(size_t(c.cin) * c.k * c.k * oh * ow);
    const double t_fast = time_best_of(3, [&] {
      conv2d_forward(x.data(), wgt.data(), bias.data(), y_fast.data(), c.n,
                     c.cin, c.h, c.w, c.cout, c.k, c.stride, c.pad, cols.data());
    });
    double maxdiff = 0;
    for (size_t i = 0; i < y_fast.size(); ++i)
      maxdiff = std::max(maxdiff, double(std::fabs(y_fast[i] - y_ref[i])));

    std::printf("%dx%dx%dx%d->%d k%d s%d p%d %*s %10.2f %10.2f %7.1fx %10.2e\n",
                c.n, c.cin, c.h, c.w, c.cout, c.k, c.stride, c.pad,
                int(28 - 24), "", t_ref * 1e3, t_fast * 1e3, t_ref / t_fast,
                maxdiff);
  }
  return 0;
}
