#ifndef RADDEPTH_FILTERING_HPP
#define RADDEPTH_FILTERING_HPP

#include <cmath>
#include <utility>

#include "raddepth/types.hpp"

namespace rd {

// Depth-adaptive tolerance for radar outlier rejection. The threshold grows
// exponentially from alpha at d=0 to beta at d=K, so far measurements get a
// larger tolerance (space-increasing discretization style).
struct ThresholdParams {
  double alpha = 5.0;  // meters, tolerance at d=0
  double beta = 18.0;  // meters, tolerance at d=K
  double K = 80.0;     // meters, span of the ramp (= max_depth)

  bool valid() const { return alpha > 0 && alpha < beta && K > 0; }
};

// tau(d) = exp(d * ln(beta/alpha) / K + ln(alpha)); strictly increasing.
inline double tau(double d, const ThresholdParams& p = {}) {
  return std::exp(d * std::log(p.beta / p.alpha) / p.K + std::log(p.alpha));
}

struct FilterResult {
  SparseDepthMap filtered;
  ValidMask keep_mask;
};

// Keeps radar pixel p iff |radar(p) - coarse(p)| <= tau(radar(p)).
// tau is evaluated at the radar-measured depth.
FilterResult noise_filter(const SparseDepthMap& radar,
                          const DenseDepthMap& coarse,
                          const ThresholdParams& p = {});

}  // namespace rd

#endif
