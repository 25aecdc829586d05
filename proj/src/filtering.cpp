#include "raddepth/filtering.hpp"

#include <stdexcept>

namespace rd {

FilterResult noise_filter(const SparseDepthMap& radar,
                          const DenseDepthMap& coarse,
                          const ThresholdParams& p) {
  if (radar.height != coarse.height || radar.width != coarse.width)
    throw std::invalid_argument("noise_filter: shape mismatch");
  if (!p.valid()) throw std::invalid_argument("noise_filter: bad threshold params");

  FilterResult r;
  r.filtered = SparseDepthMap(radar.height, radar.width);
  r.keep_mask.height = radar.height;
  r.keep_mask.width = radar.width;
  r.keep_mask.mask.assign(radar.depth.size(), 0);
  for (size_t i = 0; i < radar.depth.size(); ++i) {
    const float d = radar.depth[i];
    if (d <= 0.0f) continue;
    if (std::abs(double(d) - double(coarse.depth[i])) <= tau(d, p)) {
      r.filtered.depth[i] = d;
      r.keep_mask.mask[i] = 1;
      ++r.keep_mask.count;
    }
  }
  return r;
}

}  // namespace rd
