#include "raddepth/types.hpp"

namespace rd {

ValidMask valid_mask(const SparseDepthMap& d) {
  ValidMask m;
  m.height = d.height;
  m.width = d.width;
  m.mask.assign(d.depth.size(), 0);
  for (size_t i = 0; i < d.depth.size(); ++i) {
    if (d.depth[i] > 0.0f) {
      m.mask[i] = 1;
      ++m.count;
    }
  }
  return m;
}

}  // namespace rd
