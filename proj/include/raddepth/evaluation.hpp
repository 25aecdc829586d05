#ifndef RADDEPTH_EVALUATION_HPP
#define RADDEPTH_EVALUATION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "raddepth/types.hpp"

namespace rd {

struct MetricsReport {
  double rmse = 0;      // meters
  double mae = 0;       // meters
  double mae_log = 0;   // natural log
  double rel = 0;
  double delta1 = 0;
  double delta2 = 0;
  double delta3 = 0;
  int64_t n_pixels = 0;
  int64_t n_samples = 0;

  std::string to_json() const;
};

// Per-pixel statistics pooled across a split; the associative piece of
// metric aggregation.
struct PixelSums {
  double sum_sq = 0;
  double sum_abs = 0;
  double sum_abs_log = 0;
  double sum_rel = 0;
  int64_t c1 = 0, c2 = 0, c3 = 0;  // delta_n counts, strict < 1.25^n
  int64_t n = 0;
  int64_t samples = 0;

  PixelSums& operator+=(const PixelSums& o);
};

PixelSums pixel_sums(const DenseDepthMap& pred, const SparseDepthMap& gt);
MetricsReport report_from_sums(const PixelSums& s);

MetricsReport compute_metrics(const DenseDepthMap& pred, const SparseDepthMap& gt);
MetricsReport aggregate(const std::vector<PixelSums>& per_sample);

}  // namespace rd

#endif
