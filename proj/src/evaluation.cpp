#include "raddepth/evaluation.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rd {

PixelSums& PixelSums::operator+=(const PixelSums& o) {
  sum_sq += o.sum_sq;
  sum_abs += o.sum_abs;
  sum_abs_log += o.sum_abs_log;
  sum_rel += o.sum_rel;
  c1 += o.c1;
  c2 += o.c2;
  c3 += o.c3;
  n += o.n;
  samples += o.samples;
  return *this;
}

PixelSums pixel_sums(const DenseDepthMap& pred, const SparseDepthMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width)
    throw std::invalid_argument("pixel_sums: shape mismatch");
  PixelSums s;
  s.samples = 1;
  for (size_t i = 0; i < gt.depth.size(); ++i) {
    const double y = gt.depth[i];
    if (y <= 0) continue;
    const double yh = pred.depth[i];
    const double d = y - yh;
    s.sum_sq += d * d;
    s.sum_abs += std::abs(d);
    s.sum_abs_log += std::abs(std::log(y) - std::log(yh));
    s.sum_rel += std::abs(d) / y;
    const double ratio = std::max(yh / y, y / yh);
    if (ratio < 1.25) ++s.c1;
    if (ratio < 1.25 * 1.25) ++s.c2;
    if (ratio < 1.25 * 1.25 * 1.25) ++s.c3;
    ++s.n;
  }
  return s;
}

MetricsReport report_from_sums(const PixelSums& s) {
  if (s.n == 0) throw std::invalid_argument("metrics: no valid pixels");
  MetricsReport r;
  r.rmse = std::sqrt(s.sum_sq / double(s.n));
  r.mae = s.sum_abs / double(s.n);
  r.mae_log = s.sum_abs_log / double(s.n);
  r.rel = s.sum_rel / double(s.n);
  r.delta1 = double(s.c1) / double(s.n);
  r.delta2 = double(s.c2) / double(s.n);
  r.delta3 = double(s.c3) / double(s.n);
  r.n_pixels = s.n;
  r.n_samples = s.samples;
  return r;
}

MetricsReport compute_metrics(const DenseDepthMap& pred, const SparseDepthMap& gt) {
  return report_from_sums(pixel_sums(pred, gt));
}

MetricsReport aggregate(const std::vector<PixelSums>& per_sample) {
  if (per_sample.empty()) throw std::invalid_argument("aggregate: empty input");
  PixelSums total;
  for (const PixelSums& s : per_sample) total += s;
  return report_from_sums(total);
}

std::string MetricsReport::to_json() const {
  std::ostringstream os;
  os.precision(9);
  os << "{\"rmse\":" << rmse << ",\"mae\":" << mae << ",\"mae_log\":" << mae_log
     << ",\"rel\":" << rel << ",\"delta1\":" << delta1 << ",\"delta2\":" << delta2
     << ",\"delta3\":" << delta3 << ",\"n_pixels\":" << n_pixels
     << ",\"n_samples\":" << n_samples << "}";
  return os.str();
}

}  // namespace rd
