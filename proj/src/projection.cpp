#include "raddepth/projection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rd {

Transform Transform::translation(double tx, double ty, double tz) {
  Transform t;
  t.m[3] = tx;
  t.m[7] = ty;
  t.m[11] = tz;
  return t;
}

Transform Transform::inverse() const {
  // Rigid inverse: R^T, -R^T t
  Transform r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.m[i * 4 + j] = m[j * 4 + i];
  for (int i = 0; i < 3; ++i) {
    double acc = 0;
    for (int j = 0; j < 3; ++j) acc += r.m[i * 4 + j] * m[j * 4 + 3];
    r.m[i * 4 + 3] = -acc;
  }
  return r;
}

Point3D Transform::apply(const Point3D& p) const {
  Point3D q;
  q.x = m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3];
  q.y = m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7];
  q.z = m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11];
  return q;
}

bool Transform::rotation_valid(double tol) const {
  // R^T R = I and det(R) = +1
  double rtr[9];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += m[k * 4 + i] * m[k * 4 + j];
      rtr[i * 3 + j] = acc;
    }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (std::abs(rtr[i * 3 + j] - (i == j ? 1.0 : 0.0)) > tol) return false;
  const double det =
      m[0] * (m[5] * m[10] - m[6] * m[9]) - m[1] * (m[4] * m[10] - m[6] * m[8]) +
      m[2] * (m[4] * m[9] - m[5] * m[8]);
  return std::abs(det - 1.0) <= tol;
}

Transform compose(const Transform& a, const Transform& b) {
  Transform c;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double acc = 0;
      for (int k = 0; k < 4; ++k) acc += a.m[i * 4 + k] * b.m[k * 4 + j];
      c.m[i * 4 + j] = acc;
    }
  return c;
}

std::vector<ProjectedPoint> project_points(const std::vector<Point3D>& points,
                                           const CameraModel& cam) {
  if (!cam.valid()) throw std::invalid_argument("project_points: invalid camera");
  std::vector<ProjectedPoint> out;
  out.reserve(points.size());
  for (const Point3D& p : points) {
    const Point3D q = cam.extrinsic.apply(p);
    if (q.z <= 0) continue;
    const int u = int(std::lround(cam.fx * q.x / q.z + cam.cx));
    const int v = int(std::lround(cam.fy * q.y / q.z + cam.cy));
    if (u < 0 || u >= cam.width || v < 0 || v >= cam.height) continue;
    out.push_back({u, v, float(q.z)});
  }
  return out;
}

SparseDepthMap render_sparse_map(const std::vector<ProjectedPoint>& projected,
                                 int H, int W) {
  SparseDepthMap map(H, W);
  for (const ProjectedPoint& p : projected) {
    float& cell = map.at(p.v, p.u);
    if (cell == 0.0f || p.depth < cell) cell = p.depth;
  }
  return map;
}

std::vector<Point3D> accumulate_sweeps(const SweepSet& s, double reference_time,
                                       int n, bool* warning) {
  if (s.sweeps.empty()) throw std::invalid_argument("accumulate_sweeps: empty sweep set");
  if (n < 1) throw std::invalid_argument("accumulate_sweeps: n must be >= 1");
  if (warning) *warning = false;
  std::vector<size_t> order(s.sweeps.size());
  std::iota(order.begin(), order.end(), size_t(0));
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return std::abs(s.sweeps[a].timestamp - reference_time) <
           std::abs(s.sweeps[b].timestamp - reference_time);
  });
  size_t take = size_t(n);
  if (take > order.size()) {
    take = order.size();
    if (warning) *warning = true;
  }
  order.resize(take);
  std::sort(order.begin(), order.end());  // keep chronological order
  std::vector<Point3D> out;
  for (size_t idx : order) {
    const Sweep& sw = s.sweeps[idx];
    for (const Point3D& p : sw.points) out.push_back(sw.extrinsic_at_time.apply(p));
  }
  return out;
}

namespace {
template <typename Map>
Map area_downscale(const Map& d, int factor) {
  if (factor < 1) throw std::invalid_argument("downscale: factor must be >= 1");
  if (factor == 1) return d;
  if (d.height % factor != 0 || d.width % factor != 0)
    throw std::invalid_argument("downscale: dimensions not divisible by factor");
  Map out(d.height / factor, d.width / factor);
  const double inv = 1.0 / (factor * factor);
  for (int r = 0; r < out.height; ++r)
    for (int c = 0; c < out.width; ++c) {
      double acc = 0;
      for (int i = 0; i < factor; ++i)
        for (int j = 0; j < factor; ++j) acc += d.at(r * factor + i, c * factor + j);
      out.at(r, c) = float(acc * inv);
    }
  return out;
}
}  // namespace

Image downscale_image(const Image& img, int factor) {
  if (factor < 1) throw std::invalid_argument("downscale: factor must be >= 1");
  if (factor == 1) return img;
  if (img.height % factor != 0 || img.width % factor != 0)
    throw std::invalid_argument("downscale: dimensions not divisible by factor");
  Image out(img.height / factor, img.width / factor);
  const float inv = 1.0f / (factor * factor);
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < out.height; ++r)
      for (int col = 0; col < out.width; ++col) {
        float acc = 0;
        for (int i = 0; i < factor; ++i)
          for (int j = 0; j < factor; ++j)
            acc += img.at(c, r * factor + i, col * factor + j);
        out.at(c, r, col) = acc * inv;
      }
  return out;
}

DenseDepthMap downscale_map(const DenseDepthMap& d, int factor) {
  return area_downscale(d, factor);
}

SparseDepthMap downscale_map(const SparseDepthMap&, int) {
  throw std::invalid_argument(
      "downscale_map: sparse maps cannot be pooled; render at target resolution instead");
}

}  // namespace rd
