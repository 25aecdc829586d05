#ifndef RADDEPTH_PROJECTION_HPP
#define RADDEPTH_PROJECTION_HPP

#include <array>
#include <stdexcept>
#include <vector>

#include "raddepth/types.hpp"

namespace rd {

// Row-major 4x4 rigid transform.
struct Transform {
  std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

  static Transform identity() { return Transform{}; }
  static Transform translation(double tx, double ty, double tz);
  Transform inverse() const;
  Point3D apply(const Point3D& p) const;
  bool rotation_valid(double tol = 1e-6) const;
};

// Matrix product a*b: applies b first, then a.
Transform compose(const Transform& a, const Transform& b);

struct CameraModel {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  Transform extrinsic;  // sensor frame -> camera frame
  int width = 0;
  int height = 0;

  bool valid() const {
    return fx > 0 && fy > 0 && width > 0 && height > 0 &&
           extrinsic.rotation_valid();
  }
};

struct ProjectedPoint {
  int u = 0;  // column
  int v = 0;  // row
  float depth = 0;
};

struct Sweep {
  double timestamp = 0;  // seconds
  std::vector<Point3D> points;
  Transform extrinsic_at_time;  // sweep frame -> reference camera frame
};

struct SweepSet {
  std::vector<Sweep> sweeps;  // timestamps strictly increasing
};

// Pinhole projection; drops points behind the camera or outside the frame.
std::vector<ProjectedPoint> project_points(const std::vector<Point3D>& points,
                                           const CameraModel& cam);

// Z-buffer with min rule on pixel collisions.
SparseDepthMap render_sparse_map(const std::vector<ProjectedPoint>& projected,
                                 int H, int W);

// Concatenates the points of the n sweeps nearest to reference_time, each
// moved into the reference frame by its own extrinsic. Sets *warning when
// fewer than n sweeps are available.
std::vector<Point3D> accumulate_sweeps(const SweepSet& s, double reference_time,
                                       int n, bool* warning = nullptr);

// Area-interpolation downscale for images. Sparse maps must be rendered at
// target resolution instead; see downscale contract.
Image downscale_image(const Image& img, int factor);
DenseDepthMap downscale_map(const DenseDepthMap& d, int factor);
// Always throws: sparse maps are rendered at target resolution instead.
SparseDepthMap downscale_map(const SparseDepthMap& d, int factor);

}  // namespace rd

#endif
