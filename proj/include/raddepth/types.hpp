#ifndef RADDEPTH_TYPES_HPP
#define RADDEPTH_TYPES_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace rd {

// Depth unit is meters everywhere. Sparse maps use 0 as "no measurement".
struct DepthLimits {
  float max_depth = 80.0f;   // evaluation / clamping range
  float min_pred = 0.1f;     // keeps log-metrics finite
};

// RGB image, planar CHW layout, channel values in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // 3 * height * width

  Image() = default;
  Image(int h, int w) : height(h), width(w), pixels(3u * h * w, 0.0f) {}

  float& at(int c, int r, int col) { return pixels[(c * height + r) * width + col]; }
  float at(int c, int r, int col) const { return pixels[(c * height + r) * width + col]; }
};

struct SparseDepthMap {
  int height = 0;
  int width = 0;
  std::vector<float> depth;  // row-major, 0 = invalid

  SparseDepthMap() = default;
  SparseDepthMap(int h, int w) : height(h), width(w), depth(size_t(h) * w, 0.0f) {}

  float& at(int r, int c) { return depth[size_t(r) * width + c]; }
  float at(int r, int c) const { return depth[size_t(r) * width + c]; }
};

struct DenseDepthMap {
  int height = 0;
  int width = 0;
  std::vector<float> depth;  // row-major, strictly positive after clamping

  DenseDepthMap() = default;
  DenseDepthMap(int h, int w) : height(h), width(w), depth(size_t(h) * w, 0.0f) {}

  float& at(int r, int c) { return depth[size_t(r) * width + c]; }
  float at(int r, int c) const { return depth[size_t(r) * width + c]; }
};

struct Point3D {
  double x = 0, y = 0, z = 0;          // sensor frame, meters
  double depth_after_projection = 0;   // camera-frame z once projected
};

enum class Lighting { day, night };

inline const char* to_string(Lighting l) { return l == Lighting::day ? "day" : "night"; }

struct FusionSample {
  Image image;
  SparseDepthMap radar;
  SparseDepthMap lidar_gt;
  Lighting lighting = Lighting::day;
  std::string sample_id;
};

struct ValidMask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> mask;
  int count = 0;

  bool at(int r, int c) const { return mask[size_t(r) * width + c] != 0; }
};

ValidMask valid_mask(const SparseDepthMap& d);

}  // namespace rd

#endif
