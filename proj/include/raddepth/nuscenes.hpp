#ifndef RADDEPTH_NUSCENES_HPP
#define RADDEPTH_NUSCENES_HPP

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "raddepth/dataio.hpp"
#include "raddepth/types.hpp"

// Optional reader for roots laid out like the public nuScenes release:
// JSON tables under <root>/v1.0-*/ plus samples/ and sweeps/ sensor files.
// Only the front and back camera views are consumed; radar returns come from
// the radars covering that view and LiDAR provides the ground truth.

namespace rd::nusc {

bool looks_like_nuscenes(const std::filesystem::path& root);

struct LoaderConfig {
  std::string version;      // e.g. "v1.0-mini"; empty = first v1.0-* found
  int n_radar_sweeps = 3;   // accumulated per radar channel
  int downscale = 2;        // 900x1600 -> 450x800
};

struct SampleRef {
  std::string sample_id;    // "<scene>_<cam>-<token>"; scene id = prefix
  std::string scene_name;
  bool night = false;
  std::string cam_channel;  // "CAM_FRONT" or "CAM_BACK"
  std::string cam_sd_token; // keyframe sample_data of the camera
  std::string sample_token;
};

struct Database;  // parsed tables; immutable after open()

std::shared_ptr<const Database> open(const std::filesystem::path& root,
                                     const LoaderConfig& cfg = {});

// Deterministic (scene-name sorted) front+back keyframe index. Scenes are
// split per scene: every 10th scene goes to val, the rest to train.
std::vector<SampleRef> index(const Database& db, Split split);

FusionSample load(const Database& db, const SampleRef& ref);

// JPEG <-> planar float image (8-bit RGB).
Image read_jpeg(const std::filesystem::path& file);
void write_jpeg(const std::filesystem::path& file, const Image& img,
                int quality = 95);

// Sensor file readers, exposed for tests.
// LIDAR .pcd.bin: packed float32 records of `stride` values, xyz first.
std::vector<Point3D> read_lidar_bin(const std::filesystem::path& file,
                                    int stride = 5);
// Radar .pcd: ASCII header + binary rows; extracts the x, y, z fields.
std::vector<Point3D> read_radar_pcd(const std::filesystem::path& file);

}  // namespace rd::nusc

#endif
