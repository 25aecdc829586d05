#ifndef RADDEPTH_DATAIO_HPP
#define RADDEPTH_DATAIO_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "raddepth/filtering.hpp"
#include "raddepth/types.hpp"

namespace rd {

// ---------------------------------------------------------------------------
// On-disk sample layout: one directory per sample with
//   rgb          8-bit binary PPM (P6)
//   radar.depth  16-bit grid, millimeters, 0 = invalid
//   lidar.depth  same format
//   meta         key = value text (sample_id, lighting)
//   outliers.json  optional per-radar-point labels (synthetic data only)
// The millimeter quantization is the storage contract; depth_m = stored/1000.
// Note the u16 range saturates at 65.535 m.
// ---------------------------------------------------------------------------

void write_ppm(const std::filesystem::path& file, const Image& img);
Image read_ppm(const std::filesystem::path& file);

void write_depth16(const std::filesystem::path& file, const SparseDepthMap& d);
SparseDepthMap read_depth16(const std::filesystem::path& file);

// Rounds to the nearest millimeter, i.e. to what a write/read cycle returns.
float quantize_mm(float depth_m);

void save_sample(const std::filesystem::path& dir, const FusionSample& s);
FusionSample load_sample(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Synthetic scenes: a ground plane plus box obstacles, seen by a forward
// camera. Radar-like points live in a narrow vertical band and a fraction of
// them is displaced in depth (multipath-style outliers); LiDAR-like points
// subsample the analytic ground truth on a scan pattern.
// ---------------------------------------------------------------------------

struct SceneSpec {
  uint64_t seed = 0;
  int height = 96;
  int width = 160;
  int n_boxes = 6;
  double ground_height = 1.5;         // camera height above ground, meters
  double box_depth_min = 5.0, box_depth_max = 40.0;
  double box_width_min = 1.0, box_width_max = 4.0;
  double box_height_min = 1.0, box_height_max = 3.0;
  double background_depth = 60.0;     // "sky" depth, keeps u16 mm in range
  double outlier_rate = 0.3;          // fraction of radar points displaced
  double outlier_offset_min = 3.0, outlier_offset_max = 25.0;  // meters
  double v_min_frac = 0.35, v_max_frac = 0.65;  // radar vertical band
  int radar_points_min = 40, radar_points_max = 100;
  double night_fraction = 0.25;

  bool valid() const {
    return height > 0 && width > 0 && outlier_rate >= 0 && outlier_rate <= 1 &&
           v_min_frac < v_max_frac;
  }
};

struct RadarPointRecord {
  int u = 0, v = 0;       // pixel
  float gt_depth = 0;     // scene depth at the pixel (mm-quantized)
  float depth = 0;        // emitted radar depth (mm-quantized)
  bool outlier = false;
};

struct SynthSample {
  FusionSample sample;
  DenseDepthMap gt_dense;                 // analytic scene depth, mm-quantized
  std::vector<RadarPointRecord> radar_points;
};

SynthSample generate_synthetic_sample(const SceneSpec& spec);

void write_outlier_labels(const std::filesystem::path& file,
                          const std::vector<RadarPointRecord>& pts);
std::vector<RadarPointRecord> read_outlier_labels(const std::filesystem::path& file);

// ---------------------------------------------------------------------------
// Input-pattern factory for the pilot depth-input experiments.
// ---------------------------------------------------------------------------

enum class PatternKind { radar, radar_gt_filtered, lidar_sampled, lidar_uniform };

std::optional<PatternKind> pattern_from_string(const std::string& s);
const char* to_string(PatternKind k);

// Keep radar pixel p iff some valid LiDAR pixel lies within radius_px
// (Chebyshev) and |radar(p) - median(neighbor LiDAR depths)| <= tau(radar(p)).
SparseDepthMap gt_filter_radar(const SparseDepthMap& radar,
                               const SparseDepthMap& lidar, int radius_px = 4,
                               const ThresholdParams& p = {});

// kind=radar: identity. radar_gt_filtered: gt_filter_radar. lidar_sampled:
// k nearest valid LiDAR pixels per valid radar pixel, LiDAR depths.
// lidar_uniform: n_uniform LiDAR pixels without replacement (n_uniform <= 0
// means "radar valid count").
SparseDepthMap make_input_pattern(PatternKind kind, const FusionSample& sample,
                                  int k = 2, int n_uniform = -1,
                                  uint64_t rng_seed = 0);

// ---------------------------------------------------------------------------
// Dataset loading. Samples are ordered by sample_id; the train/val split is
// assigned per scene (sample_id prefix up to the last '_').
// ---------------------------------------------------------------------------

enum class Split { train, val };

std::vector<FusionSample> load_dataset(const std::filesystem::path& root, Split split);
std::vector<std::filesystem::path> list_sample_dirs(const std::filesystem::path& root,
                                                    Split split);
std::string scene_of(const std::string& sample_id);

}  // namespace rd

#endif
