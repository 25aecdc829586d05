#include "raddepth/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "raddepth/nuscenes.hpp"
#include "raddepth/projection.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace rd {

namespace {

// Deterministic draws built directly on the mt19937_64 output stream;
// std::uniform_*_distribution is implementation-defined.
struct Rng {
  std::mt19937_64 g;
  explicit Rng(uint64_t seed) : g(seed) {}
  double uniform(double a, double b) {
    return a + (b - a) * double(g() >> 11) * 0x1.0p-53;
  }
  int uniform_int(int lo, int hi) {  // inclusive
    return lo + int(g() % uint64_t(hi - lo + 1));
  }
  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }
};

void fail(const fs::path& file, const std::string& what) {
  throw std::runtime_error(file.string() + ": " + what);
}

}  // namespace

// ----------------------------------------------------------------- formats

void write_ppm(const fs::path& file, const Image& img) {
  std::ofstream os(file, std::ios::binary);
  if (!os) fail(file, "cannot open for writing");
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> row(size_t(img.width) * 3);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        float v = std::clamp(img.at(ch, r, c), 0.0f, 1.0f);
        row[size_t(c) * 3 + ch] = (unsigned char)std::lround(v * 255.0f);
      }
    os.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
}

Image read_ppm(const fs::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) fail(file, "cannot open");
  std::string magic;
  int w, h, maxval;
  is >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255 || w <= 0 || h <= 0) fail(file, "not an 8-bit P6 PPM");
  is.get();  // single whitespace after header
  Image img(h, w);
  std::vector<unsigned char> row(size_t(w) * 3);
  for (int r = 0; r < h; ++r) {
    is.read(reinterpret_cast<char*>(row.data()), row.size());
    if (!is) fail(file, "truncated pixel data");
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < 3; ++ch)
        img.at(ch, r, c) = float(row[size_t(c) * 3 + ch]) / 255.0f;
  }
  return img;
}

float quantize_mm(float depth_m) {
  long mm = std::lround(double(depth_m) * 1000.0);
  mm = std::clamp(mm, 0L, 65535L);
  return float(mm) / 1000.0f;
}

void write_depth16(const fs::path& file, const SparseDepthMap& d) {
  std::ofstream os(file, std::ios::binary);
  if (!os) fail(file, "cannot open for writing");
  // 16-bit PGM, big-endian samples, value = millimeters.
  os << "P5\n" << d.width << " " << d.height << "\n65535\n";
  std::vector<unsigned char> buf(d.depth.size() * 2);
  for (size_t i = 0; i < d.depth.size(); ++i) {
    long mm = std::lround(double(d.depth[i]) * 1000.0);
    mm = std::clamp(mm, 0L, 65535L);
    buf[2 * i] = (unsigned char)(mm >> 8);
    buf[2 * i + 1] = (unsigned char)(mm & 0xff);
  }
  os.write(reinterpret_cast<const char*>(buf.data()), buf.size());
}

SparseDepthMap read_depth16(const fs::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) fail(file, "cannot open");
  std::string magic;
  int w, h, maxval;
  is >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 65535 || w <= 0 || h <= 0) fail(file, "not a 16-bit P5 PGM");
  is.get();
  SparseDepthMap d(h, w);
  std::vector<unsigned char> buf(size_t(w) * h * 2);
  is.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!is) fail(file, "truncated depth data");
  for (size_t i = 0; i < d.depth.size(); ++i) {
    const unsigned mm = (unsigned(buf[2 * i]) << 8) | buf[2 * i + 1];
    d.depth[i] = float(mm) / 1000.0f;
  }
  return d;
}

void save_sample(const fs::path& dir, const FusionSample& s) {
  fs::create_directories(dir);
  write_ppm(dir / "rgb", s.image);
  write_depth16(dir / "radar.depth", s.radar);
  write_depth16(dir / "lidar.depth", s.lidar_gt);
  std::ofstream os(dir / "meta");
  os << "sample_id = " << s.sample_id << "\n";
  os << "lighting = " << to_string(s.lighting) << "\n";
}

FusionSample load_sample(const fs::path& dir) {
  FusionSample s;
  s.image = read_ppm(dir / "rgb");
  s.radar = read_depth16(dir / "radar.depth");
  s.lidar_gt = read_depth16(dir / "lidar.depth");
  std::ifstream is(dir / "meta");
  if (!is) fail(dir / "meta", "cannot open");
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string t) {
      const auto a = t.find_first_not_of(" \t");
      const auto b = t.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : t.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "sample_id") s.sample_id = val;
    if (key == "lighting") s.lighting = (val == "night") ? Lighting::night : Lighting::day;
  }
  if (s.radar.height != s.image.height || s.radar.width != s.image.width ||
      s.lidar_gt.height != s.image.height || s.lidar_gt.width != s.image.width)
    fail(dir, "grid shapes disagree");
  if (valid_mask(s.lidar_gt).count == 0) fail(dir, "sample has no ground-truth pixels");
  return s;
}

// --------------------------------------------------------------- synthesis

SynthSample generate_synthetic_sample(const SceneSpec& spec) {
  if (!spec.valid()) throw std::invalid_argument("generate_synthetic_sample: bad spec");
  Rng rng(spec.seed * 0x9e3779b97f4a7c15ull + 1);
  const int H = spec.height, W = spec.width;

  CameraModel cam;
  cam.fx = cam.fy = 0.79 * W;
  cam.cx = W / 2.0;
  cam.cy = H / 2.0;
  cam.width = W;
  cam.height = H;

  // Scene: ground plane at y = +ground_height (y down), boxes as upright
  // fronto-parallel slabs resting on the ground.
  struct Box {
    double z, x_center, half_w, h;
  };
  std::vector<Box> boxes;
  for (int i = 0; i < spec.n_boxes; ++i) {
    Box b;
    b.z = rng.uniform(spec.box_depth_min, spec.box_depth_max);
    b.half_w = rng.uniform(spec.box_width_min, spec.box_width_max) / 2.0;
    b.h = rng.uniform(spec.box_height_min, spec.box_height_max);
    const double x_span = (W / 2.0) / cam.fx * b.z * 0.9;
    b.x_center = rng.uniform(-x_span, x_span);
    boxes.push_back(b);
  }
  std::sort(boxes.begin(), boxes.end(), [](const Box& a, const Box& b) { return a.z > b.z; });

  SynthSample out;
  out.gt_dense = DenseDepthMap(H, W);
  std::vector<int> object_id(size_t(H) * W, 0);  // 0 sky, 1 ground, 2+i box i

  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      double depth = spec.background_depth;
      int obj = 0;
      const double dy = (r + 0.5 - cam.cy) / cam.fy;  // ray slope downward
      if (dy > 0) {
        const double z = spec.ground_height / dy;
        if (z < depth) {
          depth = z;
          obj = 1;
        }
      }
      out.gt_dense.at(r, c) = quantize_mm(float(depth));
      object_id[size_t(r) * W + c] = obj;
    }
  }
  for (size_t bi = 0; bi < boxes.size(); ++bi) {
    const Box& b = boxes[bi];
    const int u0 = int(std::lround(cam.fx * (b.x_center - b.half_w) / b.z + cam.cx));
    const int u1 = int(std::lround(cam.fx * (b.x_center + b.half_w) / b.z + cam.cx));
    const int v0 = int(std::lround(cam.fy * (spec.ground_height - b.h) / b.z + cam.cy));
    const int v1 = int(std::lround(cam.fy * spec.ground_height / b.z + cam.cy));
    for (int r = std::max(0, v0); r <= std::min(H - 1, v1); ++r)
      for (int c = std::max(0, u0); c <= std::min(W - 1, u1); ++c)
        if (b.z < out.gt_dense.at(r, c)) {
          out.gt_dense.at(r, c) = quantize_mm(float(b.z));
          object_id[size_t(r) * W + c] = 2 + int(bi);
        }
  }

  // Shaded image: per-object random albedo, mild row shading, pixel noise.
  // Object boundaries give depth-aligned image edges; albedo carries no
  // depth information.
  FusionSample& s = out.sample;
  s.lighting = rng.bernoulli(spec.night_fraction) ? Lighting::night : Lighting::day;
  std::vector<std::array<double, 3>> albedo(2 + boxes.size());
  for (auto& a : albedo)
    for (double& ch : a) ch = rng.uniform(0.15, 0.9);
  const double light = (s.lighting == Lighting::night) ? 0.25 : 1.0;
  s.image = Image(H, W);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      const int obj = object_id[size_t(r) * W + c];
      const double shade = (obj == 1) ? 0.6 + 0.4 * double(r) / H : 0.85;
      for (int ch = 0; ch < 3; ++ch) {
        double v = albedo[obj][ch] * shade * light + rng.uniform(-0.02, 0.02);
        v = std::clamp(v, 0.0, 1.0);
        // match the 8-bit storage so a disk round trip is exact
        s.image.at(ch, r, c) = float(std::lround(v * 255.0) / 255.0);
      }
    }

  // LiDAR: scan-line subsample of the analytic depth. Step sizes are tuned
  // so a 450x800 frame carries 3000-5000 points.
  const int rs = std::max(2, int(std::lround(H / 56.0)));
  const int cs = std::max(2, int(std::lround(W / 66.0)));
  s.lidar_gt = SparseDepthMap(H, W);
  for (int r = rs / 2; r < H; r += rs) {
    const int phase = ((r / rs) * 3) % cs;
    for (int c = phase; c < W; c += cs) s.lidar_gt.at(r, c) = out.gt_dense.at(r, c);
  }

  // Radar: points inside the vertical band, each backprojected along its
  // pixel ray; outliers keep the bearing but get a displaced range.
  const int v_lo = int(spec.v_min_frac * H);
  const int v_hi = std::max(v_lo + 1, int(spec.v_max_frac * H));
  const int n_radar = rng.uniform_int(spec.radar_points_min, spec.radar_points_max);
  std::vector<uint8_t> taken(size_t(H) * W, 0);
  std::vector<Point3D> pts;
  for (int i = 0; i < n_radar; ++i) {
    int u, v;
    do {
      v = rng.uniform_int(v_lo, v_hi - 1);
      u = rng.uniform_int(0, W - 1);
    } while (taken[size_t(v) * W + u]);
    taken[size_t(v) * W + u] = 1;
    RadarPointRecord rec;
    rec.u = u;
    rec.v = v;
    rec.gt_depth = out.gt_dense.at(v, u);
    double d = rec.gt_depth;
    rec.outlier = rng.bernoulli(spec.outlier_rate);
    if (rec.outlier) {
      const double off = rng.uniform(spec.outlier_offset_min, spec.outlier_offset_max);
      double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
      if (d + sign * off <= 0.5 || d + sign * off >= 65.0) sign = -sign;
      d += sign * off;
    }
    rec.depth = quantize_mm(float(d));
    out.radar_points.push_back(rec);
    Point3D p;
    p.x = (u - cam.cx) / cam.fx * rec.depth;
    p.y = (v - cam.cy) / cam.fy * rec.depth;
    p.z = rec.depth;
    pts.push_back(p);
  }
  s.radar = render_sparse_map(project_points(pts, cam), H, W);
  return out;
}

void write_outlier_labels(const fs::path& file, const std::vector<RadarPointRecord>& pts) {
  json arr = json::array();
  for (const auto& p : pts)
    arr.push_back({{"u", p.u},
                   {"v", p.v},
                   {"gt_depth", p.gt_depth},
                   {"depth", p.depth},
                   {"outlier", p.outlier}});
  std::ofstream os(file);
  os << arr.dump(1) << "\n";
}

std::vector<RadarPointRecord> read_outlier_labels(const fs::path& file) {
  std::ifstream is(file);
  if (!is) fail(file, "cannot open");
  json arr = json::parse(is);
  std::vector<RadarPointRecord> pts;
  for (const auto& e : arr) {
    RadarPointRecord p;
    p.u = e.at("u").get<int>();
    p.v = e.at("v").get<int>();
    p.gt_depth = e.at("gt_depth").get<float>();
    p.depth = e.at("depth").get<float>();
    p.outlier = e.at("outlier").get<bool>();
    pts.push_back(p);
  }
  return pts;
}

// ----------------------------------------------------------------- patterns

std::optional<PatternKind> pattern_from_string(const std::string& s) {
  if (s == "radar") return PatternKind::radar;
  if (s == "radar_gt_filtered") return PatternKind::radar_gt_filtered;
  if (s == "lidar_sampled") return PatternKind::lidar_sampled;
  if (s == "lidar_uniform") return PatternKind::lidar_uniform;
  return std::nullopt;
}

const char* to_string(PatternKind k) {
  switch (k) {
    case PatternKind::radar: return "radar";
    case PatternKind::radar_gt_filtered: return "radar_gt_filtered";
    case PatternKind::lidar_sampled: return "lidar_sampled";
    case PatternKind::lidar_uniform: return "lidar_uniform";
  }
  return "?";
}

SparseDepthMap gt_filter_radar(const SparseDepthMap& radar,
                               const SparseDepthMap& lidar, int radius_px,
                               const ThresholdParams& p) {
  if (radar.height != lidar.height || radar.width != lidar.width)
    throw std::invalid_argument("gt_filter_radar: shape mismatch");
  SparseDepthMap out(radar.height, radar.width);
  std::vector<double> neigh;
  for (int r = 0; r < radar.height; ++r)
    for (int c = 0; c < radar.width; ++c) {
      const float d = radar.at(r, c);
      if (d <= 0) continue;
      neigh.clear();
      for (int dr = -radius_px; dr <= radius_px; ++dr) {
        const int rr = r + dr;
        if (rr < 0 || rr >= radar.height) continue;
        for (int dc = -radius_px; dc <= radius_px; ++dc) {
          const int cc = c + dc;
          if (cc < 0 || cc >= radar.width) continue;
          const float l = lidar.at(rr, cc);
          if (l > 0) neigh.push_back(l);
        }
      }
      if (neigh.empty()) continue;
      std::sort(neigh.begin(), neigh.end());
      const size_t m = neigh.size();
      const double median = (m % 2) ? neigh[m / 2] : 0.5 * (neigh[m / 2 - 1] + neigh[m / 2]);
      if (std::abs(double(d) - median) <= tau(d, p)) out.at(r, c) = d;
    }
  return out;
}

SparseDepthMap make_input_pattern(PatternKind kind, const FusionSample& sample,
                                  int k, int n_uniform, uint64_t rng_seed) {
  switch (kind) {
    case PatternKind::radar:
      return sample.radar;
    case PatternKind::radar_gt_filtered:
      return gt_filter_radar(sample.radar, sample.lidar_gt);
    case PatternKind::lidar_sampled: {
      const SparseDepthMap& lidar = sample.lidar_gt;
      std::vector<std::pair<int, int>> lpix;
      for (int r = 0; r < lidar.height; ++r)
        for (int c = 0; c < lidar.width; ++c)
          if (lidar.at(r, c) > 0) lpix.emplace_back(r, c);
      SparseDepthMap out(lidar.height, lidar.width);
      std::vector<std::pair<long, size_t>> dist;
      for (int r = 0; r < sample.radar.height; ++r)
        for (int c = 0; c < sample.radar.width; ++c) {
          if (sample.radar.at(r, c) <= 0) continue;
          dist.clear();
          for (size_t i = 0; i < lpix.size(); ++i) {
            const long dr = lpix[i].first - r, dc = lpix[i].second - c;
            dist.emplace_back(dr * dr + dc * dc, i);
          }
          const size_t kk = std::min<size_t>(k, dist.size());
          std::partial_sort(dist.begin(), dist.begin() + kk, dist.end());
          for (size_t j = 0; j < kk; ++j) {
            const auto& [rr, cc] = lpix[dist[j].second];
            out.at(rr, cc) = lidar.at(rr, cc);
          }
        }
      return out;
    }
    case PatternKind::lidar_uniform: {
      const SparseDepthMap& lidar = sample.lidar_gt;
      std::vector<size_t> lidx;
      for (size_t i = 0; i < lidar.depth.size(); ++i)
        if (lidar.depth[i] > 0) lidx.push_back(i);
      size_t n = n_uniform > 0 ? size_t(n_uniform) : size_t(valid_mask(sample.radar).count);
      n = std::min(n, lidx.size());
      Rng rng(rng_seed * 0x9e3779b97f4a7c15ull + 7);
      // partial Fisher-Yates
      for (size_t i = 0; i < n; ++i)
        std::swap(lidx[i], lidx[i + rng.g() % (lidx.size() - i)]);
      SparseDepthMap out(lidar.height, lidar.width);
      for (size_t i = 0; i < n; ++i) out.depth[lidx[i]] = lidar.depth[lidx[i]];
      return out;
    }
  }
  throw std::invalid_argument("make_input_pattern: unknown kind");
}

// ------------------------------------------------------------------ loading

std::string scene_of(const std::string& sample_id) {
  const auto pos = sample_id.rfind('_');
  return pos == std::string::npos ? sample_id : sample_id.substr(0, pos);
}

namespace {

struct Entry {
  fs::path dir;
  std::string sample_id;
};

std::vector<Entry> scan_root(const fs::path& root) {
  std::vector<Entry> entries;
  if (!fs::is_directory(root))
    throw std::runtime_error("load_dataset: not a directory: " + root.string());
  for (const auto& e : fs::directory_iterator(root)) {
    if (!e.is_directory()) continue;
    const fs::path meta = e.path() / "meta";
    if (!fs::exists(meta)) continue;
    std::ifstream is(meta);
    std::string line, id;
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      if (line.substr(0, eq).find("sample_id") != std::string::npos) {
        id = line.substr(eq + 1);
        const auto a = id.find_first_not_of(" \t");
        const auto b = id.find_last_not_of(" \t\r");
        id = (a == std::string::npos) ? "" : id.substr(a, b - a + 1);
      }
    }
    if (id.empty()) id = e.path().filename().string();
    entries.push_back({e.path(), id});
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.sample_id < b.sample_id; });
  return entries;
}

bool in_split(const std::string& scene, const std::vector<std::string>& scenes, Split split) {
  const auto it = std::lower_bound(scenes.begin(), scenes.end(), scene);
  const size_t idx = size_t(it - scenes.begin());
  const bool is_val = (idx % 10) == 9;  // every 10th scene held out
  return split == Split::val ? is_val : !is_val;
}

}  // namespace

std::vector<fs::path> list_sample_dirs(const fs::path& root, Split split) {
  const auto entries = scan_root(root);
  std::vector<std::string> scenes;
  for (const auto& e : entries) scenes.push_back(scene_of(e.sample_id));
  std::sort(scenes.begin(), scenes.end());
  scenes.erase(std::unique(scenes.begin(), scenes.end()), scenes.end());
  std::vector<fs::path> out;
  for (const auto& e : entries)
    if (in_split(scene_of(e.sample_id), scenes, split)) out.push_back(e.dir);
  if (out.empty()) throw std::runtime_error("load_dataset: empty split in " + root.string());
  return out;
}

std::vector<FusionSample> load_dataset(const fs::path& root, Split split) {
  std::vector<FusionSample> out;
  if (nusc::looks_like_nuscenes(root)) {
    auto db = nusc::open(root);
    for (const nusc::SampleRef& ref : nusc::index(*db, split)) {
      try {
        out.push_back(nusc::load(*db, ref));
      } catch (const std::exception& ex) {
        std::cerr << "warning: skipping " << ref.sample_id << ": " << ex.what()
                  << "\n";
      }
    }
    if (out.empty())
      throw std::runtime_error("load_dataset: empty split in " + root.string());
    return out;
  }
  for (const fs::path& dir : list_sample_dirs(root, split)) {
    try {
      out.push_back(load_sample(dir));
    } catch (const std::exception& ex) {
      std::cerr << "warning: skipping " << dir << ": " << ex.what() << "\n";
    }
  }
  if (out.empty()) throw std::runtime_error("load_dataset: empty split in " + root.string());
  return out;
}

}  // namespace rd
