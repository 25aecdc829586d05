#include "raddepth/nuscenes.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <jpeglib.h>
#include <json.hpp>

#include "raddepth/projection.hpp"

namespace rd::nusc {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---- sensor file readers ----------------------------------------------------

Image read_jpeg(const fs::path& file) {
  FILE* fp = std::fopen(file.string().c_str(), "rb");
  if (!fp) throw std::runtime_error("cannot open " + file.string());
  jpeg_decompress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, fp);
  if (jpeg_read_header(&cinfo, TRUE) != JPEG_HEADER_OK) {
    jpeg_destroy_decompress(&cinfo);
    std::fclose(fp);
    throw std::runtime_error("bad jpeg header: " + file.string());
  }
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const int W = int(cinfo.output_width), H = int(cinfo.output_height);
  Image img(H, W);
  std::vector<unsigned char> row(size_t(W) * 3);
  unsigned char* rowp = row.data();
  const size_t plane = size_t(H) * W;
  while (cinfo.output_scanline < cinfo.output_height) {
    const int y = int(cinfo.output_scanline);
    jpeg_read_scanlines(&cinfo, &rowp, 1);
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c)
        img.pixels[size_t(c) * plane + size_t(y) * W + x] =
            float(row[size_t(x) * 3 + c]) / 255.0f;
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  std::fclose(fp);
  return img;
}

void write_jpeg(const fs::path& file, const Image& img, int quality) {
  FILE* fp = std::fopen(file.string().c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot write " + file.string());
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, fp);
  cinfo.image_width = JDIMENSION(img.width);
  cinfo.image_height = JDIMENSION(img.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  const size_t plane = size_t(img.height) * img.width;
  std::vector<unsigned char> row(size_t(img.width) * 3);
  unsigned char* rowp = row.data();
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = img.pixels[size_t(c) * plane + size_t(y) * img.width + x];
        row[size_t(x) * 3 + c] =
            (unsigned char)std::clamp(int(std::lround(v * 255.0f)), 0, 255);
      }
    jpeg_write_scanlines(&cinfo, &rowp, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::fclose(fp);
}

std::vector<Point3D> read_lidar_bin(const fs::path& file, int stride) {
  std::ifstream is(file, std::ios::binary | std::ios::ate);
  if (!is) throw std::runtime_error("cannot open " + file.string());
  const std::streamsize bytes = is.tellg();
  is.seekg(0);
  const size_t rec = size_t(stride) * sizeof(float);
  if (bytes % std::streamsize(rec) != 0)
    throw std::runtime_error(file.string() + ": size not a multiple of record");
  std::vector<float> raw(size_t(bytes) / sizeof(float));
  is.read(reinterpret_cast<char*>(raw.data()), bytes);
  std::vector<Point3D> pts(raw.size() / size_t(stride));
  for (size_t i = 0; i < pts.size(); ++i) {
    pts[i].x = raw[i * size_t(stride) + 0];
    pts[i].y = raw[i * size_t(stride) + 1];
    pts[i].z = raw[i * size_t(stride) + 2];
  }
  return pts;
}

std::vector<Point3D> read_radar_pcd(const fs::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + file.string());
  std::vector<std::string> fields;
  std::vector<int> sizes;
  int points = -1;
  size_t row_bytes = 0;
  std::string line;
  bool binary = false;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "FIELDS") {
      std::string f;
      while (ls >> f) fields.push_back(f);
    } else if (key == "SIZE") {
      int s;
      while (ls >> s) sizes.push_back(s);
    } else if (key == "POINTS") {
      ls >> points;
    } else if (key == "DATA") {
      std::string kind;
      ls >> kind;
      binary = kind == "binary";
      break;
    }
  }
  if (!binary || points < 0 || fields.size() != sizes.size())
    throw std::runtime_error(file.string() + ": unsupported pcd layout");
  std::vector<size_t> offsets(fields.size());
  for (size_t i = 0; i < fields.size(); ++i) {
    offsets[i] = row_bytes;
    row_bytes += size_t(sizes[i]);
  }
  auto field_off = [&](const std::string& name) {
    for (size_t i = 0; i < fields.size(); ++i)
      if (fields[i] == name) {
        if (sizes[i] != 4)
          throw std::runtime_error(file.string() + ": field " + name +
                                   " is not 4 bytes");
        return offsets[i];
      }
    throw std::runtime_error(file.string() + ": missing pcd field " + name);
  };
  const size_t ox = field_off("x"), oy = field_off("y"), oz = field_off("z");
  std::vector<char> row(row_bytes);
  std::vector<Point3D> pts;
  pts.reserve(size_t(points));
  for (int i = 0; i < points; ++i) {
    is.read(row.data(), std::streamsize(row_bytes));
    if (!is) throw std::runtime_error(file.string() + ": truncated pcd data");
    float x, y, z;
    std::memcpy(&x, row.data() + ox, 4);
    std::memcpy(&y, row.data() + oy, 4);
    std::memcpy(&z, row.data() + oz, 4);
    pts.push_back(Point3D{x, y, z});
  }
  return pts;
}

// ---- table database ---------------------------------------------------------

namespace {

struct SdRec {
  std::string sample_token, ego_pose_token, calibrated_sensor_token;
  std::string filename, prev;
  double timestamp = 0;  // seconds
  bool key_frame = false;
};

struct CsRec {
  Transform sensor_from;  // sensor -> ego (pose of sensor in ego frame)
  double fx = 0, fy = 0, cx = 0, cy = 0;
  std::string channel;
};

Transform pose_transform(const json& rec) {
  const auto& t = rec.at("translation");
  const auto& q = rec.at("rotation");  // [w, x, y, z]
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  const double tx = t[0], ty = t[1], tz = t[2];
  Transform T;
  T.m = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y), tx,
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x), ty,
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y), tz,
         0, 0, 0, 1};
  return T;
}

json load_table(const fs::path& dir, const std::string& name) {
  std::ifstream is(dir / (name + ".json"));
  if (!is) throw std::runtime_error("missing table " + (dir / name).string() + ".json");
  return json::parse(is);
}

bool night_description(std::string d) {
  std::transform(d.begin(), d.end(), d.begin(),
                 [](unsigned char c) { return char(std::tolower(c)); });
  return d.find("night") != std::string::npos;
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == '_') c = '-';
  return s;
}

}  // namespace

struct Database {
  fs::path root;
  LoaderConfig cfg;
  std::unordered_map<std::string, SdRec> sd;
  std::unordered_map<std::string, CsRec> cs;
  std::unordered_map<std::string, Transform> ego;  // ego -> global
  // sample token -> (channel -> keyframe sd token)
  std::unordered_map<std::string, std::map<std::string, std::string>> sample_sd;
  std::unordered_map<std::string, double> sample_time;
  // scene name -> {night, ordered sample tokens}
  struct SceneRec {
    bool night = false;
    std::vector<std::pair<double, std::string>> samples;  // (timestamp, token)
  };
  std::map<std::string, SceneRec> scenes;  // ordered by name
};

bool looks_like_nuscenes(const fs::path& root) {
  if (!fs::is_directory(root)) return false;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && e.path().filename().string().rfind("v1.0", 0) == 0 &&
        fs::exists(e.path() / "scene.json"))
      return true;
  return false;
}

std::shared_ptr<const Database> open(const fs::path& root, const LoaderConfig& cfg) {
  auto db = std::make_shared<Database>();
  db->root = root;
  db->cfg = cfg;
  fs::path tdir;
  if (!cfg.version.empty()) {
    tdir = root / cfg.version;
  } else {
    std::vector<fs::path> cands;
    for (const auto& e : fs::directory_iterator(root))
      if (e.is_directory() && e.path().filename().string().rfind("v1.0", 0) == 0 &&
          fs::exists(e.path() / "scene.json"))
        cands.push_back(e.path());
    std::sort(cands.begin(), cands.end());
    if (cands.empty())
      throw std::runtime_error(root.string() + ": no v1.0-* table directory");
    tdir = cands.front();
  }

  std::unordered_map<std::string, std::string> sensor_channel;
  for (const auto& r : load_table(tdir, "sensor"))
    sensor_channel[r.at("token")] = r.at("channel");

  for (const auto& r : load_table(tdir, "calibrated_sensor")) {
    CsRec c;
    c.sensor_from = pose_transform(r);
    c.channel = sensor_channel.at(r.at("sensor_token").get<std::string>());
    const auto& K = r.at("camera_intrinsic");
    if (K.is_array() && K.size() == 3) {
      c.fx = K[0][0];
      c.fy = K[1][1];
      c.cx = K[0][2];
      c.cy = K[1][2];
    }
    db->cs[r.at("token")] = std::move(c);
  }

  for (const auto& r : load_table(tdir, "ego_pose"))
    db->ego[r.at("token")] = pose_transform(r);

  std::unordered_map<std::string, std::string> sample_scene;
  for (const auto& r : load_table(tdir, "sample")) {
    sample_scene[r.at("token")] = r.at("scene_token");
    db->sample_time[r.at("token")] = r.at("timestamp").get<double>() * 1e-6;
  }

  for (const auto& r : load_table(tdir, "sample_data")) {
    SdRec s;
    s.sample_token = r.at("sample_token");
    s.ego_pose_token = r.at("ego_pose_token");
    s.calibrated_sensor_token = r.at("calibrated_sensor_token");
    s.filename = r.at("filename");
    s.timestamp = r.at("timestamp").get<double>() * 1e-6;
    s.key_frame = r.at("is_key_frame").get<bool>();
    if (r.contains("prev") && !r.at("prev").is_null()) s.prev = r.at("prev");
    const std::string token = r.at("token");
    if (s.key_frame) {
      const std::string& ch = db->cs.at(s.calibrated_sensor_token).channel;
      db->sample_sd[s.sample_token][ch] = token;
    }
    db->sd[token] = std::move(s);
  }

  std::unordered_map<std::string, std::string> scene_name_of;
  for (const auto& r : load_table(tdir, "scene")) {
    const std::string name = r.at("name");
    scene_name_of[r.at("token")] = name;
    db->scenes[name].night =
        r.contains("description") && night_description(r.at("description"));
  }
  for (const auto& [tok, scene_tok] : sample_scene) {
    auto it = scene_name_of.find(scene_tok);
    if (it == scene_name_of.end()) continue;
    db->scenes[it->second].samples.emplace_back(db->sample_time.at(tok), tok);
  }
  for (auto& [name, rec] : db->scenes)
    std::sort(rec.samples.begin(), rec.samples.end());
  return db;
}

std::vector<SampleRef> index(const Database& db, Split split) {
  std::vector<SampleRef> out;
  size_t scene_idx = 0;
  for (const auto& [name, rec] : db.scenes) {
    const bool is_val = scene_idx % 10 == 9;
    ++scene_idx;
    if ((split == Split::val) != is_val) continue;
    for (const auto& [ts, sample_token] : rec.samples) {
      auto sdit = db.sample_sd.find(sample_token);
      if (sdit == db.sample_sd.end()) continue;
      for (const char* cam : {"CAM_FRONT", "CAM_BACK"}) {
        auto it = sdit->second.find(cam);
        if (it == sdit->second.end()) continue;
        SampleRef ref;
        ref.scene_name = name;
        ref.night = rec.night;
        ref.cam_channel = cam;
        ref.cam_sd_token = it->second;
        ref.sample_token = sample_token;
        ref.sample_id = name + "_" + sanitize(cam) + "-" + sample_token;
        out.push_back(std::move(ref));
      }
    }
  }
  return out;
}

namespace {

// sensor frame (at the given sample_data) -> global
Transform sensor_to_global(const Database& db, const SdRec& sd) {
  return compose(db.ego.at(sd.ego_pose_token),
                 db.cs.at(sd.calibrated_sensor_token).sensor_from);
}

const std::vector<std::string>& radars_for(const std::string& cam) {
  static const std::vector<std::string> front = {"RADAR_FRONT"};
  static const std::vector<std::string> back = {"RADAR_BACK_LEFT",
                                                "RADAR_BACK_RIGHT"};
  return cam == "CAM_FRONT" ? front : back;
}

}  // namespace

FusionSample load(const Database& db, const SampleRef& ref) {
  const SdRec& cam_sd = db.sd.at(ref.cam_sd_token);
  const CsRec& cam_cs = db.cs.at(cam_sd.calibrated_sensor_token);
  const int ds = std::max(1, db.cfg.downscale);

  FusionSample out;
  out.sample_id = ref.sample_id;
  out.lighting = ref.night ? Lighting::night : Lighting::day;

  Image full = read_jpeg(db.root / cam_sd.filename);
  out.image = ds > 1 ? downscale_image(full, ds) : std::move(full);

  CameraModel cam;
  cam.fx = cam_cs.fx / ds;
  cam.fy = cam_cs.fy / ds;
  cam.cx = cam_cs.cx / ds;
  cam.cy = cam_cs.cy / ds;
  cam.width = out.image.width;
  cam.height = out.image.height;
  const Transform global_from_cam = sensor_to_global(db, cam_sd);
  const Transform cam_from_global = global_from_cam.inverse();

  const auto& per_channel = db.sample_sd.at(ref.sample_token);

  // LiDAR ground truth: keyframe LIDAR_TOP moved into the camera frame.
  {
    auto it = per_channel.find("LIDAR_TOP");
    if (it == per_channel.end())
      throw std::runtime_error(ref.sample_id + ": no LIDAR_TOP keyframe");
    const SdRec& lsd = db.sd.at(it->second);
    CameraModel lcam = cam;
    lcam.extrinsic = compose(cam_from_global, sensor_to_global(db, lsd));
    std::vector<Point3D> pts = read_lidar_bin(db.root / lsd.filename);
    out.lidar_gt = render_sparse_map(project_points(pts, lcam), cam.height,
                                     cam.width);
  }

  // Radar: up to n_radar_sweeps per covering channel, each sweep carried by
  // its own extrinsic into the reference camera frame.
  SweepSet sweeps;
  for (const std::string& ch : radars_for(ref.cam_channel)) {
    auto it = per_channel.find(ch);
    if (it == per_channel.end()) continue;
    std::string tok = it->second;
    for (int k = 0; k < db.cfg.n_radar_sweeps && !tok.empty(); ++k) {
      const SdRec& rsd = db.sd.at(tok);
      Sweep sw;
      sw.timestamp = rsd.timestamp;
      sw.extrinsic_at_time = compose(cam_from_global, sensor_to_global(db, rsd));
      sw.points = read_radar_pcd(db.root / rsd.filename);
      sweeps.sweeps.push_back(std::move(sw));
      tok = rsd.prev;
    }
  }
  std::sort(sweeps.sweeps.begin(), sweeps.sweeps.end(),
            [](const Sweep& a, const Sweep& b) { return a.timestamp < b.timestamp; });
  // accumulate_sweeps wants strictly increasing timestamps; radar channels
  // can tick in the same microsecond, so nudge duplicates forward.
  for (size_t i = 1; i < sweeps.sweeps.size(); ++i)
    if (sweeps.sweeps[i].timestamp <= sweeps.sweeps[i - 1].timestamp)
      sweeps.sweeps[i].timestamp = sweeps.sweeps[i - 1].timestamp + 1e-9;
  if (sweeps.sweeps.empty())
    throw std::runtime_error(ref.sample_id + ": no radar sweeps");
  CameraModel rcam = cam;  // points already in camera frame
  std::vector<Point3D> pts = accumulate_sweeps(
      sweeps, cam_sd.timestamp, int(sweeps.sweeps.size()));
  out.radar = render_sparse_map(project_points(pts, rcam), cam.height, cam.width);
  return out;
}

}  // namespace rd::nusc
