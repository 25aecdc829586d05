// Command-line entry points: synth-gen, train, eval, ablate, visualize.
// Exit codes: 0 ok, 1 runtime failure, 2 configuration error.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <streambuf>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "raddepth/dataio.hpp"
#include "raddepth/network.hpp"
#include "raddepth/nuscenes.hpp"
#include "raddepth/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace rd;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- config -----------------------------------------------------------------

struct RunConfig {
  // data
  std::string data_root;
  std::string pattern = "radar";
  int knn_k = 2;
  int n_uniform = -1;
  // model
  std::string variant = "two_stage";
  std::vector<int> widths = {16, 16, 32, 64, 128};
  uint64_t seed = 1;
  double max_depth = 80.0;
  double min_pred = 0.1;
  // filter
  double alpha = 5.0, beta = 18.0, filter_k = 80.0;
  // loss
  bool smoothness = true;
  // train
  TrainConfig train;
};

const std::map<std::string, std::string> kDefaults = {
    {"data.root", ""},
    {"data.pattern", "radar"},
    {"data.knn_k", "2"},
    {"data.n_uniform", "-1"},
    {"model.variant", "two_stage"},
    {"model.widths", "16,16,32,64,128"},
    {"model.seed", "1"},
    {"model.max_depth", "80"},
    {"model.min_pred", "0.1"},
    {"filter.alpha", "5"},
    {"filter.beta", "18"},
    {"filter.k", "80"},
    {"loss.smoothness", "true"},
    {"train.batch_size", "16"},
    {"train.lr", "0.001"},
    {"train.momentum", "0.9"},
    {"train.epochs", "20"},
    {"train.lr_step_epochs", "5"},
    {"train.lr_decay", "0.1"},
    {"train.shuffle_seed", "1397649421"},
};

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

void set_kv(std::map<std::string, std::string>& kv, const std::string& key,
            const std::string& value, const std::string& where) {
  if (kDefaults.find(key) == kDefaults.end())
    throw ConfigError("unknown config key '" + key + "' (" + where + ")");
  kv[key] = value;
}

std::map<std::string, std::string> read_config_file(const fs::path& file) {
  std::map<std::string, std::string> kv;
  std::ifstream is(file);
  if (!is) throw ConfigError("cannot read config file " + file.string());
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(file.string() + ":" + std::to_string(lineno) +
                        ": expected key = value");
    set_kv(kv, trim(line.substr(0, eq)), trim(line.substr(eq + 1)),
           file.string() + ":" + std::to_string(lineno));
  }
  return kv;
}

template <typename T>
T parse_num(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out;
  is >> out;
  if (is.fail() || !is.eof())
    throw ConfigError("bad value '" + v + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("bad boolean '" + v + "' for " + key);
}

std::vector<int> parse_widths(const std::string& v) {
  std::vector<int> out;
  std::istringstream is(v);
  std::string tok;
  while (std::getline(is, tok, ',')) out.push_back(parse_num<int>("model.widths", tok));
  if (out.size() != 5)
    throw ConfigError("model.widths needs 5 comma-separated values, got '" + v + "'");
  return out;
}

// Precedence: --set > RADDEPTH_DATA_ROOT (data.root only) > config file > defaults.
std::map<std::string, std::string> effective_kv(
    const std::string& config_file, const std::vector<std::string>& sets) {
  std::map<std::string, std::string> kv = kDefaults;
  if (!config_file.empty())
    for (const auto& [k, v] : read_config_file(config_file)) kv[k] = v;
  if (const char* env = std::getenv("RADDEPTH_DATA_ROOT"); env && *env)
    kv["data.root"] = env;
  for (const std::string& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + s + "'");
    set_kv(kv, trim(s.substr(0, eq)), trim(s.substr(eq + 1)), "--set");
  }
  return kv;
}

RunConfig materialize(const std::map<std::string, std::string>& kv) {
  RunConfig c;
  c.data_root = kv.at("data.root");
  c.pattern = kv.at("data.pattern");
  if (!pattern_from_string(c.pattern))
    throw ConfigError("unknown data.pattern '" + c.pattern + "'");
  c.knn_k = parse_num<int>("data.knn_k", kv.at("data.knn_k"));
  c.n_uniform = parse_num<int>("data.n_uniform", kv.at("data.n_uniform"));
  c.variant = kv.at("model.variant");
  if (c.variant != "two_stage" && c.variant != "rgb_only" &&
      !fusion_from_string(c.variant))
    throw ConfigError("unknown model.variant '" + c.variant + "'");
  c.widths = parse_widths(kv.at("model.widths"));
  c.seed = parse_num<uint64_t>("model.seed", kv.at("model.seed"));
  c.max_depth = parse_num<double>("model.max_depth", kv.at("model.max_depth"));
  c.min_pred = parse_num<double>("model.min_pred", kv.at("model.min_pred"));
  c.alpha = parse_num<double>("filter.alpha", kv.at("filter.alpha"));
  c.beta = parse_num<double>("filter.beta", kv.at("filter.beta"));
  c.filter_k = parse_num<double>("filter.k", kv.at("filter.k"));
  c.smoothness = parse_bool("loss.smoothness", kv.at("loss.smoothness"));
  c.train.batch_size = parse_num<int>("train.batch_size", kv.at("train.batch_size"));
  c.train.lr = parse_num<double>("train.lr", kv.at("train.lr"));
  c.train.momentum = parse_num<double>("train.momentum", kv.at("train.momentum"));
  c.train.epochs = parse_num<int>("train.epochs", kv.at("train.epochs"));
  c.train.lr_step_epochs =
      parse_num<int>("train.lr_step_epochs", kv.at("train.lr_step_epochs"));
  c.train.lr_decay = parse_num<double>("train.lr_decay", kv.at("train.lr_decay"));
  c.train.shuffle_seed =
      parse_num<uint64_t>("train.shuffle_seed", kv.at("train.shuffle_seed"));
  c.train.smoothness = c.smoothness;
  if (c.train.batch_size < 1 || c.train.epochs < 0 || c.train.lr < 0)
    throw ConfigError("train.* values out of range");
  return c;
}

void write_effective(const fs::path& file,
                     const std::map<std::string, std::string>& kv) {
  std::ofstream os(file);
  for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
}

ModelConfig model_config(const RunConfig& c) {
  ModelConfig mc;
  mc.encoder.rgb_channels = c.widths;
  mc.limits.max_depth = float(c.max_depth);
  mc.limits.min_pred = float(c.min_pred);
  mc.init_seed = c.seed;
  return mc;
}

ModelBundle build_model(const RunConfig& c, const std::string& variant) {
  VariantSpec spec;
  spec.name = variant;
  spec.model = model_config(c);
  ModelBundle b = make_model(spec);
  if (b.two) {
    b.two->filter_params.alpha = c.alpha;
    b.two->filter_params.beta = c.beta;
    b.two->filter_params.K = c.filter_k;
  }
  return b;
}

void apply_pattern(std::vector<FusionSample>& data, const RunConfig& c) {
  const PatternKind kind = *pattern_from_string(c.pattern);
  if (kind == PatternKind::radar) return;
  for (size_t i = 0; i < data.size(); ++i)
    data[i].radar =
        make_input_pattern(kind, data[i], c.knn_k, c.n_uniform, c.seed + i);
}

std::vector<FusionSample> load_split(const RunConfig& c, Split split) {
  if (c.data_root.empty())
    throw ConfigError("data.root is not set (config file, --set data.root=..., "
                      "or RADDEPTH_DATA_ROOT)");
  std::vector<FusionSample> data = load_dataset(c.data_root, split);
  apply_pattern(data, c);
  return data;
}

// mirror the epoch log to stdout and to the run log file
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int ch) override {
    if (ch == EOF) return !EOF;
    const int r1 = a_->sputc(char(ch));
    const int r2 = b_->sputc(char(ch));
    return (r1 == EOF || r2 == EOF) ? EOF : ch;
  }
  int sync() override { return (a_->pubsync() == 0 && b_->pubsync() == 0) ? 0 : -1; }

 private:
  std::streambuf *a_, *b_;
};

json metrics_json(const MetricsReport& r) {
  return json{{"mae", r.mae},       {"rmse", r.rmse},   {"mae_log", r.mae_log},
              {"rel", r.rel},       {"delta1", r.delta1}, {"delta2", r.delta2},
              {"delta3", r.delta3}, {"n_pixels", r.n_pixels},
              {"n_samples", r.n_samples}};
}

json breakdown_json(const EvalBreakdown& b) {
  return json{{"overall", metrics_json(b.overall)},
              {"day", metrics_json(b.day)},
              {"night", metrics_json(b.night)}};
}

void prepare_run_dir(const fs::path& dir, bool resume, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !resume && !force)
    throw ConfigError("run directory " + dir.string() +
                      " is not empty; pass --resume or --force");
  fs::create_directories(dir);
}

// ---- synth-gen ----------------------------------------------------------------

int cmd_synth_gen(const std::string& out, int count, uint64_t seed,
                  double outlier_rate, const std::string& size) {
  SceneSpec spec;
  spec.outlier_rate = outlier_rate;
  if (!size.empty()) {
    const auto x = size.find('x');
    if (x == std::string::npos)
      throw ConfigError("--size expects HxW, got '" + size + "'");
    spec.height = parse_num<int>("size", size.substr(0, x));
    spec.width = parse_num<int>("size", size.substr(x + 1));
  }
  if (!spec.valid()) throw ConfigError("invalid scene spec");
  fs::create_directories(out);
  for (int i = 0; i < count; ++i) {
    spec.seed = seed + uint64_t(i);
    SynthSample s = generate_synthetic_sample(spec);
    char id[32];
    std::snprintf(id, sizeof(id), "s%06llu_00",
                  (unsigned long long)(seed + uint64_t(i)));
    s.sample.sample_id = id;
    const fs::path dir = fs::path(out) / id;
    fs::create_directories(dir);
    save_sample(dir, s.sample);
    write_outlier_labels(dir / "outliers.json", s.radar_points);
  }
  std::cout << "wrote " << count << " samples to " << out << "\n";
  return 0;
}

// ---- train / eval --------------------------------------------------------------

int cmd_train(const std::string& config_file, const std::vector<std::string>& sets,
              const std::string& run_dir, bool resume, bool force) {
  auto kv = effective_kv(config_file, sets);
  RunConfig cfg = materialize(kv);
  prepare_run_dir(run_dir, resume, force);
  write_effective(fs::path(run_dir) / "config.effective", kv);

  auto train = load_split(cfg, Split::train);
  auto val = load_split(cfg, Split::val);
  ModelBundle model = build_model(cfg, cfg.variant);

  cfg.train.out_dir = run_dir;
  cfg.train.resume = resume;
  std::ofstream logfile(fs::path(run_dir) / "train.log",
                        resume ? std::ios::app : std::ios::trunc);
  TeeBuf tee(std::cout.rdbuf(), logfile.rdbuf());
  std::ostream log(&tee);
  TrainResult r = train_model(model, train, val, cfg.train, log);

  EvalBreakdown final_eval = evaluate_model(model, val);
  json out = breakdown_json(final_eval);
  out["best_epoch"] = r.best_epoch;
  out["best_val_mae"] = r.best_val_mae;
  std::ofstream(fs::path(run_dir) / "metrics.json") << out.dump(2) << "\n";
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& config_file,
             const std::vector<std::string>& sets, const std::string& split_name,
             const std::string& out_file) {
  RunConfig cfg = materialize(effective_kv(config_file, sets));
  if (split_name != "train" && split_name != "val")
    throw ConfigError("--split must be train or val");
  ModelBundle model = load_model(checkpoint);
  auto data = load_split(cfg, split_name == "val" ? Split::val : Split::train);
  json out = breakdown_json(evaluate_model(model, data));
  out["checkpoint"] = checkpoint;
  out["split"] = split_name;
  if (!out_file.empty()) std::ofstream(out_file) << out.dump(2) << "\n";
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ---- ablate --------------------------------------------------------------------

struct AblationRow {
  std::string name;
  MetricsReport val;
};

void print_table(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << std::left << std::setw(22) << "variant" << std::right << std::setw(9)
     << "MAE" << std::setw(9) << "RMSE" << std::setw(9) << "MAElog"
     << std::setw(9) << "REL" << std::setw(9) << "d1" << std::setw(9) << "d2"
     << std::setw(9) << "d3" << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(22) << r.name << std::right << std::fixed
       << std::setprecision(3) << std::setw(9) << r.val.mae << std::setw(9)
       << r.val.rmse << std::setw(9) << r.val.mae_log << std::setw(9)
       << r.val.rel << std::setw(9) << r.val.delta1 << std::setw(9)
       << r.val.delta2 << std::setw(9) << r.val.delta3 << "\n";
  }
  os.unsetf(std::ios::fixed);
  os << std::setprecision(6);
}

int cmd_ablate(const std::string& config_file, const std::vector<std::string>& sets,
               const std::string& run_dir, const std::string& mode, bool resume,
               bool force) {
  auto kv = effective_kv(config_file, sets);
  RunConfig cfg = materialize(kv);
  if (mode != "variants" && mode != "patterns")
    throw ConfigError("--mode must be variants or patterns");
  prepare_run_dir(run_dir, resume, force);
  write_effective(fs::path(run_dir) / "config.effective", kv);

  std::vector<AblationRow> rows;
  json jrows = json::array();
  auto run_one = [&](const std::string& label, const std::string& variant,
                     const std::string& pattern, bool smooth) {
    RunConfig c = cfg;
    c.pattern = pattern;
    c.smoothness = smooth;
    c.train.smoothness = smooth;
    c.train.out_dir = fs::path(run_dir) / label;
    c.train.resume = resume;
    auto train = load_split(c, Split::train);
    auto val = load_split(c, Split::val);
    ModelBundle model = build_model(c, variant);
    std::ofstream logfile(fs::path(run_dir) / (label + ".log"));
    std::cout << "== " << label << "\n";
    TeeBuf tee(std::cout.rdbuf(), logfile.rdbuf());
    std::ostream log(&tee);
    train_model(model, train, val, c.train, log);
    AblationRow row{label, evaluate_model(model, val).overall};
    rows.push_back(row);
    json j = metrics_json(row.val);
    j["name"] = label;
    jrows.push_back(j);
  };

  if (mode == "variants") {
    run_one("rgb_only", "rgb_only", cfg.pattern, cfg.smoothness);
    run_one("early", "early", cfg.pattern, cfg.smoothness);
    run_one("mid", "mid", cfg.pattern, cfg.smoothness);
    run_one("late", "late", cfg.pattern, cfg.smoothness);
    run_one("multilayer", "multilayer", cfg.pattern, cfg.smoothness);
    run_one("two_stage_nosmooth", "two_stage", cfg.pattern, false);
    run_one("two_stage_smooth", "two_stage", cfg.pattern, true);
  } else {
    for (const char* p :
         {"radar", "radar_gt_filtered", "lidar_sampled", "lidar_uniform"})
      run_one(p, cfg.variant == "two_stage" ? "late" : cfg.variant, p,
              cfg.smoothness);
  }

  std::ofstream tbl(fs::path(run_dir) / "ablation.txt");
  print_table(tbl, rows);
  std::ofstream(fs::path(run_dir) / "ablation.json") << jrows.dump(2) << "\n";
  print_table(std::cout, rows);
  return 0;
}

// ---- visualize -------------------------------------------------------------------

Image colorize(const DenseDepthMap& d, double max_depth) {
  Image img(d.height, d.width);
  for (int r = 0; r < d.height; ++r)
    for (int c = 0; c < d.width; ++c) {
      const double t =
          std::clamp(double(d.depth[size_t(r) * d.width + c]) / max_depth, 0.0, 1.0);
      img.at(0, r, c) = float(t);
      img.at(1, r, c) = float(1.0 - std::abs(2.0 * t - 1.0));
      img.at(2, r, c) = float(1.0 - t);
    }
  return img;
}

void mark(Image& img, int r, int c, float R, float G, float B) {
  for (int dr = -1; dr <= 1; ++dr)
    for (int dc = -1; dc <= 1; ++dc) {
      const int rr = r + dr, cc = c + dc;
      if (rr < 0 || cc < 0 || rr >= img.height || cc >= img.width) continue;
      img.at(0, rr, cc) = R;
      img.at(1, rr, cc) = G;
      img.at(2, rr, cc) = B;
    }
}

Image grid2x2(const Image& a, const Image& b, const Image& c, const Image& d) {
  const int H = a.height, W = a.width, gap = 2;
  Image out(2 * H + gap, 2 * W + gap);
  auto blit = [&](const Image& src, int r0, int c0) {
    for (int ch = 0; ch < 3; ++ch)
      for (int r = 0; r < H; ++r)
        for (int cc = 0; cc < W; ++cc)
          out.at(ch, r0 + r, c0 + cc) = src.at(ch, r, cc);
  };
  blit(a, 0, 0);
  blit(b, 0, W + gap);
  blit(c, H + gap, 0);
  blit(d, H + gap, W + gap);
  return out;
}

int cmd_visualize(const std::string& checkpoint, const std::string& config_file,
                  const std::vector<std::string>& sets,
                  const std::vector<std::string>& ids, const std::string& out_dir) {
  RunConfig cfg = materialize(effective_kv(config_file, sets));
  ModelBundle model = load_model(checkpoint);
  auto data = load_split(cfg, Split::val);
  {
    auto train = load_split(cfg, Split::train);
    data.insert(data.end(), std::make_move_iterator(train.begin()),
                std::make_move_iterator(train.end()));
  }
  fs::create_directories(out_dir);
  int written = 0;
  for (const std::string& id : ids) {
    const FusionSample* s = nullptr;
    for (const auto& cand : data)
      if (cand.sample_id == id) s = &cand;
    if (!s) {
      std::cerr << "warning: unknown sample id '" << id << "', skipping\n";
      continue;
    }
    DenseDepthMap stage1, final_map;
    SparseDepthMap filtered(s->radar.height, s->radar.width);
    if (model.two) {
      TwoStageOutput out = forward_two_stage(*model.two, *s);
      stage1 = std::move(out.stage1);
      final_map = std::move(out.final);
      filtered = std::move(out.filtered);
    } else {
      final_map = predict(model, *s);
      stage1 = final_map;
      filtered = s->radar;  // single stage: nothing dropped
    }
    Image overlay = s->image;
    for (int r = 0; r < s->radar.height; ++r)
      for (int c = 0; c < s->radar.width; ++c) {
        if (s->radar.depth[size_t(r) * s->radar.width + c] <= 0) continue;
        const bool kept = filtered.depth[size_t(r) * s->radar.width + c] > 0;
        if (kept)
          mark(overlay, r, c, 0.0f, 1.0f, 0.0f);  // kept: green
        else
          mark(overlay, r, c, 1.0f, 0.0f, 0.0f);  // dropped: red
      }
    DenseDepthMap gt_dense(s->lidar_gt.height, s->lidar_gt.width);
    gt_dense.depth = s->lidar_gt.depth;
    Image fig = grid2x2(overlay, colorize(stage1, cfg.max_depth),
                        colorize(final_map, cfg.max_depth),
                        colorize(gt_dense, cfg.max_depth));
    write_ppm(fs::path(out_dir) / (id + ".ppm"), fig);
    ++written;
  }
  std::cout << "wrote " << written << " figures to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"radar+RGB dense depth estimation pipeline"};
  app.require_subcommand(1);

  // synth-gen
  auto* sg = app.add_subcommand("synth-gen", "generate a synthetic dataset");
  std::string sg_out, sg_size;
  int sg_count = 16;
  uint64_t sg_seed = 1;
  double sg_rate = 0.3;
  sg->add_option("--out", sg_out, "output dataset root")->required();
  sg->add_option("--count", sg_count, "number of samples");
  sg->add_option("--seed", sg_seed, "base seed");
  sg->add_option("--outlier-rate", sg_rate, "radar outlier fraction");
  sg->add_option("--size", sg_size, "HxW, default 96x160");

  // shared train/eval options
  std::string config_file, run_dir, checkpoint, split_name = "val", out_file;
  std::vector<std::string> sets, ids;
  bool resume = false, force = false;
  std::string mode = "variants";

  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--config", config_file, "key = value config file");
  tr->add_option("--set", sets, "override: key=value (repeatable)");
  tr->add_option("--run-dir", run_dir, "run directory")->required();
  tr->add_flag("--resume", resume, "continue from run dir checkpoints");
  tr->add_flag("--force", force, "allow writing into a non-empty run dir");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  ev->add_option("--config", config_file, "key = value config file");
  ev->add_option("--set", sets, "override: key=value (repeatable)");
  ev->add_option("--split", split_name, "train or val (default val)");
  ev->add_option("--out", out_file, "also write the JSON report here");

  auto* ab = app.add_subcommand("ablate", "run the comparison sweep");
  ab->add_option("--config", config_file, "key = value config file");
  ab->add_option("--set", sets, "override: key=value (repeatable)");
  ab->add_option("--run-dir", run_dir, "run directory")->required();
  ab->add_option("--mode", mode, "variants (default) or patterns");
  ab->add_flag("--resume", resume, "continue existing runs");
  ab->add_flag("--force", force, "allow writing into a non-empty run dir");

  auto* vz = app.add_subcommand("visualize", "emit figure files for samples");
  vz->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  vz->add_option("--config", config_file, "key = value config file");
  vz->add_option("--set", sets, "override: key=value (repeatable)");
  vz->add_option("--samples", ids, "sample ids (repeatable)")->required();
  vz->add_option("--out", out_file, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int r = app.exit(e);
    return r == 0 ? 0 : 2;  // usage problems are config errors
  }

  try {
    if (sg->parsed()) return cmd_synth_gen(sg_out, sg_count, sg_seed, sg_rate, sg_size);
    if (tr->parsed()) return cmd_train(config_file, sets, run_dir, resume, force);
    if (ev->parsed()) return cmd_eval(checkpoint, config_file, sets, split_name, out_file);
    if (ab->parsed()) return cmd_ablate(config_file, sets, run_dir, mode, resume, force);
    if (vz->parsed()) return cmd_visualize(checkpoint, config_file, sets, ids, out_file);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
