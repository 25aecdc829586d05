#include "raddepth/network.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

using json = nlohmann::json;

namespace rd {

using nn::NodePtr;
using nn::Tensor;

std::optional<FusionKind> fusion_from_string(const std::string& s) {
  if (s == "early") return FusionKind::early;
  if (s == "mid") return FusionKind::mid;
  if (s == "late") return FusionKind::late;
  if (s == "multilayer") return FusionKind::multilayer;
  return std::nullopt;
}

const char* to_string(FusionKind k) {
  switch (k) {
    case FusionKind::early: return "early";
    case FusionKind::mid: return "mid";
    case FusionKind::late: return "late";
    case FusionKind::multilayer: return "multilayer";
  }
  return "?";
}

std::vector<int> EncoderConfig::depth_channels() const {
  std::vector<int> out;
  for (int c : rgb_channels) {
    if (c % 4 != 0)
      throw std::invalid_argument("EncoderConfig: rgb width " + std::to_string(c) +
                                  " not divisible by 4");
    out.push_back(c / 4);
  }
  return out;
}

// ---- building blocks -------------------------------------------------------

ResidualBlock::ResidualBlock(int in_c, int out_c, int stride, nn::Init& init)
    : conv1(in_c, out_c, 3, stride, 1, init),
      conv2(out_c, out_c, 3, 1, 1, init),
      bn1(out_c),
      bn2(out_c) {
  if (stride != 1 || in_c != out_c) {
    has_proj = true;
    proj = nn::Conv2d(in_c, out_c, 1, stride, 0, init);
    proj_bn = nn::BatchNorm2d(out_c);
  }
}

NodePtr ResidualBlock::forward(NodePtr x, bool training) {
  NodePtr y = nn::relu(bn1(conv1(x), training));
  y = bn2(conv2(y), training);
  NodePtr skip = has_proj ? proj_bn(proj(x), training) : x;
  return nn::relu(nn::add(y, skip));
}

void ResidualBlock::collect(const std::string& prefix,
                            std::vector<nn::ParamEntry>& params,
                            std::vector<nn::BufferEntry>& buffers) {
  conv1.collect(prefix + "/conv1", params);
  conv2.collect(prefix + "/conv2", params);
  bn1.collect(prefix + "/bn1", params, buffers);
  bn2.collect(prefix + "/bn2", params, buffers);
  if (has_proj) {
    proj.collect(prefix + "/proj", params);
    proj_bn.collect(prefix + "/proj_bn", params, buffers);
  }
}

UpProj::UpProj(int in_c, int out_c, nn::Init& init)
    : conv5a(in_c, out_c, 5, 1, 2, init),
      conv3a(out_c, out_c, 3, 1, 1, init),
      conv5b(in_c, out_c, 5, 1, 2, init),
      bn5a(out_c),
      bn3a(out_c),
      bn5b(out_c) {}

NodePtr UpProj::forward(NodePtr x, bool training) {
  NodePtr up = nn::upsample2x(x);
  NodePtr a = nn::relu(bn5a(conv5a(up), training));
  a = bn3a(conv3a(a), training);
  NodePtr b = bn5b(conv5b(up), training);
  return nn::relu(nn::add(a, b));
}

void UpProj::collect(const std::string& prefix, std::vector<nn::ParamEntry>& params,
                     std::vector<nn::BufferEntry>& buffers) {
  conv5a.collect(prefix + "/conv5a", params);
  conv3a.collect(prefix + "/conv3a", params);
  conv5b.collect(prefix + "/conv5b", params);
  bn5a.collect(prefix + "/bn5a", params, buffers);
  bn3a.collect(prefix + "/bn3a", params, buffers);
  bn5b.collect(prefix + "/bn5b", params, buffers);
}

// ---- single-stage model ----------------------------------------------------

namespace {

// Two residual blocks per stage; first block carries the stride.
void make_stage(std::vector<ResidualBlock>& blocks, int in_c, int out_c,
                int stride, nn::Init& init) {
  blocks.emplace_back(in_c, out_c, stride, init);
  blocks.emplace_back(out_c, out_c, 1, init);
}

NodePtr run_stage(std::vector<ResidualBlock>& blocks, size_t stage, NodePtr x,
                  bool training) {
  x = blocks[2 * stage].forward(x, training);
  return blocks[2 * stage + 1].forward(x, training);
}

}  // namespace

SingleStageModel::SingleStageModel(const EncoderConfig& cfg_,
                                   const DepthLimits& limits_, nn::Init& init)
    : cfg(cfg_), limits(limits_) {
  const std::vector<int>& R = cfg.rgb_channels;
  if (R.size() != 5) throw std::invalid_argument("EncoderConfig: need 5 widths");
  const std::vector<int> D = cfg.depth_channels();  // validates divisibility

  const bool early = cfg.fusion == FusionKind::early && !cfg.rgb_only;
  has_depth_branch = !cfg.rgb_only && !early;

  const int rgb_in = early ? 3 + cfg.depth_in_channels : 3;
  rgb_stem = nn::Conv2d(rgb_in, R[0], 7, 2, 3, init);
  rgb_stem_bn = nn::BatchNorm2d(R[0]);

  // trunk stage input widths depend on where fusion concats happen
  auto trunk_in = [&](int stage, int prev_out) {
    if (!has_depth_branch) return prev_out;
    switch (cfg.fusion) {
      case FusionKind::mid:
        return stage == 2 ? prev_out + D[2] : prev_out;
      case FusionKind::multilayer:
        return prev_out + D[stage];  // concat at every resolution
      default:
        return prev_out;  // late: fusion after stage 4 only
    }
  };
  int prev = R[0];
  for (int s = 0; s < 4; ++s) {
    const int stride = s == 0 ? 1 : 2;
    const int in_c = trunk_in(s, prev);
    make_stage(rgb_blocks, in_c, R[s + 1], stride, init);
    prev = R[s + 1];
  }

  int dec_in = R[4];
  if (has_depth_branch) {
    depth_stem = nn::Conv2d(cfg.depth_in_channels, D[0], 7, 2, 3, init);
    depth_stem_bn = nn::BatchNorm2d(D[0]);
    const int depth_stages = cfg.fusion == FusionKind::mid ? 2 : 4;
    int dprev = D[0];
    for (int s = 0; s < depth_stages; ++s) {
      const int stride = s == 0 ? 1 : 2;
      make_stage(depth_blocks, dprev, D[s + 1], stride, init);
      dprev = D[s + 1];
    }
    if (cfg.fusion == FusionKind::late || cfg.fusion == FusionKind::multilayer)
      dec_in = R[4] + D[4];
  }

  dec_entry = nn::Conv2d(dec_in, R[4], 1, 1, 0, init);
  dec_entry_bn = nn::BatchNorm2d(R[4]);
  int cur = R[4];
  for (int i = 0; i < 5; ++i) {
    const int next = std::max(8, cur / 2);
    ups.emplace_back(cur, next, init);
    cur = next;
  }
  head = nn::Conv2d(cur, 1, 3, 1, 1, init);
  // start predictions mid-range instead of at the clamp floor
  head.bias->val.v[0] = 0.25f;
}

NodePtr SingleStageModel::forward(NodePtr image, NodePtr depth_in, bool training) {
  const int H = image->val.h(), W = image->val.w();
  if (H < 32 || W < 32)
    throw std::invalid_argument("forward_single: inputs must be at least 32x32");
  const int PH = (H + 31) / 32 * 32;
  const int PW = (W + 31) / 32 * 32;
  if (PH != H || PW != W) {
    image = nn::pad_bottom_right(image, PH, PW);
    if (depth_in) depth_in = nn::pad_bottom_right(depth_in, PH, PW);
  }

  NodePtr x;
  if (cfg.rgb_only) {
    x = image;
  } else if (cfg.fusion == FusionKind::early) {
    if (!depth_in) throw std::invalid_argument("early fusion needs a depth input");
    x = nn::concat_channels({image, depth_in});
  } else {
    x = image;
  }
  x = nn::maxpool2x2(nn::relu(rgb_stem_bn(rgb_stem(x), training)));

  std::vector<NodePtr> depth_feats;  // after pool, then per stage
  if (has_depth_branch) {
    if (!depth_in) throw std::invalid_argument("fusion model needs a depth input");
    NodePtr d = nn::maxpool2x2(nn::relu(depth_stem_bn(depth_stem(depth_in), training)));
    depth_feats.push_back(d);
    for (size_t s = 0; s * 2 < depth_blocks.size(); ++s) {
      d = run_stage(depth_blocks, s, d, training);
      depth_feats.push_back(d);
    }
  }

  for (int s = 0; s < 4; ++s) {
    if (has_depth_branch && cfg.fusion == FusionKind::multilayer)
      x = nn::concat_channels({x, depth_feats[s]});
    if (has_depth_branch && cfg.fusion == FusionKind::mid && s == 2)
      x = nn::concat_channels({x, depth_feats.back()});
    x = run_stage(rgb_blocks, s, x, training);
  }
  if (has_depth_branch &&
      (cfg.fusion == FusionKind::late || cfg.fusion == FusionKind::multilayer))
    x = nn::concat_channels({x, depth_feats.back()});

  x = nn::relu(dec_entry_bn(dec_entry(x), training));
  for (auto& up : ups) x = up.forward(x, training);
  x = head(x);
  x = nn::scale_clamp(x, limits.max_depth, limits.min_pred, limits.max_depth);
  if (PH != H || PW != W) x = nn::crop_top_left(x, H, W);
  return x;
}

void SingleStageModel::collect(const std::string& prefix,
                               std::vector<nn::ParamEntry>& params,
                               std::vector<nn::BufferEntry>& buffers) {
  rgb_stem.collect(prefix + "/rgb/stem", params);
  rgb_stem_bn.collect(prefix + "/rgb/stem_bn", params, buffers);
  for (size_t i = 0; i < rgb_blocks.size(); ++i)
    rgb_blocks[i].collect(prefix + "/rgb/s" + std::to_string(i / 2) + "b" +
                              std::to_string(i % 2),
                          params, buffers);
  if (has_depth_branch) {
    depth_stem.collect(prefix + "/depth/stem", params);
    depth_stem_bn.collect(prefix + "/depth/stem_bn", params, buffers);
    for (size_t i = 0; i < depth_blocks.size(); ++i)
      depth_blocks[i].collect(prefix + "/depth/s" + std::to_string(i / 2) + "b" +
                                  std::to_string(i % 2),
                              params, buffers);
  }
  dec_entry.collect(prefix + "/dec/entry", params);
  dec_entry_bn.collect(prefix + "/dec/entry_bn", params, buffers);
  for (size_t i = 0; i < ups.size(); ++i)
    ups[i].collect(prefix + "/dec/up" + std::to_string(i), params, buffers);
  head.collect(prefix + "/head", params);
}

int64_t SingleStageModel::parameter_count() {
  std::vector<nn::ParamEntry> params;
  std::vector<nn::BufferEntry> buffers;
  collect("m", params, buffers);
  int64_t total = 0;
  for (const auto& p : params) total += int64_t(p.node->val.size());
  return total;
}

TwoStageModel::TwoStageModel(const ModelConfig& mc) {
  EncoderConfig c1 = mc.encoder;
  c1.fusion = FusionKind::late;  // each stage is a full late fusion model
  c1.rgb_only = false;
  c1.depth_in_channels = 1;
  EncoderConfig c2 = c1;
  c2.depth_in_channels = 2;  // filtered radar + stage-1 prediction
  nn::Init i1(mc.init_seed);
  nn::Init i2(mc.init_seed + 0x51ed2701);
  stage1 = std::make_shared<SingleStageModel>(c1, mc.limits, i1);
  stage2 = std::make_shared<SingleStageModel>(c2, mc.limits, i2);
  // Log-scale uncertainty weights start at ln(expected initial depth error
  // in meters) so the e^{-w} factors neither blow up the first gradients nor
  // drag the total loss upward while w equilibrates.
  w1 = nn::make_param(Tensor(1, 1, 1, 1));
  w1->val.v[0] = 2.0f;
  w2 = nn::make_param(Tensor(1, 1, 1, 1));
  w2->val.v[0] = 2.0f;
  filter_params.K = mc.limits.max_depth;
}

void TwoStageModel::collect(std::vector<nn::ParamEntry>& params,
                            std::vector<nn::BufferEntry>& buffers) {
  stage1->collect("stage1", params, buffers);
  stage2->collect("stage2", params, buffers);
  params.push_back({"loss/w1", w1});
  params.push_back({"loss/w2", w2});
}

// ---- tensor bridges --------------------------------------------------------

Tensor image_batch(const std::vector<const Image*>& images) {
  if (images.empty()) throw std::invalid_argument("image_batch: empty");
  const int H = images[0]->height, W = images[0]->width;
  Tensor t(int(images.size()), 3, H, W);
  const size_t chunk = size_t(3) * H * W;
  for (size_t i = 0; i < images.size(); ++i) {
    if (images[i]->height != H || images[i]->width != W)
      throw std::invalid_argument("image_batch: shape mismatch");
    std::copy_n(images[i]->pixels.data(), chunk, t.data() + i * chunk);
  }
  return t;
}

Tensor depth_batch(const std::vector<const SparseDepthMap*>& maps, float max_depth) {
  if (maps.empty()) throw std::invalid_argument("depth_batch: empty");
  const int H = maps[0]->height, W = maps[0]->width;
  Tensor t(int(maps.size()), 1, H, W);
  const size_t chunk = size_t(H) * W;
  for (size_t i = 0; i < maps.size(); ++i) {
    if (maps[i]->height != H || maps[i]->width != W)
      throw std::invalid_argument("depth_batch: shape mismatch");
    for (size_t j = 0; j < chunk; ++j)
      t.v[i * chunk + j] = maps[i]->depth[j] / max_depth;
  }
  return t;
}

DenseDepthMap map_from_tensor(const Tensor& t, int batch_index) {
  DenseDepthMap m(t.h(), t.w());
  const size_t chunk = size_t(t.h()) * t.w();
  std::copy_n(t.data() + size_t(batch_index) * t.c() * chunk, chunk, m.depth.data());
  return m;
}

// ---- inference -------------------------------------------------------------

DenseDepthMap forward_single(SingleStageModel& m, const Image& image,
                             const SparseDepthMap& depth_in) {
  NodePtr img = nn::make_input(image_batch({&image}));
  NodePtr d;
  if (!m.cfg.rgb_only)
    d = nn::make_input(depth_batch({&depth_in}, m.limits.max_depth));
  NodePtr pred = m.forward(img, d, /*training=*/false);
  return map_from_tensor(pred->val, 0);
}

TwoStageForward two_stage_forward_batch(TwoStageModel& m,
                                        const std::vector<const FusionSample*>& batch,
                                        bool training) {
  std::vector<const Image*> imgs;
  std::vector<const SparseDepthMap*> radars;
  for (const FusionSample* s : batch) {
    imgs.push_back(&s->image);
    radars.push_back(&s->radar);
  }
  const float max_depth = m.stage1->limits.max_depth;
  NodePtr img = nn::make_input(image_batch(imgs));
  NodePtr radar = nn::make_input(depth_batch(radars, max_depth));

  TwoStageForward out;
  out.pred1 = m.stage1->forward(img, radar, training);

  // The keep/drop mask is discrete; it is computed from the stage-1 values
  // and treated as a constant. Gradients reach stage 1 through the loss and
  // through the stage-1 prediction channel of stage 2.
  for (size_t i = 0; i < batch.size(); ++i) {
    DenseDepthMap coarse = map_from_tensor(out.pred1->val, int(i));
    out.filtered.push_back(noise_filter(batch[i]->radar, coarse, m.filter_params).filtered);
  }
  std::vector<const SparseDepthMap*> fptr;
  for (const auto& f : out.filtered) fptr.push_back(&f);
  NodePtr filtered = nn::make_input(depth_batch(fptr, max_depth));
  NodePtr pred1_norm =
      nn::scale_clamp(out.pred1, 1.0f / max_depth, -1e30f, 1e30f);
  NodePtr depth2 = nn::concat_channels({filtered, pred1_norm});
  out.pred2 = m.stage2->forward(img, depth2, training);
  return out;
}

TwoStageOutput forward_two_stage(TwoStageModel& m, const FusionSample& s) {
  TwoStageForward f = two_stage_forward_batch(m, {&s}, /*training=*/false);
  TwoStageOutput out;
  out.stage1 = map_from_tensor(f.pred1->val, 0);
  out.filtered = std::move(f.filtered[0]);
  out.final = map_from_tensor(f.pred2->val, 0);
  return out;
}

// ---- checkpoints -----------------------------------------------------------

namespace {
constexpr char kMagic[] = "RDCKPT1\n";

json meta_to_json(const CheckpointMeta& m) {
  return json{{"fusion", m.fusion},
              {"rgb_channels", m.rgb_channels},
              {"depth_in_channels", m.depth_in_channels},
              {"rgb_only", m.rgb_only},
              {"two_stage", m.two_stage},
              {"w1", m.w1},
              {"w2", m.w2},
              {"step", m.step}};
}

CheckpointMeta meta_from_json(const json& j) {
  CheckpointMeta m;
  m.fusion = j.at("fusion").get<std::string>();
  m.rgb_channels = j.at("rgb_channels").get<std::vector<int>>();
  m.depth_in_channels = j.at("depth_in_channels").get<int>();
  m.rgb_only = j.at("rgb_only").get<bool>();
  m.two_stage = j.at("two_stage").get<bool>();
  m.w1 = j.at("w1").get<double>();
  m.w2 = j.at("w2").get<double>();
  m.step = j.at("step").get<int64_t>();
  return m;
}

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}
uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

void write_entry(std::ostream& os, const std::string& name, const Tensor& t) {
  write_u32(os, uint32_t(name.size()));
  os.write(name.data(), std::streamsize(name.size()));
  for (int d : t.shape) write_u32(os, uint32_t(d));
  os.write(reinterpret_cast<const char*>(t.data()),
           std::streamsize(t.size() * sizeof(float)));
}

void read_entry(std::istream& is, const std::string& expect_name, Tensor& t,
                const std::filesystem::path& file) {
  const uint32_t len = read_u32(is);
  std::string name(len, '\0');
  is.read(name.data(), len);
  if (name != expect_name)
    throw std::runtime_error(file.string() + ": checkpoint entry '" + name +
                             "' where '" + expect_name + "' expected");
  std::array<int, 4> shape;
  for (int& d : shape) d = int(read_u32(is));
  if (shape != t.shape)
    throw std::runtime_error(file.string() + ": shape mismatch for '" + name + "'");
  is.read(reinterpret_cast<char*>(t.data()),
          std::streamsize(t.size() * sizeof(float)));
  if (!is) throw std::runtime_error(file.string() + ": truncated checkpoint");
}
}  // namespace

void save_checkpoint(const std::filesystem::path& file, const CheckpointMeta& meta,
                     const std::vector<nn::ParamEntry>& params,
                     const std::vector<nn::BufferEntry>& buffers) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os.write(kMagic, 8);
  const std::string mj = meta_to_json(meta).dump();
  write_u32(os, uint32_t(mj.size()));
  os.write(mj.data(), std::streamsize(mj.size()));
  write_u32(os, uint32_t(params.size() + buffers.size()));
  for (const auto& p : params) write_entry(os, p.name, p.node->val);
  for (const auto& b : buffers) write_entry(os, b.name, *b.tensor);
}

CheckpointMeta load_checkpoint(const std::filesystem::path& file,
                               const std::vector<nn::ParamEntry>& params,
                               const std::vector<nn::BufferEntry>& buffers) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + file.string());
  char magic[8];
  is.read(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error(file.string() + ": not a checkpoint file");
  const uint32_t mlen = read_u32(is);
  std::string mj(mlen, '\0');
  is.read(mj.data(), mlen);
  CheckpointMeta meta = meta_from_json(json::parse(mj));
  const uint32_t n = read_u32(is);
  if (n != params.size() + buffers.size())
    throw std::runtime_error(file.string() + ": entry count mismatch");
  for (const auto& p : params) read_entry(is, p.name, p.node->val, file);
  for (const auto& b : buffers) read_entry(is, b.name, *b.tensor, file);
  return meta;
}

CheckpointMeta peek_checkpoint(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + file.string());
  char magic[8];
  is.read(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error(file.string() + ": not a checkpoint file");
  const uint32_t mlen = read_u32(is);
  std::string mj(mlen, '\0');
  is.read(mj.data(), mlen);
  return meta_from_json(json::parse(mj));
}

}  // namespace rd
