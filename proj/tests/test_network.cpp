#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "raddepth/dataio.hpp"
#include "raddepth/filtering.hpp"
#include "raddepth/network.hpp"

using namespace rd;

namespace {

const std::vector<int> kSmall = {8, 8, 16, 32, 64};

ModelConfig small_config(FusionKind kind, uint64_t seed = 7) {
  ModelConfig mc;
  mc.encoder.rgb_channels = kSmall;
  mc.encoder.fusion = kind;
  mc.init_seed = seed;
  return mc;
}

FusionSample make_sample(uint64_t seed, int h = 64, int w = 96) {
  SceneSpec spec;
  spec.seed = seed;
  spec.height = h;
  spec.width = w;
  return generate_synthetic_sample(spec).sample;
}

bool all_finite_in_range(const DenseDepthMap& m, const DepthLimits& lim) {
  for (float v : m.depth) {
    if (!std::isfinite(v)) return false;
    if (v < lim.min_pred - 1e-4f || v > lim.max_depth + 1e-4f) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("depth widths must be a quarter of the rgb widths") {
  EncoderConfig cfg;
  cfg.rgb_channels = {16, 16, 32, 64, 128};
  CHECK(cfg.depth_channels() == std::vector<int>{4, 4, 8, 16, 32});
  cfg.rgb_channels = {16, 16, 30, 64, 128};
  CHECK_THROWS_AS((void)cfg.depth_channels(), std::invalid_argument);
  nn::Init init(1);
  CHECK_THROWS_AS(SingleStageModel(cfg, DepthLimits{}, init), std::invalid_argument);
}

TEST_CASE("fusion string round trips") {
  for (auto k : {FusionKind::early, FusionKind::mid, FusionKind::late,
                 FusionKind::multilayer}) {
    auto back = fusion_from_string(to_string(k));
    REQUIRE(back.has_value());
    CHECK(*back == k);
  }
  CHECK(!fusion_from_string("bogus").has_value());
}

TEST_CASE("all fusion kinds produce finite in-range output at full shape") {
  FusionSample s = make_sample(11);
  for (auto kind : {FusionKind::early, FusionKind::mid, FusionKind::late,
                    FusionKind::multilayer}) {
    CAPTURE(to_string(kind));
    ModelConfig mc = small_config(kind);
    nn::Init init(mc.init_seed);
    SingleStageModel m(mc.encoder, mc.limits, init);
    DenseDepthMap pred = forward_single(m, s.image, s.radar);
    CHECK(pred.height == s.image.height);
    CHECK(pred.width == s.image.width);
    CHECK(all_finite_in_range(pred, mc.limits));
  }
}

TEST_CASE("rgb-only variant ignores the depth input") {
  FusionSample s = make_sample(12);
  ModelConfig mc = small_config(FusionKind::late);
  mc.encoder.rgb_only = true;
  nn::Init init(3);
  SingleStageModel m(mc.encoder, mc.limits, init);
  DenseDepthMap a = forward_single(m, s.image, s.radar);
  SparseDepthMap empty(s.image.height, s.image.width);
  DenseDepthMap b = forward_single(m, s.image, empty);
  for (size_t i = 0; i < a.depth.size(); ++i) CHECK(a.depth[i] == b.depth[i]);
}

TEST_CASE("non-multiple-of-32 input is padded then cropped back") {
  FusionSample s = make_sample(13, 45, 80);
  ModelConfig mc = small_config(FusionKind::late);
  nn::Init init(mc.init_seed);
  SingleStageModel m(mc.encoder, mc.limits, init);
  DenseDepthMap pred = forward_single(m, s.image, s.radar);
  CHECK(pred.height == 45);
  CHECK(pred.width == 80);
  CHECK(all_finite_in_range(pred, mc.limits));
  // below the minimum supported size must be rejected, not mis-shaped
  FusionSample tiny = make_sample(14, 16, 48);
  CHECK_THROWS_AS(forward_single(m, tiny.image, tiny.radar), std::invalid_argument);
}

TEST_CASE("parameter counts order by how much the fusion shares") {
  auto count = [](FusionKind kind, bool rgb_only = false) {
    ModelConfig mc = small_config(kind);
    mc.encoder.rgb_only = rgb_only;
    nn::Init init(1);
    SingleStageModel m(mc.encoder, mc.limits, init);
    return m.parameter_count();
  };
  const int64_t rgb = count(FusionKind::late, true);
  const int64_t early = count(FusionKind::early);
  const int64_t mid = count(FusionKind::mid);
  const int64_t late = count(FusionKind::late);
  const int64_t multi = count(FusionKind::multilayer);
  CAPTURE(rgb);
  CAPTURE(early);
  CAPTURE(mid);
  CAPTURE(late);
  CAPTURE(multi);
  CHECK(rgb < early);
  CHECK(early < mid);
  CHECK(mid < late);
  CHECK(late < multi);
}

TEST_CASE("gradient reaches every parameter of a late-fusion model") {
  FusionSample s = make_sample(15, 32, 64);
  ModelConfig mc = small_config(FusionKind::late);
  nn::Init init(mc.init_seed);
  SingleStageModel m(mc.encoder, mc.limits, init);
  nn::NodePtr img = nn::make_input(image_batch({&s.image}));
  nn::NodePtr d = nn::make_input(depth_batch({&s.radar}, mc.limits.max_depth));
  nn::NodePtr pred = m.forward(img, d, /*training=*/true);
  pred->ensure_grad();
  std::fill(pred->grad.v.begin(), pred->grad.v.end(), 1.0f);
  nn::backward({pred});
  std::vector<nn::ParamEntry> params;
  std::vector<nn::BufferEntry> buffers;
  m.collect("m", params, buffers);
  CHECK(params.size() > 50);
  for (const auto& p : params) {
    CAPTURE(p.name);
    REQUIRE(p.node->grad.size() == p.node->val.size());
    bool any = false;
    for (float g : p.node->grad.v) {
      REQUIRE(std::isfinite(g));
      if (g != 0.0f) any = true;
    }
    CHECK(any);
  }
}

TEST_CASE("two-stage forward: shapes, filter consistency, stage-2 coupling") {
  FusionSample s = make_sample(16);
  TwoStageModel m(small_config(FusionKind::late, 21));
  TwoStageOutput out = forward_two_stage(m, s);
  CHECK(out.stage1.height == s.image.height);
  CHECK(out.final.width == s.image.width);
  CHECK(all_finite_in_range(out.stage1, m.stage1->limits));
  CHECK(all_finite_in_range(out.final, m.stage2->limits));

  // the filtered map must be exactly what the noise filter would produce
  // from the stage-1 prediction
  FilterResult expect = noise_filter(s.radar, out.stage1, m.filter_params);
  REQUIRE(expect.filtered.depth.size() == out.filtered.depth.size());
  for (size_t i = 0; i < out.filtered.depth.size(); ++i)
    CHECK(out.filtered.depth[i] == expect.filtered.depth[i]);

  // batched training pass keeps both prediction nodes differentiable
  TwoStageForward f = two_stage_forward_batch(m, {&s}, /*training=*/true);
  CHECK(f.pred1->requires_grad);
  CHECK(f.pred2->requires_grad);
  f.pred2->ensure_grad();
  std::fill(f.pred2->grad.v.begin(), f.pred2->grad.v.end(), 1.0f);
  nn::backward({f.pred2});
  // stage-1 parameters receive gradient through the stage-2 input channel
  std::vector<nn::ParamEntry> p1;
  std::vector<nn::BufferEntry> b1;
  m.stage1->collect("stage1", p1, b1);
  bool any_stage1 = false;
  for (const auto& p : p1)
    if (p.node->grad.size() > 0)
      for (float g : p.node->grad.v)
        if (g != 0.0f) any_stage1 = true;
  CHECK(any_stage1);
}

TEST_CASE("checkpoint round trip restores parameters, buffers and outputs") {
  namespace fs = std::filesystem;
  const fs::path file = fs::temp_directory_path() / "rd_test_ckpt.bin";
  FusionSample s = make_sample(17);

  TwoStageModel a(small_config(FusionKind::late, 5));
  // move a running stat so buffers are exercised too
  TwoStageForward warm = two_stage_forward_batch(a, {&s}, /*training=*/true);
  (void)warm;
  std::vector<nn::ParamEntry> pa;
  std::vector<nn::BufferEntry> ba;
  a.collect(pa, ba);
  CheckpointMeta meta;
  meta.fusion = "late";
  meta.rgb_channels = kSmall;
  meta.two_stage = true;
  meta.w1 = 0.125;
  meta.w2 = -0.5;
  meta.step = 42;
  save_checkpoint(file, meta, pa, ba);

  TwoStageModel b(small_config(FusionKind::late, 999));
  std::vector<nn::ParamEntry> pb;
  std::vector<nn::BufferEntry> bb;
  b.collect(pb, bb);
  CheckpointMeta got = load_checkpoint(file, pb, bb);
  CHECK(got.step == 42);
  CHECK(got.w1 == 0.125);
  CHECK(got.fusion == "late");
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i)
    for (size_t j = 0; j < pa[i].node->val.size(); ++j)
      CHECK(pa[i].node->val.v[j] == pb[i].node->val.v[j]);
  for (size_t i = 0; i < ba.size(); ++i)
    for (size_t j = 0; j < ba[i].tensor->size(); ++j)
      CHECK(ba[i].tensor->v[j] == bb[i].tensor->v[j]);

  TwoStageOutput oa = forward_two_stage(a, s);
  TwoStageOutput ob = forward_two_stage(b, s);
  for (size_t i = 0; i < oa.final.depth.size(); ++i)
    CHECK(oa.final.depth[i] == ob.final.depth[i]);

  CheckpointMeta peeked = peek_checkpoint(file);
  CHECK(peeked.step == 42);
  CHECK(peeked.two_stage);

  // loading into a model with a different architecture must fail loudly
  TwoStageModel c(small_config(FusionKind::early, 5));
  std::vector<nn::ParamEntry> pc;
  std::vector<nn::BufferEntry> bc;
  c.collect(pc, bc);
  // early-fusion two-stage has same stage structure (stages are forced to
  // late), so instead corrupt the expectation with fewer entries
  pc.pop_back();
  CHECK_THROWS(load_checkpoint(file, pc, bc));
  fs::remove(file);
}

TEST_CASE("tensor bridges normalize and round trip") {
  FusionSample s = make_sample(18, 32, 64);
  nn::Tensor rad = depth_batch({&s.radar}, 80.0f);
  int checked = 0;
  for (size_t i = 0; i < s.radar.depth.size(); ++i) {
    CHECK(rad.v[i] == doctest::Approx(s.radar.depth[i] / 80.0f));
    if (s.radar.depth[i] > 0) ++checked;
  }
  CHECK(checked > 0);
  nn::Tensor img = image_batch({&s.image});
  CHECK(img.n() == 1);
  CHECK(img.c() == 3);
  CHECK(img.v[0] == s.image.pixels[0]);
  DenseDepthMap m(2, 2);
  nn::Tensor t(2, 1, 2, 2);
  for (int i = 0; i < 8; ++i) t.v[i] = float(i);
  DenseDepthMap back = map_from_tensor(t, 1);
  CHECK(back.depth[0] == 4.0f);
  CHECK(back.depth[3] == 7.0f);
}
