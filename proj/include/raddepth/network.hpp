#ifndef RADDEPTH_NETWORK_HPP
#define RADDEPTH_NETWORK_HPP

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "raddepth/filtering.hpp"
#include "raddepth/nn.hpp"
#include "raddepth/types.hpp"

namespace rd {

enum class FusionKind { early, mid, late, multilayer };

std::optional<FusionKind> fusion_from_string(const std::string& s);
const char* to_string(FusionKind k);

struct EncoderConfig {
  // stage widths: {stem, stage1..stage4}; depth branch is exactly 1/4
  std::vector<int> rgb_channels = {16, 16, 32, 64, 128};
  FusionKind fusion = FusionKind::late;
  int depth_in_channels = 1;   // 1 for single stage, 2 for stage 2
  bool rgb_only = false;       // drops the depth branch entirely

  std::vector<int> depth_channels() const;  // rgb/4, throws if not divisible
};

struct ModelConfig {
  EncoderConfig encoder;
  DepthLimits limits;
  uint64_t init_seed = 1;
};

// Residual block: conv3-bn-relu-conv3-bn (+ projection shortcut) - relu.
struct ResidualBlock {
  nn::Conv2d conv1, conv2;
  nn::BatchNorm2d bn1, bn2;
  nn::Conv2d proj;  // 1x1, used when stride != 1 or channels change
  nn::BatchNorm2d proj_bn;
  bool has_proj = false;

  ResidualBlock() = default;
  ResidualBlock(int in_c, int out_c, int stride, nn::Init& init);
  nn::NodePtr forward(nn::NodePtr x, bool training);
  void collect(const std::string& prefix, std::vector<nn::ParamEntry>& params,
               std::vector<nn::BufferEntry>& buffers);
};

// Decoder unit: upsample 2x, then conv5-bn-relu-conv3-bn plus a conv5-bn
// shortcut, joined by relu(add).
struct UpProj {
  nn::Conv2d conv5a, conv3a, conv5b;
  nn::BatchNorm2d bn5a, bn3a, bn5b;

  UpProj() = default;
  UpProj(int in_c, int out_c, nn::Init& init);
  nn::NodePtr forward(nn::NodePtr x, bool training);
  void collect(const std::string& prefix, std::vector<nn::ParamEntry>& params,
               std::vector<nn::BufferEntry>& buffers);
};

struct SingleStageModel {
  EncoderConfig cfg;
  DepthLimits limits;

  // rgb side (trunk); widths depend on fusion kind
  nn::Conv2d rgb_stem;
  nn::BatchNorm2d rgb_stem_bn;
  std::vector<ResidualBlock> rgb_blocks;  // 8
  // depth side (absent for early / rgb_only)
  bool has_depth_branch = false;
  nn::Conv2d depth_stem;
  nn::BatchNorm2d depth_stem_bn;
  std::vector<ResidualBlock> depth_blocks;  // up to 8 depending on fusion
  // decoder
  nn::Conv2d dec_entry;
  nn::BatchNorm2d dec_entry_bn;
  std::vector<UpProj> ups;  // 5
  nn::Conv2d head;

  SingleStageModel() = default;
  SingleStageModel(const EncoderConfig& cfg, const DepthLimits& limits,
                   nn::Init& init);

  // image (N,3,H,W), depth (N,D,H,W) ignored when rgb_only; H,W need not be
  // multiples of 32 (internal pad + crop). Output (N,1,H,W) in
  // [min_pred, max_depth].
  nn::NodePtr forward(nn::NodePtr image, nn::NodePtr depth_in, bool training);

  void collect(const std::string& prefix, std::vector<nn::ParamEntry>& params,
               std::vector<nn::BufferEntry>& buffers);
  int64_t parameter_count();
};

struct TwoStageModel {
  std::shared_ptr<SingleStageModel> stage1;  // late fusion, 1 depth channel
  std::shared_ptr<SingleStageModel> stage2;  // late fusion, 2 depth channels
  nn::NodePtr w1, w2;  // learned loss weights, scalars
  ThresholdParams filter_params;

  TwoStageModel() = default;
  TwoStageModel(const ModelConfig& cfg);

  void collect(std::vector<nn::ParamEntry>& params,
               std::vector<nn::BufferEntry>& buffers);
};

// ---- tensor/bridge helpers -------------------------------------------------

nn::Tensor image_batch(const std::vector<const Image*>& images);
// Depth inputs are fed normalized by max_depth.
nn::Tensor depth_batch(const std::vector<const SparseDepthMap*>& maps, float max_depth);
DenseDepthMap map_from_tensor(const nn::Tensor& t, int batch_index);

// ---- inference entry points ------------------------------------------------

DenseDepthMap forward_single(SingleStageModel& m, const Image& image,
                             const SparseDepthMap& depth_in);

struct TwoStageOutput {
  DenseDepthMap stage1;
  SparseDepthMap filtered;
  DenseDepthMap final;
};
TwoStageOutput forward_two_stage(TwoStageModel& m, const FusionSample& s);

// Differentiable batched pass used by training: both prediction nodes stay
// attached to the graph; the filter mask is recomputed per sample and treated
// as a constant.
struct TwoStageForward {
  nn::NodePtr pred1, pred2;
  std::vector<SparseDepthMap> filtered;
};
TwoStageForward two_stage_forward_batch(TwoStageModel& m,
                                        const std::vector<const FusionSample*>& batch,
                                        bool training);

// ---- checkpoints -----------------------------------------------------------

struct CheckpointMeta {
  std::string fusion;
  std::vector<int> rgb_channels;
  int depth_in_channels = 1;
  bool rgb_only = false;
  bool two_stage = false;
  double w1 = 0, w2 = 0;
  int64_t step = 0;
};

void save_checkpoint(const std::filesystem::path& file, const CheckpointMeta& meta,
                     const std::vector<nn::ParamEntry>& params,
                     const std::vector<nn::BufferEntry>& buffers);
CheckpointMeta load_checkpoint(const std::filesystem::path& file,
                               const std::vector<nn::ParamEntry>& params,
                               const std::vector<nn::BufferEntry>& buffers);
CheckpointMeta peek_checkpoint(const std::filesystem::path& file);

}  // namespace rd

#endif
