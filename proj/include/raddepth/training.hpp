#ifndef RADDEPTH_TRAINING_HPP
#define RADDEPTH_TRAINING_HPP

#include <filesystem>
#include <iosfwd>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "raddepth/evaluation.hpp"
#include "raddepth/network.hpp"
#include "raddepth/types.hpp"

namespace rd {

struct TrainConfig {
  int batch_size = 16;
  double lr = 0.001;
  double momentum = 0.9;
  int epochs = 20;
  int lr_step_epochs = 5;   // multiply lr by lr_decay every this many epochs
  double lr_decay = 0.1;
  bool smoothness = true;   // edge-aware smoothness term (stage-1 / single)
  uint64_t shuffle_seed = 0x5eedf00dULL;
  std::filesystem::path out_dir;  // empty: keep everything in memory
  bool resume = false;            // continue from out_dir/last.ckpt if present
};

// Step schedule: lr * decay^(epoch / step_epochs), epoch is 0-based.
double lr_for_epoch(const TrainConfig& cfg, int epoch);

// Plain SGD with momentum: v <- mu*v + g; p <- p - lr*v.
struct SGD {
  std::vector<nn::ParamEntry> params;
  std::vector<nn::Tensor> velocity;
  double lr = 0;
  double momentum = 0;

  SGD(std::vector<nn::ParamEntry> params_, double lr_, double momentum_);
  void zero_grad();
  void step();
};

// Model variants exposed to training / CLI:
//   rgb_only                 image-only single stage
//   early|mid|late|multilayer single-stage fusion of that kind
//   two_stage                full pipeline (late fusion per stage)
struct VariantSpec {
  std::string name = "two_stage";
  ModelConfig model;
};

struct ModelBundle {
  std::string variant;
  std::shared_ptr<SingleStageModel> single;  // null when two-stage
  std::shared_ptr<TwoStageModel> two;        // null when single-stage

  bool is_two_stage() const { return two != nullptr; }
  void collect(std::vector<nn::ParamEntry>& params,
               std::vector<nn::BufferEntry>& buffers);
  CheckpointMeta meta() const;
};

ModelBundle make_model(const VariantSpec& spec);
// Rebuilds the bundle a checkpoint was saved from, then loads it.
ModelBundle load_model(const std::filesystem::path& ckpt, uint64_t init_seed = 1);

DenseDepthMap predict(ModelBundle& m, const FusionSample& s);

struct EpochLog {
  int epoch = 0;  // 1-based in logs
  double lr = 0;
  double train_loss = 0;
  MetricsReport val;
};

struct TrainResult {
  std::vector<EpochLog> history;
  double best_val_mae = std::numeric_limits<double>::infinity();
  int best_epoch = -1;  // 1-based
};

// Trains in place. Writes last.ckpt / best.ckpt under cfg.out_dir when set,
// one "key=value ..." line per epoch to `log`. Throws on non-finite loss.
TrainResult train_model(ModelBundle& m, const std::vector<FusionSample>& train,
                        const std::vector<FusionSample>& val,
                        const TrainConfig& cfg, std::ostream& log);

struct EvalBreakdown {
  MetricsReport overall, day, night;
};
EvalBreakdown evaluate_model(ModelBundle& m, const std::vector<FusionSample>& data);

}  // namespace rd

#endif
