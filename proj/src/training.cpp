#include "raddepth/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <stdexcept>

#include "raddepth/objective.hpp"

namespace rd {

double lr_for_epoch(const TrainConfig& cfg, int epoch) {
  const int steps = cfg.lr_step_epochs > 0 ? epoch / cfg.lr_step_epochs : 0;
  return cfg.lr * std::pow(cfg.lr_decay, steps);
}

SGD::SGD(std::vector<nn::ParamEntry> params_, double lr_, double momentum_)
    : params(std::move(params_)), lr(lr_), momentum(momentum_) {
  for (const auto& p : params) {
    const auto& s = p.node->val.shape;
    velocity.emplace_back(s[0], s[1], s[2], s[3]);
  }
}

void SGD::zero_grad() {
  for (const auto& p : params) {
    p.node->ensure_grad();
    std::fill(p.node->grad.v.begin(), p.node->grad.v.end(), 0.0f);
  }
}

void SGD::step() {
  for (size_t i = 0; i < params.size(); ++i) {
    nn::Tensor& v = velocity[i];
    nn::Tensor& g = params[i].node->grad;
    nn::Tensor& w = params[i].node->val;
    for (size_t j = 0; j < w.size(); ++j) {
      v.v[j] = float(momentum) * v.v[j] + g.v[j];
      w.v[j] -= float(lr) * v.v[j];
    }
  }
}

// ---- model bundle ----------------------------------------------------------

ModelBundle make_model(const VariantSpec& spec) {
  ModelBundle b;
  b.variant = spec.name;
  if (spec.name == "two_stage") {
    b.two = std::make_shared<TwoStageModel>(spec.model);
    return b;
  }
  EncoderConfig cfg = spec.model.encoder;
  cfg.depth_in_channels = 1;
  if (spec.name == "rgb_only") {
    cfg.rgb_only = true;
  } else {
    auto kind = fusion_from_string(spec.name);
    if (!kind)
      throw std::invalid_argument("unknown model variant '" + spec.name + "'");
    cfg.rgb_only = false;
    cfg.fusion = *kind;
  }
  nn::Init init(spec.model.init_seed);
  b.single = std::make_shared<SingleStageModel>(cfg, spec.model.limits, init);
  return b;
}

void ModelBundle::collect(std::vector<nn::ParamEntry>& params,
                          std::vector<nn::BufferEntry>& buffers) {
  if (two)
    two->collect(params, buffers);
  else
    single->collect("model", params, buffers);
}

CheckpointMeta ModelBundle::meta() const {
  CheckpointMeta m;
  m.two_stage = is_two_stage();
  if (two) {
    m.fusion = variant;
    m.rgb_channels = two->stage1->cfg.rgb_channels;
    m.depth_in_channels = 1;
    m.w1 = two->w1->val.v[0];
    m.w2 = two->w2->val.v[0];
  } else {
    m.fusion = variant;
    m.rgb_channels = single->cfg.rgb_channels;
    m.depth_in_channels = single->cfg.depth_in_channels;
    m.rgb_only = single->cfg.rgb_only;
  }
  return m;
}

ModelBundle load_model(const std::filesystem::path& ckpt, uint64_t init_seed) {
  CheckpointMeta meta = peek_checkpoint(ckpt);
  VariantSpec spec;
  spec.name = meta.fusion;
  spec.model.encoder.rgb_channels = meta.rgb_channels;
  spec.model.init_seed = init_seed;
  if (meta.rgb_only) spec.name = "rgb_only";
  ModelBundle b = make_model(spec);
  std::vector<nn::ParamEntry> params;
  std::vector<nn::BufferEntry> buffers;
  b.collect(params, buffers);
  load_checkpoint(ckpt, params, buffers);
  return b;
}

DenseDepthMap predict(ModelBundle& m, const FusionSample& s) {
  if (m.two) return forward_two_stage(*m.two, s).final;
  return forward_single(*m.single, s.image, s.radar);
}

// ---- training --------------------------------------------------------------

namespace {

// Unbiased bounded draw via 128-bit multiply-shift, so shuffles don't depend
// on implementation-defined std::shuffle behavior.
size_t bounded(std::mt19937_64& rng, size_t n) {
  return size_t((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

void shuffle_indices(std::vector<size_t>& idx, uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[bounded(rng, i)]);
}

// Mean loss over the batch; grads accumulated into the prediction nodes and
// (two-stage) the w1/w2 parameters, already scaled by 1/batch.
double batch_loss_and_grads(ModelBundle& m,
                            const std::vector<const FusionSample*>& batch,
                            bool smoothness, nn::NodePtr& pred1,
                            nn::NodePtr& pred_final) {
  const float inv_b = 1.0f / float(batch.size());
  double total = 0;
  if (m.two) {
    TwoStageForward f = two_stage_forward_batch(*m.two, batch, /*training=*/true);
    pred1 = f.pred1;
    pred_final = f.pred2;
    f.pred1->ensure_grad();
    f.pred2->ensure_grad();
    objective::LossWeights w{m.two->w1->val.v[0], m.two->w2->val.v[0]};
    float dw1 = 0, dw2 = 0;
    const size_t npix = size_t(f.pred1->val.h()) * f.pred1->val.w();
    for (size_t i = 0; i < batch.size(); ++i) {
      const FusionSample& s = *batch[i];
      objective::LossReport rep = objective::total_loss<float>(
          f.pred1->val.data() + i * npix, f.pred2->val.data() + i * npix,
          s.lidar_gt.depth.data(), s.image.pixels.data(), s.image.height,
          s.image.width, w, smoothness, f.pred1->grad.data() + i * npix,
          f.pred2->grad.data() + i * npix, &dw1, &dw2);
      total += rep.total;
    }
    for (float& g : f.pred1->grad.v) g *= inv_b;
    for (float& g : f.pred2->grad.v) g *= inv_b;
    m.two->w1->ensure_grad();
    m.two->w2->ensure_grad();
    m.two->w1->grad.v[0] += dw1 * inv_b;
    m.two->w2->grad.v[0] += dw2 * inv_b;
    return total / double(batch.size());
  }

  std::vector<const Image*> imgs;
  std::vector<const SparseDepthMap*> depths;
  for (const FusionSample* s : batch) {
    imgs.push_back(&s->image);
    depths.push_back(&s->radar);
  }
  nn::NodePtr img = nn::make_input(image_batch(imgs));
  nn::NodePtr d;
  if (!m.single->cfg.rgb_only)
    d = nn::make_input(depth_batch(depths, m.single->limits.max_depth));
  nn::NodePtr pred = m.single->forward(img, d, /*training=*/true);
  pred->ensure_grad();
  const size_t npix = size_t(pred->val.h()) * pred->val.w();
  for (size_t i = 0; i < batch.size(); ++i) {
    const FusionSample& s = *batch[i];
    float* grad = pred->grad.data() + i * npix;
    double loss = objective::masked_l1<float>(
        pred->val.data() + i * npix, s.lidar_gt.depth.data(), npix, grad, inv_b);
    if (smoothness)
      loss += objective::kSmoothCoeff *
              objective::edge_aware_smoothness<float>(
                  pred->val.data() + i * npix, s.image.pixels.data(),
                  s.image.height, s.image.width, grad,
                  float(objective::kSmoothCoeff) * inv_b);
    total += loss;
  }
  pred1 = nullptr;
  pred_final = pred;
  return total / double(batch.size());
}

}  // namespace

EvalBreakdown evaluate_model(ModelBundle& m, const std::vector<FusionSample>& data) {
  std::vector<PixelSums> all, day, night;
  for (const FusionSample& s : data) {
    DenseDepthMap pred = predict(m, s);
    PixelSums ps = pixel_sums(pred, s.lidar_gt);
    all.push_back(ps);
    (s.lighting == Lighting::night ? night : day).push_back(ps);
  }
  EvalBreakdown out;
  out.overall = aggregate(all);
  // a split can legitimately contain no night (or no day) samples
  if (!day.empty()) out.day = aggregate(day);
  if (!night.empty()) out.night = aggregate(night);
  return out;
}

TrainResult train_model(ModelBundle& m, const std::vector<FusionSample>& train,
                        const std::vector<FusionSample>& val,
                        const TrainConfig& cfg, std::ostream& log) {
  if (train.empty()) throw std::invalid_argument("train_model: empty train set");

  std::vector<nn::ParamEntry> params;
  std::vector<nn::BufferEntry> buffers;
  m.collect(params, buffers);
  SGD sgd(params, cfg.lr, cfg.momentum);

  int start_epoch = 0;
  const bool persist = !cfg.out_dir.empty();
  if (persist) {
    std::filesystem::create_directories(cfg.out_dir);
    const auto last = cfg.out_dir / "last.ckpt";
    if (cfg.resume && std::filesystem::exists(last)) {
      CheckpointMeta meta = load_checkpoint(last, params, buffers);
      start_epoch = int(meta.step);
      log << "resume=1 from_epoch=" << start_epoch << "\n";
    }
  }

  TrainResult result;
  int64_t step = 0;
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    sgd.lr = lr_for_epoch(cfg, epoch);

    std::vector<size_t> idx(train.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    shuffle_indices(idx, cfg.shuffle_seed + uint64_t(epoch) * 0x9e3779b97f4a7c15ULL);

    double loss_sum = 0;
    int n_batches = 0;
    for (size_t off = 0; off < idx.size(); off += size_t(cfg.batch_size)) {
      std::vector<const FusionSample*> batch;
      for (size_t i = off; i < std::min(idx.size(), off + size_t(cfg.batch_size)); ++i)
        batch.push_back(&train[idx[i]]);
      sgd.zero_grad();
      nn::NodePtr pred1, pred_final;
      const double loss =
          batch_loss_and_grads(m, batch, cfg.smoothness, pred1, pred_final);
      if (!std::isfinite(loss))
        throw std::runtime_error("training diverged: non-finite loss at step " +
                                 std::to_string(step));
      if (pred1)
        nn::backward({pred1, pred_final});
      else
        nn::backward({pred_final});
      sgd.step();
      loss_sum += loss;
      ++n_batches;
      ++step;
    }

    EpochLog e;
    e.epoch = epoch + 1;
    e.lr = sgd.lr;
    e.train_loss = loss_sum / std::max(1, n_batches);
    if (!val.empty()) e.val = evaluate_model(m, val).overall;
    result.history.push_back(e);

    log << std::setprecision(6) << "epoch=" << e.epoch << " lr=" << e.lr
        << " train_loss=" << e.train_loss;
    if (!val.empty())
      log << " val_mae=" << e.val.mae << " val_rmse=" << e.val.rmse
          << " val_delta1=" << e.val.delta1;
    if (m.two)
      log << " w1=" << m.two->w1->val.v[0] << " w2=" << m.two->w2->val.v[0];
    log << "\n" << std::flush;

    const double score = val.empty() ? e.train_loss : e.val.mae;
    if (persist) {
      CheckpointMeta mm = m.meta();
      mm.step = epoch + 1;
      save_checkpoint(cfg.out_dir / "last.ckpt", mm, params, buffers);
      if (score < result.best_val_mae)
        save_checkpoint(cfg.out_dir / "best.ckpt", mm, params, buffers);
    }
    if (score < result.best_val_mae) {
      result.best_val_mae = score;
      result.best_epoch = epoch + 1;
    }
  }
  return result;
}

}  // namespace rd
