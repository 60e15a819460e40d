#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pe/augment.hpp"
#include "pe/common.hpp"
#include "pe/decision.hpp"
#include "pe/hopnet.hpp"
#include "pe/ops.hpp"
#include "pe/optim.hpp"

namespace pe {

struct SlabSample {
  std::vector<double> slab;  // (9, H, W)
  int label = 0;
};

struct SlabDataset {
  int h = 0, w = 0;
  std::vector<SlabSample> samples;
};

struct LandmarkSample {
  std::vector<double> slab;  // (9, H, W)
  LandmarkTargets targets;
};

struct LandmarkDataset {
  int h = 0, w = 0;
  std::vector<LandmarkSample> samples;
};

struct OptimizerConfig {
  std::string kind = "sgd";  // sgd | lars
  double lr = 0.1;
  int warmup_steps = 50;
  int total_steps = 500;
  double trust_coeff = 0.001;
  double weight_decay = 0.0;
  double momentum = 0.9;
};

struct TrainConfig {
  OptimizerConfig optimizer;
  int batch_size = 8;
  uint64_t seed = 0;
  bool augment_enabled = false;
  AugmentSpec augment;
};

struct TrainResult {
  std::vector<double> loss_trace;
};

namespace train_detail {

inline Tensor make_batch(const std::vector<const std::vector<double>*>& slabs, int h, int w) {
  const int n = static_cast<int>(slabs.size());
  Tensor batch({n, ArchConfig::kSlabChannels, h, w});
  const size_t sz = static_cast<size_t>(ArchConfig::kSlabChannels) * h * w;
  for (int i = 0; i < n; ++i)
    std::copy(slabs[i]->begin(), slabs[i]->end(), batch.data().begin() + i * sz);
  return batch;
}

inline void set_lr(Lars* lars, double lr) {
  if (lars) lars->set_lr(lr);
}

}  // namespace train_detail

// Trains hop `hop_index`: only Theta_hop and Phi_{hop-1} receive updates;
// earlier hops run in eval mode so their weights and running stats stay
// bit-identical. Hops 1..hop_index-1 must already be trained.
inline TrainResult train_hop(HopPipeline& p, const SlabDataset& ds, const TrainConfig& cfg,
                             int hop_index) {
  if (hop_index < 1 || hop_index > static_cast<int>(p.encoders.size()))
    throw ConfigInvalid("train_hop: hop index out of range");
  if (ds.samples.empty()) throw ConfigInvalid("train_hop: empty dataset");

  ParamList all = p.params();
  for (Parameter* prm : all) prm->frozen = true;
  ParamList trainable = p.encoder_params(hop_index);
  if (hop_index >= 2) {
    ParamList agg = p.aggregator_params(hop_index - 1);
    trainable.insert(trainable.end(), agg.begin(), agg.end());
  }
  for (Parameter* prm : trainable) prm->frozen = false;

  std::vector<bool> hop_train_mode(p.encoders.size(), false);
  hop_train_mode[hop_index - 1] = true;

  const OptimizerConfig& oc = cfg.optimizer;
  std::unique_ptr<Lars> lars;
  if (oc.kind == "lars")
    lars = std::make_unique<Lars>(oc.lr, oc.trust_coeff, oc.weight_decay, oc.momentum);
  else if (oc.kind != "sgd")
    throw ConfigInvalid("unknown optimizer: " + oc.kind);

  CounterRng rng(cfg.seed);
  TrainResult result;
  const int n = static_cast<int>(ds.samples.size());
  const int batch = std::min(cfg.batch_size, n);
  std::vector<std::vector<double>> aug_buffers(batch);

  for (int step = 0; step < oc.total_steps; ++step) {
    std::vector<const std::vector<double>*> slabs;
    std::vector<int> labels;
    for (int i = 0; i < batch; ++i) {
      const int idx = batch == n ? i : static_cast<int>(rng.uniform_int(0, n - 1));
      const SlabSample& sample = ds.samples[idx];
      if (cfg.augment_enabled) {
        aug_buffers[i] = sample.slab;
        const uint64_t sample_seed =
            cfg.augment.seed ^ (static_cast<uint64_t>(step) * batch + i);
        compose_augment(cfg.augment, aug_buffers[i], ArchConfig::kSlabChannels, ds.h,
                        ds.w, sample_seed);
        slabs.push_back(&aug_buffers[i]);
      } else {
        slabs.push_back(&sample.slab);
      }
      labels.push_back(sample.label);
    }
    Tensor x = train_detail::make_batch(slabs, ds.h, ds.w);
    auto out = p.forward(x, true, hop_index, &hop_train_mode);
    Tensor loss = softmax_cross_entropy(out.logits.back(), labels);
    backward(loss);
    const double lr = lr_schedule(step, oc.lr, oc.warmup_steps, oc.total_steps);
    if (lars) {
      lars->set_lr(lr);
      lars->step(trainable);
    } else {
      sgd_step(trainable, lr);
    }
    result.loss_trace.push_back(loss.item());
  }
  return result;
}

// Landmark-regression pretraining of an encoder. Loss is MSE restricted
// to present landmarks; absent landmarks contribute neither loss nor
// gradient.
inline TrainResult pretrain_landmarks(TapEncoder& enc, LandmarkHead& head,
                                      const LandmarkDataset& ds, const TrainConfig& cfg) {
  if (ds.samples.empty()) throw ConfigInvalid("pretrain_landmarks: empty dataset");
  bool any_present = false;
  for (const auto& s : ds.samples)
    for (uint8_t pr : s.targets.present) any_present = any_present || pr;
  if (!any_present) throw NoPresentLandmarks("no landmark present in any sample");

  ParamList trainable;
  enc.collect(trainable);
  head.collect(trainable);
  for (Parameter* prm : trainable) prm->frozen = false;

  const OptimizerConfig& oc = cfg.optimizer;
  std::unique_ptr<Lars> lars;
  if (oc.kind == "lars")
    lars = std::make_unique<Lars>(oc.lr, oc.trust_coeff, oc.weight_decay, oc.momentum);
  else if (oc.kind != "sgd")
    throw ConfigInvalid("unknown optimizer: " + oc.kind);

  CounterRng rng(cfg.seed);
  TrainResult result;
  const int n = static_cast<int>(ds.samples.size());
  const int batch = std::min(cfg.batch_size, n);
  const int k3 = static_cast<int>(ds.samples[0].targets.coords.size());

  for (int step = 0; step < oc.total_steps; ++step) {
    std::vector<const std::vector<double>*> slabs;
    Tensor target({batch, k3});
    std::vector<double> mask(static_cast<size_t>(batch) * k3, 0.0);
    for (int i = 0; i < batch; ++i) {
      const int idx = batch == n ? i : static_cast<int>(rng.uniform_int(0, n - 1));
      const LandmarkSample& sample = ds.samples[idx];
      slabs.push_back(&sample.slab);
      for (int j = 0; j < k3; ++j)
        target.data()[static_cast<size_t>(i) * k3 + j] = sample.targets.coords[j];
      for (size_t lm = 0; lm < sample.targets.present.size(); ++lm)
        if (sample.targets.present[lm])
          for (int c = 0; c < 3; ++c)
            mask[static_cast<size_t>(i) * k3 + 3 * lm + c] = 1.0;
    }
    Tensor x = train_detail::make_batch(slabs, ds.h, ds.w);
    auto enc_out = enc.forward(x, true);
    Tensor pred = head.forward(enc_out.taps.back(), true);
    Tensor loss = masked_mse_loss(pred, target, mask);
    backward(loss);
    const double lr = lr_schedule(step, oc.lr, oc.warmup_steps, oc.total_steps);
    if (lars) {
      lars->set_lr(lr);
      lars->step(trainable);
    } else {
      sgd_step(trainable, lr);
    }
    result.loss_trace.push_back(loss.item());
  }
  return result;
}

// Eval-mode per-slice probabilities of the last hop for a whole study.
inline ProbabilitySeries infer_study(HopPipeline& p, const std::string& study_id,
                                     const std::vector<std::vector<double>>& slabs,
                                     int h, int w) {
  ProbabilitySeries series;
  series.study_id = study_id;
  for (const auto& slab : slabs) {
    Tensor x = Tensor::from_data({ArchConfig::kSlabChannels, h, w}, slab);
    auto probs = p.hop_forward(x);
    series.rho.push_back(probs.back()[0]);
  }
  return series;
}

}  // namespace pe
