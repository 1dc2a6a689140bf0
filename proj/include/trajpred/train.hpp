#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "trajpred/metrics.hpp"
#include "trajpred/model.hpp"

namespace trajpred::train {

// lr_final + 0.5 * (lr_init - lr_final) * (1 + cos(pi * step / total)).
double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr_init, double lr_final);

// Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8). A step with
// any non-finite gradient is skipped and counted instead of applied.
class Adam {
 public:
  explicit Adam(nn::ParamStore& ps, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(double lr);
  std::int64_t steps_taken() const { return t_; }
  int skipped() const { return skipped_; }

  std::vector<Tensor>& m() { return m_; }
  std::vector<Tensor>& v() { return v_; }
  const std::vector<Tensor>& m() const { return m_; }
  const std::vector<Tensor>& v() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  nn::ParamStore* ps_;
  std::vector<Tensor> m_, v_;
  std::int64_t t_ = 0;
  int skipped_ = 0;
  double b1_, b2_, eps_;
};

// Scales all gradients so their global L2 norm is at most max_norm; returns
// the pre-clip norm. max_norm <= 0 disables clipping.
double clip_grad_norm(nn::ParamStore& ps, double max_norm);

struct EpochStats {
  int epoch = 0;
  double total = 0.0;
  double reg = 0.0;
  double cls = 0.0;
  double val_minade = 0.0;
  double val_minfde = 0.0;
  double lr = 0.0;
};

struct FitResult {
  std::vector<EpochStats> log;
  std::int64_t steps = 0;
  int skipped_steps = 0;
};

// Epoch loop: per-seed shuffle, whole-scene batches, WTA loss, gradient
// clipping, Adam with the cosine schedule. Validation metrics are computed at
// the trained K when val_scenes is nonempty, NaN otherwise. Aborts on
// non-finite loss.
FitResult fit(model::Predictor& predictor, const std::vector<data::NormalizedScene>& train_scenes,
              const std::vector<data::NormalizedScene>& val_scenes, const TrainConfig& tc);

// Line-oriented log: `epoch total reg cls val_minade val_minfde lr`.
void write_epoch_log(std::ostream& out, const std::vector<EpochStats>& log);

// Binary checkpoint: magic, version, architecture text + hash, step counter,
// named tensors, optional optimizer moments. Round trips are bit-exact.
void save_checkpoint(const std::string& path, const model::Predictor& predictor, const Adam* opt,
                     std::int64_t step);
// Restores into a predictor built from the same architecture; throws on
// magic/version mismatch, config hash mismatch, or truncation.
std::int64_t load_checkpoint(const std::string& path, model::Predictor& predictor, Adam* opt);
// Reads just the architecture block, for rebuilding the predictor first.
ModelConfig checkpoint_model_config(const std::string& path);

}  // namespace trajpred::train
