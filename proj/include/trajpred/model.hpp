#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "trajpred/config.hpp"
#include "trajpred/data.hpp"
#include "trajpred/decoder.hpp"
#include "trajpred/encoder.hpp"
#include "trajpred/interaction.hpp"

namespace trajpred::model {

// Value-level decoder output for one scene, agent-major.
struct LaplaceMixture {
  Tensor loc;    // [N, K, T', 2] agent-centric locations
  Tensor scale;  // [N, K, T', 2], strictly positive
  Tensor probs;  // [N, K], rows on the simplex

  int n() const { return loc.dim(0); }
  int k() const { return loc.dim(1); }
  int t_pred() const { return loc.dim(2); }
};

// Keep the k_keep most probable modes per agent, renormalizing probabilities.
LaplaceMixture truncate_modes(const LaplaceMixture& mix, int k_keep);
// World-frame locations: adds each agent's origin. [N, K, T', 2]
Tensor mixture_world_locations(const LaplaceMixture& mix, const Tensor& origins);

class Predictor {
 public:
  Predictor(const ModelConfig& cfg, std::uint64_t seed);

  struct Forward {
    ad::Var loc;    // [K*N*T', 2] rows per layout
    ad::Var scale;  // [K*N*T', 2]
    ad::Var probs;  // [N, K]
    ModeLayout layout;
  };

  Forward forward(std::span<const data::NormalizedScene* const> batch, bool training = false);
  Forward forward(const data::NormalizedScene& scene, bool training = false);

  LaplaceMixture predict(const data::NormalizedScene& scene);

  nn::ParamStore& params() { return *store_; }
  const nn::ParamStore& params() const { return *store_; }
  std::int64_t param_count() const { return store_->count(); }
  const ModelConfig& config() const { return cfg_; }

  // Stacked encoder input for a batch, per input_mode. Exposed for the
  // latency benchmark and tests.
  Tensor build_input(std::span<const data::NormalizedScene* const> batch) const;

 private:
  ModelConfig cfg_;
  std::unique_ptr<nn::ParamStore> store_;
  EncoderParams enc_;
  std::optional<InteractionParams> inter_;
  DecoderParams dec_;
  std::mt19937_64 dropout_rng_;
};

// Ground truth for a batch, stacked along the agent axis: [N_total, T', 2].
Tensor stack_ground_truth(std::span<const data::NormalizedScene* const> batch);
Tensor stack_origins(std::span<const data::NormalizedScene* const> batch);

}  // namespace trajpred::model
