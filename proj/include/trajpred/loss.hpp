#pragma once

#include <vector>

#include "trajpred/decoder.hpp"
#include "trajpred/model.hpp"

namespace trajpred::loss {

// argmin over modes of squared L2 distance summed over all steps, lowest
// index on ties. mu: [K, T', 2], y: [T', 2].
int best_mode(const Tensor& mu, const Tensor& y);
// Per-agent winners over decoder output rows.
std::vector<int> best_modes(const Tensor& loc_rows, const Tensor& gt,
                            const model::ModeLayout& layout);

// Soft target probabilities: softmax over modes of the negative mean
// displacement error, temperature 1. Detached from the tape by construction.
Tensor soft_target(const Tensor& loc_rows, const Tensor& gt, const model::ModeLayout& layout);

// Laplace negative log-likelihood of the selected mode, per-step and
// per-coordinate terms log(2b) + |y - mu| / b, averaged per agent over time
// and then over agents. mu_sel/b_sel: [N*T', 2] rows (n, t); y: [N, T', 2].
ad::Var laplace_nll(const ad::Var& mu_sel, const ad::Var& b_sel, const Tensor& y);
// Gaussian counterpart for the GMM ablation (mean, standard deviation).
ad::Var gaussian_nll(const ad::Var& mu_sel, const ad::Var& sigma_sel, const Tensor& y);

// Cross entropy -sum pi log pi_hat averaged over agents; the target is a
// constant, so gradient reaches only the predicted probabilities. pi_hat is
// clamped at 1e-12 before the log.
ad::Var cls_loss(const Tensor& pi_target, const ad::Var& pi_hat);

struct FixedTargets {
  std::vector<int> k_star;
  Tensor pi_target;
};

struct LossBreakdown {
  std::vector<int> k_star;
  double reg = 0.0;
  double cls = 0.0;
  double total = 0.0;
  ad::Var reg_var, cls_var, total_var;
};

// Winner-takes-all training loss over one forward pass. When `fixed` is given
// the winners and target probabilities are taken as-is instead of being
// recomputed from the forward values.
LossBreakdown wta_loss(const model::Predictor::Forward& fwd, const Tensor& gt, bool gaussian,
                       double cls_weight, const FixedTargets* fixed = nullptr);

}  // namespace trajpred::loss
