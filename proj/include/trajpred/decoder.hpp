#pragma once

#include "trajpred/config.hpp"
#include "trajpred/nn.hpp"

namespace trajpred::model {

// Row layout shared by decoder outputs and the loss: sequence outputs are
// stacked time-major, row(t, k, n) = t*K*N + k*N + n.
struct ModeLayout {
  int k = 0;
  int n = 0;
  int t_pred = 0;

  std::int64_t rows() const {
    return static_cast<std::int64_t>(k) * n * t_pred;
  }
  std::int64_t row(int kk, int nn, int tt) const {
    return (static_cast<std::int64_t>(tt) * k + kk) * n + nn;
  }
};

struct DecoderParams {
  nn::Mlp2 project;     // [h, h_hat, c_hat] -> K*D
  nn::Mlp2 prob_head;   // per-mode embedding -> logit
  nn::LstmParams lstm;  // sequence unroll (default)
  nn::Mlp2 mlp_seq;     // sequence unroll (mlp_decoder ablation)
  nn::Mlp2 loc_head;    // D -> 2
  nn::Mlp2 scale_head;  // D -> 2, softplus + 1e-6 floor
};

DecoderParams make_decoder(nn::ParamStore& ps, const ModelConfig& cfg);

// Concatenate (h, h_hat, c_hat) [N, D] each and project to one embedding per
// mode; rows of the result are mode-major: row k*N + n.
ad::Var mode_project(const DecoderParams& p, const ad::Var& h, const ad::Var& h_hat,
                     const ad::Var& c_hat, int k);
// [N, K] rows on the probability simplex.
ad::Var mode_probs(const DecoderParams& p, const ad::Var& z, int k, int n);
// Unrolls over t_pred steps feeding z at every step (LSTM) or expanding z with
// a single MLP over the time axis (ablation). Output rows are time-major per
// ModeLayout{k, n, t_pred}.
ad::Var unroll(const DecoderParams& p, const ad::Var& z, int t_pred, bool mlp_decoder);

struct MixtureHeads {
  ad::Var loc;    // [K*N*T', 2]
  ad::Var scale;  // [K*N*T', 2], strictly positive
};
MixtureHeads heads(const DecoderParams& p, const ad::Var& h_seq);

// loc rows per ModeLayout; origins [N, 2]. Adds each agent's origin to its
// locations; scales are untouched.
Tensor to_world(const Tensor& loc, const Tensor& origins, const ModeLayout& layout);

}  // namespace trajpred::model
