#include "trajpred/decoder.hpp"

#include <stdexcept>
#include <vector>

namespace trajpred::model {

DecoderParams make_decoder(nn::ParamStore& ps, const ModelConfig& cfg) {
  const int d = cfg.hidden;
  DecoderParams p;
  p.project = nn::make_mlp2(ps, "decoder.project", 3 * d, d, cfg.modes * d);
  p.prob_head = nn::make_mlp2(ps, "decoder.prob", d, d, 1);
  if (cfg.mlp_decoder)
    p.mlp_seq = nn::make_mlp2(ps, "decoder.mlp_seq", d, 2 * d, cfg.t_pred * d);
  else
    p.lstm = nn::make_lstm(ps, "decoder.lstm", d, d);
  p.loc_head = nn::make_mlp2(ps, "decoder.loc", d, d, 2);
  p.scale_head = nn::make_mlp2(ps, "decoder.scale", d, d, 2);
  return p;
}

ad::Var mode_project(const DecoderParams& p, const ad::Var& h, const ad::Var& h_hat,
                     const ad::Var& c_hat, int k) {
  if (k < 1) throw std::invalid_argument("mode_project: need at least one mode");
  const int n = h.shape()[0];
  const int d = h.shape()[1];
  ad::Var fused = ad::concat({h, h_hat, c_hat}, -1);      // [N, 3D]
  ad::Var z = nn::apply_mlp2(p.project, fused);           // [N, K*D]
  ad::Var z_nk = ad::reshape(z, {n * k, d});              // rows n*K + k
  std::vector<int> perm(static_cast<size_t>(n) * k);
  for (int kk = 0; kk < k; ++kk)
    for (int nn = 0; nn < n; ++nn) perm[static_cast<size_t>(kk) * n + nn] = nn * k + kk;
  return ad::gather_rows(z_nk, perm);                     // rows k*N + n
}

ad::Var mode_probs(const DecoderParams& p, const ad::Var& z, int k, int n) {
  ad::Var logits = nn::apply_mlp2(p.prob_head, z);        // [K*N, 1]
  ad::Var kn = ad::reshape(logits, {k, n});
  return ad::softmax(ad::transpose(kn), -1);              // [N, K]
}

ad::Var unroll(const DecoderParams& p, const ad::Var& z, int t_pred, bool mlp_decoder) {
  if (t_pred < 1) throw std::invalid_argument("unroll: t_pred must be >= 1");
  const int rows = z.shape()[0];
  const int d = z.shape()[1];
  if (mlp_decoder) {
    ad::Var seq = nn::apply_mlp2(p.mlp_seq, z);           // [K*N, T'*D]
    ad::Var flat = ad::reshape(seq, {rows * t_pred, d});  // rows kn*T' + t
    std::vector<int> perm(static_cast<size_t>(rows) * t_pred);
    for (int t = 0; t < t_pred; ++t)
      for (int r = 0; r < rows; ++r)
        perm[static_cast<size_t>(t) * rows + r] = r * t_pred + t;
    return ad::gather_rows(flat, perm);                   // time-major
  }
  ad::Var h = ad::constant(Tensor({rows, d}));
  ad::Var c = ad::constant(Tensor({rows, d}));
  std::vector<ad::Var> steps;
  steps.reserve(static_cast<size_t>(t_pred));
  for (int t = 0; t < t_pred; ++t) {
    auto [h2, c2] = nn::lstm_cell(p.lstm, z, h, c);
    h = h2;
    c = c2;
    steps.push_back(h);
  }
  return ad::concat(steps, 0);                            // time-major
}

MixtureHeads heads(const DecoderParams& p, const ad::Var& h_seq) {
  MixtureHeads out;
  out.loc = nn::apply_mlp2(p.loc_head, h_seq);
  out.scale = ad::add_scalar(ad::softplus(nn::apply_mlp2(p.scale_head, h_seq)), 1e-6);
  return out;
}

Tensor to_world(const Tensor& loc, const Tensor& origins, const ModeLayout& layout) {
  if (loc.ndim() != 2 || loc.dim(1) != 2 || loc.dim(0) != layout.rows())
    throw std::invalid_argument("to_world: location rows do not match layout");
  if (origins.ndim() != 2 || origins.dim(0) != layout.n || origins.dim(1) != 2)
    throw std::invalid_argument("to_world: expected [N, 2] origins, got " + origins.shape_str());
  Tensor world(loc.shape(), loc.vec());
  for (int t = 0; t < layout.t_pred; ++t)
    for (int k = 0; k < layout.k; ++k)
      for (int n = 0; n < layout.n; ++n) {
        std::int64_t r = layout.row(k, n, t);
        world.at2(static_cast<int>(r), 0) += origins.at2(n, 0);
        world.at2(static_cast<int>(r), 1) += origins.at2(n, 1);
      }
  return world;
}

}  // namespace trajpred::model
