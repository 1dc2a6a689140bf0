#include "trajpred/model.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace trajpred::model {

namespace {

int total_agents(std::span<const data::NormalizedScene* const> batch) {
  int n = 0;
  for (const data::NormalizedScene* s : batch) n += s->n_agents();
  return n;
}

}  // namespace

LaplaceMixture truncate_modes(const LaplaceMixture& mix, int k_keep) {
  const int n = mix.n(), k = mix.k(), tp = mix.t_pred();
  if (k_keep < 1 || k_keep > k)
    throw std::invalid_argument("truncate_modes: requested " + std::to_string(k_keep) +
                                " of " + std::to_string(k) + " modes");
  if (k_keep == k) return mix;
  LaplaceMixture out;
  out.loc = Tensor({n, k_keep, tp, 2});
  out.scale = Tensor({n, k_keep, tp, 2});
  out.probs = Tensor({n, k_keep});
  for (int a = 0; a < n; ++a) {
    std::vector<int> order(static_cast<size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
      return mix.probs.at2(a, i) > mix.probs.at2(a, j);
    });
    double mass = 0.0;
    for (int kk = 0; kk < k_keep; ++kk) mass += mix.probs.at2(a, order[static_cast<size_t>(kk)]);
    for (int kk = 0; kk < k_keep; ++kk) {
      int src = order[static_cast<size_t>(kk)];
      out.probs.at2(a, kk) = mass > 0 ? mix.probs.at2(a, src) / mass : 1.0 / k_keep;
      for (int t = 0; t < tp; ++t)
        for (int d = 0; d < 2; ++d) {
          std::int64_t si = ((static_cast<std::int64_t>(a) * k + src) * tp + t) * 2 + d;
          std::int64_t di = ((static_cast<std::int64_t>(a) * k_keep + kk) * tp + t) * 2 + d;
          out.loc[di] = mix.loc[si];
          out.scale[di] = mix.scale[si];
        }
    }
  }
  return out;
}

Tensor mixture_world_locations(const LaplaceMixture& mix, const Tensor& origins) {
  const int n = mix.n(), k = mix.k(), tp = mix.t_pred();
  if (origins.ndim() != 2 || origins.dim(0) != n || origins.dim(1) != 2)
    throw std::invalid_argument("mixture_world_locations: expected [N, 2] origins, got " +
                                origins.shape_str());
  Tensor world(mix.loc.shape(), mix.loc.vec());
  for (int a = 0; a < n; ++a)
    for (int kk = 0; kk < k; ++kk)
      for (int t = 0; t < tp; ++t)
        for (int d = 0; d < 2; ++d)
          world[((static_cast<std::int64_t>(a) * k + kk) * tp + t) * 2 + d] += origins.at2(a, d);
  return world;
}

Predictor::Predictor(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      store_(std::make_unique<nn::ParamStore>(seed)),
      dropout_rng_(seed ^ 0x9e3779b97f4a7c15ULL) {
  if (cfg_.hidden % cfg_.heads != 0)
    throw std::invalid_argument("model: hidden width must be divisible by head count");
  if (cfg_.modes < 1) throw std::invalid_argument("model: need at least one mode");
  enc_ = make_encoder(*store_, cfg_);
  if (!cfg_.no_gcn) inter_ = make_interaction(*store_, cfg_);
  dec_ = make_decoder(*store_, cfg_);
}

Tensor Predictor::build_input(std::span<const data::NormalizedScene* const> batch) const {
  const int n = total_agents(batch);
  const int s = encoder_seq_len(cfg_);
  const int c = encoder_input_channels(cfg_);
  Tensor x({n, s, c});
  int base = 0;
  for (const data::NormalizedScene* scene : batch) {
    if (scene->t_obs != cfg_.t_obs || scene->t_pred != cfg_.t_pred)
      throw std::invalid_argument("model: scene horizon does not match configuration");
    for (int a = 0; a < scene->n_agents(); ++a) {
      for (int t = 0; t < s; ++t) {
        switch (cfg_.input_mode) {
          case InputMode::kOffset:
            x.at3(base + a, t, 0) = scene->offsets.at3(a, t, 0);
            x.at3(base + a, t, 1) = scene->offsets.at3(a, t, 1);
            break;
          case InputMode::kPosition:
            x.at3(base + a, t, 0) = scene->centered_obs.at3(a, t, 0);
            x.at3(base + a, t, 1) = scene->centered_obs.at3(a, t, 1);
            break;
          case InputMode::kBoth:
            // offset into step t+1 paired with the centered position there
            x.at3(base + a, t, 0) = scene->offsets.at3(a, t, 0);
            x.at3(base + a, t, 1) = scene->offsets.at3(a, t, 1);
            x.at3(base + a, t, 2) = scene->centered_obs.at3(a, t + 1, 0);
            x.at3(base + a, t, 3) = scene->centered_obs.at3(a, t + 1, 1);
            break;
        }
      }
    }
    base += scene->n_agents();
  }
  return x;
}

Predictor::Forward Predictor::forward(std::span<const data::NormalizedScene* const> batch,
                                      bool training) {
  if (batch.empty()) throw std::invalid_argument("model: empty batch");
  const int n = total_agents(batch);

  ad::Var input = ad::constant(build_input(batch));
  std::mt19937_64* drop = (training && cfg_.dropout > 0.0) ? &dropout_rng_ : nullptr;
  EncoderState enc = encode(enc_, cfg_, input, drop);

  ad::Var h_hat = enc.h;
  ad::Var c_hat = enc.c;
  if (inter_) {
    NeighborGraph graph = build_batch_graph(batch, cfg_.d_max);
    RefinedState refined = refine(*inter_, enc.h, enc.c, graph, cfg_.msg_rounds);
    h_hat = refined.h_hat;
    c_hat = refined.c_hat;
  }

  ad::Var z = mode_project(dec_, enc.h, h_hat, c_hat, cfg_.modes);
  Forward out;
  out.layout = ModeLayout{cfg_.modes, n, cfg_.t_pred};
  out.probs = mode_probs(dec_, z, cfg_.modes, n);
  ad::Var h_seq = unroll(dec_, z, cfg_.t_pred, cfg_.mlp_decoder);
  MixtureHeads mh = heads(dec_, h_seq);
  out.loc = mh.loc;
  out.scale = mh.scale;
  return out;
}

Predictor::Forward Predictor::forward(const data::NormalizedScene& scene, bool training) {
  const data::NormalizedScene* p = &scene;
  return forward(std::span<const data::NormalizedScene* const>(&p, 1), training);
}

LaplaceMixture Predictor::predict(const data::NormalizedScene& scene) {
  Forward f = forward(scene, false);
  const ModeLayout& L = f.layout;
  LaplaceMixture mix;
  mix.loc = Tensor({L.n, L.k, L.t_pred, 2});
  mix.scale = Tensor({L.n, L.k, L.t_pred, 2});
  mix.probs = Tensor({L.n, L.k});
  const Tensor& loc = f.loc.value();
  const Tensor& scl = f.scale.value();
  const Tensor& pi = f.probs.value();
  for (int a = 0; a < L.n; ++a)
    for (int k = 0; k < L.k; ++k) {
      mix.probs.at2(a, k) = pi.at2(a, k);
      for (int t = 0; t < L.t_pred; ++t) {
        std::int64_t r = L.row(k, a, t);
        for (int d = 0; d < 2; ++d) {
          std::int64_t di = ((static_cast<std::int64_t>(a) * L.k + k) * L.t_pred + t) * 2 + d;
          mix.loc[di] = loc.at2(static_cast<int>(r), d);
          mix.scale[di] = scl.at2(static_cast<int>(r), d);
        }
      }
    }
  return mix;
}

Tensor stack_ground_truth(std::span<const data::NormalizedScene* const> batch) {
  const int n = total_agents(batch);
  if (batch.empty()) throw std::invalid_argument("stack_ground_truth: empty batch");
  const int tp = batch.front()->t_pred;
  Tensor gt({n, tp, 2});
  int base = 0;
  for (const data::NormalizedScene* s : batch) {
    for (int a = 0; a < s->n_agents(); ++a)
      for (int t = 0; t < tp; ++t)
        for (int d = 0; d < 2; ++d) gt.at3(base + a, t, d) = s->ground_truth.at3(a, t, d);
    base += s->n_agents();
  }
  return gt;
}

Tensor stack_origins(std::span<const data::NormalizedScene* const> batch) {
  const int n = total_agents(batch);
  Tensor o({n, 2});
  int base = 0;
  for (const data::NormalizedScene* s : batch) {
    for (int a = 0; a < s->n_agents(); ++a)
      for (int d = 0; d < 2; ++d) o.at2(base + a, d) = s->origins.at2(a, d);
    base += s->n_agents();
  }
  return o;
}

}  // namespace trajpred::model
