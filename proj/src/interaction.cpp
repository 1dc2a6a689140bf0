#include "trajpred/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace trajpred::model {

InteractionParams make_interaction(nn::ParamStore& ps, const ModelConfig& cfg) {
  const int d = cfg.hidden;
  const int dr = cfg.rel_width;
  InteractionParams p;
  p.phi_r = nn::make_mlp2(ps, "interaction.phi_r", 2, d, dr);
  p.phi_m = nn::make_mlp2(ps, "interaction.phi_m", dr + 2 * d, d, d);
  p.phi_a = nn::make_mlp2(ps, "interaction.phi_a", dr + 2 * d, d, 1);
  p.phi_mp = nn::make_mlp2(ps, "interaction.phi_mp", d, d, d);
  return p;
}

NeighborGraph build_neighbor_graph(const Tensor& positions, double d_max) {
  if (positions.ndim() != 2 || positions.dim(1) != 2)
    throw std::invalid_argument("neighbor graph: expected [N, 2] positions, got " +
                                positions.shape_str());
  if (d_max < 0.0) throw std::invalid_argument("neighbor graph: d_max must be >= 0");
  const int n = positions.dim(0);
  NeighborGraph g;
  g.n_agents = n;
  g.neighbors.assign(static_cast<size_t>(n), {});

  struct Edge {
    double rx, ry;
    int j;
  };
  std::vector<Edge> edges;
  std::vector<double> rel;
  for (int i = 0; i < n; ++i) {
    edges.clear();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double rx = positions.at2(i, 0) - positions.at2(j, 0);
      double ry = positions.at2(i, 1) - positions.at2(j, 1);
      if (std::sqrt(rx * rx + ry * ry) <= d_max) edges.push_back({rx, ry, j});
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
      if (a.rx != b.rx) return a.rx < b.rx;
      if (a.ry != b.ry) return a.ry < b.ry;
      return a.j < b.j;
    });
    for (const Edge& e : edges) {
      g.src.push_back(e.j);
      g.dst.push_back(i);
      g.neighbors[static_cast<size_t>(i)].push_back(e.j);
      rel.push_back(e.rx);
      rel.push_back(e.ry);
    }
  }
  g.rel_pos = Tensor({g.n_edges(), 2}, std::move(rel));
  return g;
}

NeighborGraph build_batch_graph(std::span<const data::NormalizedScene* const> scenes,
                                double d_max) {
  int total = 0;
  for (const data::NormalizedScene* s : scenes) total += s->n_agents();
  NeighborGraph g;
  g.n_agents = total;
  g.neighbors.assign(static_cast<size_t>(total), {});
  std::vector<double> rel;
  int base = 0;
  for (const data::NormalizedScene* s : scenes) {
    const int n = s->n_agents();
    Tensor pos({n, 2});
    for (int a = 0; a < n; ++a) {
      pos.at2(a, 0) = s->origins.at2(a, 0);
      pos.at2(a, 1) = s->origins.at2(a, 1);
    }
    NeighborGraph local = build_neighbor_graph(pos, d_max);
    for (int e = 0; e < local.n_edges(); ++e) {
      g.src.push_back(base + local.src[static_cast<size_t>(e)]);
      g.dst.push_back(base + local.dst[static_cast<size_t>(e)]);
      rel.push_back(local.rel_pos.at2(e, 0));
      rel.push_back(local.rel_pos.at2(e, 1));
    }
    for (int a = 0; a < n; ++a)
      for (int j : local.neighbors[static_cast<size_t>(a)])
        g.neighbors[static_cast<size_t>(base + a)].push_back(base + j);
    base += n;
  }
  g.rel_pos = Tensor({g.n_edges(), 2}, std::move(rel));
  return g;
}

ad::Var relative_embedding(const InteractionParams& p, const ad::Var& rel) {
  return nn::apply_mlp2(p.phi_r, rel);
}

ad::Var motion_gate(const InteractionParams& p, const ad::Var& r, const ad::Var& h_j,
                    const ad::Var& h_i) {
  return ad::sigmoid(nn::apply_mlp2(p.phi_m, ad::concat({r, h_j, h_i}, -1)));
}

ad::Var attention_weights(const InteractionParams& p, const ad::Var& r, const ad::Var& h_j,
                          const ad::Var& h_i, const std::vector<int>& dst, int n_agents) {
  if (dst.empty()) throw std::invalid_argument("attention_weights: no neighbors");
  ad::Var u = nn::apply_mlp2(p.phi_a, ad::concat({r, h_j, h_i}, -1));  // [E, 1]
  // Per-ego max subtraction; a constant shift leaves softmax and its gradient
  // unchanged.
  const Tensor& uv = u.value();
  const int e = uv.dim(0);
  std::vector<double> seg_max(static_cast<size_t>(n_agents),
                              -std::numeric_limits<double>::infinity());
  for (int k = 0; k < e; ++k)
    seg_max[static_cast<size_t>(dst[static_cast<size_t>(k)])] =
        std::max(seg_max[static_cast<size_t>(dst[static_cast<size_t>(k)])], uv[k]);
  Tensor shift({e, 1});
  for (int k = 0; k < e; ++k) shift[k] = seg_max[static_cast<size_t>(dst[static_cast<size_t>(k)])];

  ad::Var ex = ad::exp_(ad::sub(u, ad::constant(std::move(shift))));
  ad::Var denom = ad::segment_sum(ex, dst, n_agents);      // [N, 1]
  ad::Var denom_e = ad::gather_rows(denom, dst);           // [E, 1]
  return ad::div(ex, denom_e);
}

RefinedState refine(const InteractionParams& p, const ad::Var& h, const ad::Var& c,
                    const NeighborGraph& graph, int rounds) {
  if (rounds < 1) throw std::invalid_argument("refine: rounds must be >= 1");
  const int n = graph.n_agents;
  const int d = h.shape().back();
  const int e = graph.n_edges();

  ad::Var h_hat = h;
  ad::Var c_hat = c;
  ad::Var r;
  if (e > 0) r = relative_embedding(p, ad::constant(graph.rel_pos));

  for (int round = 0; round < rounds; ++round) {
    ad::Var message;
    if (e > 0) {
      ad::Var h_j = ad::gather_rows(h_hat, graph.src);
      ad::Var h_i = ad::gather_rows(h_hat, graph.dst);
      ad::Var gate = motion_gate(p, r, h_j, h_i);
      ad::Var alpha = attention_weights(p, r, h_j, h_i, graph.dst, n);
      ad::Var gated = ad::mul(gate, h_j);
      ad::Var weighted = ad::mul(gated, alpha);  // [E, 1] broadcast over columns
      message = ad::segment_sum(weighted, graph.dst, n);
    } else {
      message = ad::constant(Tensor({n, d}));
    }
    c_hat = ad::add(nn::apply_mlp2(p.phi_mp, message), c_hat);
    h_hat = ad::add(h_hat, ad::tanh_(c_hat));
  }
  return {h_hat, c_hat, rounds};
}

}  // namespace trajpred::model
