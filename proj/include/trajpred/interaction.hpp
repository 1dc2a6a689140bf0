#pragma once

#include <vector>

#include "trajpred/config.hpp"
#include "trajpred/data.hpp"
#include "trajpred/nn.hpp"

namespace trajpred::model {

struct InteractionParams {
  nn::Mlp2 phi_r;   // relative position -> rel_width
  nn::Mlp2 phi_m;   // [r, h_j, h_i] -> gate preactivation
  nn::Mlp2 phi_a;   // [r, h_j, h_i] -> scalar attention logit
  nn::Mlp2 phi_mp;  // aggregated message -> cell update
};

InteractionParams make_interaction(nn::ParamStore& ps, const ModelConfig& cfg);

// Directed edges j -> i for every pair with Euclidean distance <= d_max
// (inclusive), i != j. Edges are grouped by destination; within a destination
// neighbors are ordered by relative position (x, then y) so aggregation order
// does not depend on agent numbering.
struct NeighborGraph {
  int n_agents = 0;
  std::vector<int> src;                     // neighbor j per edge
  std::vector<int> dst;                     // ego i per edge
  Tensor rel_pos;                           // [E, 2] = pos[i] - pos[j]
  std::vector<std::vector<int>> neighbors;  // per-agent neighbor lists

  int n_edges() const { return static_cast<int>(src.size()); }
};

// positions: [N, 2] world frame at the last observed step.
NeighborGraph build_neighbor_graph(const Tensor& positions, double d_max);
// Batch of scenes concatenated along the agent axis; no cross-scene edges.
NeighborGraph build_batch_graph(std::span<const data::NormalizedScene* const> scenes,
                                double d_max);

ad::Var relative_embedding(const InteractionParams& p, const ad::Var& rel);
// Sigmoid-gated selection over neighbor hidden state, elementwise in (0, 1).
ad::Var motion_gate(const InteractionParams& p, const ad::Var& r, const ad::Var& h_j,
                    const ad::Var& h_i);
// Scalar logits per edge, softmax-normalized across each ego's neighbors.
ad::Var attention_weights(const InteractionParams& p, const ad::Var& r, const ad::Var& h_j,
                          const ad::Var& h_i, const std::vector<int>& dst, int n_agents);

struct RefinedState {
  ad::Var h_hat;  // [N, D]
  ad::Var c_hat;  // [N, D]
  int rounds_completed = 0;
};

// Message-passing refinement at the last observed step. Each round updates
// every cell state from gated, attention-weighted neighbor hidden states and
// then the hidden state via a tanh skip; agents without neighbors receive a
// zero message and still go through both updates.
RefinedState refine(const InteractionParams& p, const ad::Var& h, const ad::Var& c,
                    const NeighborGraph& graph, int rounds);

}  // namespace trajpred::model
