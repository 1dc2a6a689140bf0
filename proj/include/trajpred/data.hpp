#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "trajpred/tensor.hpp"

namespace trajpred::data {

struct Observation {
  std::int64_t frame = 0;
  std::int64_t agent = 0;
  double x = 0.0;
  double y = 0.0;
};

// Raw trajectory records, sorted by (agent, frame). (frame, agent) pairs are
// unique and frames are strictly increasing per agent.
struct ObservationTable {
  std::vector<Observation> records;
  double sampling_rate_hz = 2.5;
};

struct ParseOptions {
  bool swap_xy = false;
  double sampling_rate_hz = 2.5;
};

// Whitespace-separated lines of `frame agent_id x y`. Blank lines and lines
// starting with '#' are skipped. Malformed lines and duplicate (frame, agent)
// pairs raise with the offending line number.
ObservationTable parse_ethucy(std::istream& in, const ParseOptions& opts = {});
ObservationTable parse_ethucy_file(const std::string& path, const ParseOptions& opts = {});

// One prediction instance: every listed agent is present at all t_obs + t_pred
// consecutive sampled steps.
struct SceneWindow {
  int scene_id = 0;
  std::vector<std::int64_t> agent_ids;
  Tensor positions;  // [N, t_obs + t_pred, 2] world frame
  int t_obs = 0;
  int t_pred = 0;

  int n_agents() const { return static_cast<int>(agent_ids.size()); }
};

std::vector<SceneWindow> build_windows(const ObservationTable& table, int t_obs, int t_pred,
                                       int frame_stride = 1);
// Windows across several tables, with globally unique scene ids.
std::vector<SceneWindow> windows_from_tables(std::span<const ObservationTable> tables, int t_obs,
                                             int t_pred, int frame_stride = 1);

// Agent-centric view of a window. The origin of agent i is its position at the
// last observed step, so its centered position there is exactly (0, 0).
struct NormalizedScene {
  int scene_id = 0;
  std::vector<std::int64_t> agent_ids;
  Tensor offsets;       // [N, t_obs - 1, 2] per-step displacements
  Tensor origins;       // [N, 2] world position at the last observed step
  Tensor world_obs;     // [N, t_obs, 2] world frame, kept for interaction
  Tensor centered_obs;  // [N, t_obs, 2] world_obs - origin
  Tensor ground_truth;  // [N, t_pred, 2] future positions, agent-centric
  Tensor future_world;  // [N, t_pred, 2] future positions, world frame
  int t_obs = 0;
  int t_pred = 0;

  int n_agents() const { return static_cast<int>(agent_ids.size()); }
};

NormalizedScene normalize(const SceneWindow& window);
std::vector<NormalizedScene> normalize_all(std::span<const SceneWindow> windows);

struct LooSplit {
  std::vector<ObservationTable> train;
  ObservationTable test;
};
LooSplit leave_one_out_split(const std::vector<std::pair<std::string, ObservationTable>>& subsets,
                             const std::string& held_out);

// Synthetic junction scenes: each agent approaches the junction at constant
// speed along +x for t_obs steps, then follows one of n_exits headings for
// t_pred steps. Exit headings are spread evenly over [-90deg, +90deg] relative
// to the approach. Coordinates are quantized to a 2^-20 m grid.
struct JunctionParams {
  int n_scenes = 96;
  int n_exits = 3;
  std::vector<double> branch_probs;  // empty = uniform
  double noise_std = 0.05;
  std::uint64_t seed = 7;
  int t_obs = 8;
  int t_pred = 12;
  double speed = 0.5;  // meters per step
  int agents_per_scene = 1;
  double agent_spacing = 2.0;
  double junction_x = 100.0;
  double junction_y = 95.0;
};

ObservationTable synth_junction(const JunctionParams& params);
// Exit headings in radians, relative to the +x approach direction.
std::vector<double> junction_exit_headings(int n_exits);

// Debug dump, one line per (scene, agent, step): `scene_id agent_id t x y`.
void write_scene_dump(std::ostream& out, std::span<const SceneWindow> windows);

}  // namespace trajpred::data
