#include "trajpred/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace trajpred::data {

namespace {

bool parse_double(const std::string& tok, double* out) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end != begin + tok.size() || tok.empty()) return false;
  *out = v;
  return true;
}

bool parse_integral(const std::string& tok, std::int64_t* out) {
  double v;
  if (!parse_double(tok, &v)) return false;
  double r = std::nearbyint(v);
  if (std::abs(v - r) > 1e-9) return false;
  *out = static_cast<std::int64_t>(r);
  return true;
}

void finalize(ObservationTable& table) {
  std::sort(table.records.begin(), table.records.end(), [](const Observation& a, const Observation& b) {
    if (a.agent != b.agent) return a.agent < b.agent;
    return a.frame < b.frame;
  });
  for (size_t i = 1; i < table.records.size(); ++i) {
    const Observation& prev = table.records[i - 1];
    const Observation& cur = table.records[i];
    if (prev.agent == cur.agent && prev.frame == cur.frame)
      throw std::invalid_argument("trajectory table: duplicate record for agent " +
                                  std::to_string(cur.agent) + " at frame " +
                                  std::to_string(cur.frame));
  }
}

double snap_q20(double v) { return std::nearbyint(v * 1048576.0) / 1048576.0; }

}  // namespace

ObservationTable parse_ethucy(std::istream& in, const ParseOptions& opts) {
  ObservationTable table;
  table.sampling_rate_hz = opts.sampling_rate_hz;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<std::string> toks;
    std::string tok;
    while (ls >> tok) toks.push_back(tok);
    if (toks.empty() || toks[0][0] == '#') continue;
    if (toks.size() != 4)
      throw std::invalid_argument("parse error at line " + std::to_string(line_no) + ": expected 4 columns, got " +
                                  std::to_string(toks.size()));
    Observation rec;
    if (!parse_integral(toks[0], &rec.frame) || !parse_integral(toks[1], &rec.agent) ||
        !parse_double(toks[2], &rec.x) || !parse_double(toks[3], &rec.y))
      throw std::invalid_argument("parse error at line " + std::to_string(line_no) + ": non-numeric field");
    if (opts.swap_xy) std::swap(rec.x, rec.y);
    table.records.push_back(rec);
  }
  finalize(table);
  return table;
}

ObservationTable parse_ethucy_file(const std::string& path, const ParseOptions& opts) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory file " + path);
  return parse_ethucy(in, opts);
}

std::vector<SceneWindow> build_windows(const ObservationTable& table, int t_obs, int t_pred,
                                       int frame_stride) {
  if (t_obs < 2) throw std::invalid_argument("build_windows: t_obs must be >= 2");
  if (t_pred < 1) throw std::invalid_argument("build_windows: t_pred must be >= 1");
  if (frame_stride < 1) throw std::invalid_argument("build_windows: frame_stride must be >= 1");
  const int total = t_obs + t_pred;

  // Global sampled-step axis: the sorted distinct frames of the table.
  std::vector<std::int64_t> frames;
  frames.reserve(table.records.size());
  for (const Observation& r : table.records) frames.push_back(r.frame);
  std::sort(frames.begin(), frames.end());
  frames.erase(std::unique(frames.begin(), frames.end()), frames.end());
  const int n_frames = static_cast<int>(frames.size());

  std::unordered_map<std::int64_t, int> frame_index;
  frame_index.reserve(frames.size());
  for (int i = 0; i < n_frames; ++i) frame_index[frames[static_cast<size_t>(i)]] = i;

  struct AgentTrack {
    std::vector<char> present;
    std::vector<int> presence_prefix;
    std::vector<double> xs, ys;
  };
  std::map<std::int64_t, AgentTrack> tracks;  // ordered so window agent lists are sorted by id
  for (const Observation& r : table.records) {
    AgentTrack& t = tracks[r.agent];
    if (t.present.empty()) {
      t.present.assign(static_cast<size_t>(n_frames), 0);
      t.xs.assign(static_cast<size_t>(n_frames), 0.0);
      t.ys.assign(static_cast<size_t>(n_frames), 0.0);
    }
    int fi = frame_index.at(r.frame);
    t.present[static_cast<size_t>(fi)] = 1;
    t.xs[static_cast<size_t>(fi)] = r.x;
    t.ys[static_cast<size_t>(fi)] = r.y;
  }
  for (auto& [id, t] : tracks) {
    t.presence_prefix.assign(static_cast<size_t>(n_frames) + 1, 0);
    for (int i = 0; i < n_frames; ++i)
      t.presence_prefix[static_cast<size_t>(i) + 1] =
          t.presence_prefix[static_cast<size_t>(i)] + t.present[static_cast<size_t>(i)];
  }

  std::vector<SceneWindow> windows;
  for (int start = 0; start + total <= n_frames; start += frame_stride) {
    std::vector<std::int64_t> ids;
    for (const auto& [id, t] : tracks)
      if (t.presence_prefix[static_cast<size_t>(start + total)] -
              t.presence_prefix[static_cast<size_t>(start)] ==
          total)
        ids.push_back(id);
    if (ids.empty()) continue;
    SceneWindow w;
    w.scene_id = static_cast<int>(windows.size());
    w.t_obs = t_obs;
    w.t_pred = t_pred;
    w.agent_ids = ids;
    w.positions = Tensor({static_cast<int>(ids.size()), total, 2});
    for (size_t a = 0; a < ids.size(); ++a) {
      const AgentTrack& t = tracks.at(ids[a]);
      for (int s = 0; s < total; ++s) {
        w.positions.at3(static_cast<int>(a), s, 0) = t.xs[static_cast<size_t>(start + s)];
        w.positions.at3(static_cast<int>(a), s, 1) = t.ys[static_cast<size_t>(start + s)];
      }
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

std::vector<SceneWindow> windows_from_tables(std::span<const ObservationTable> tables, int t_obs,
                                             int t_pred, int frame_stride) {
  std::vector<SceneWindow> all;
  for (const ObservationTable& t : tables) {
    std::vector<SceneWindow> ws = build_windows(t, t_obs, t_pred, frame_stride);
    for (SceneWindow& w : ws) {
      w.scene_id = static_cast<int>(all.size());
      all.push_back(std::move(w));
    }
  }
  return all;
}

NormalizedScene normalize(const SceneWindow& window) {
  const int n = window.n_agents();
  const int t_obs = window.t_obs;
  const int t_pred = window.t_pred;
  NormalizedScene s;
  s.scene_id = window.scene_id;
  s.agent_ids = window.agent_ids;
  s.t_obs = t_obs;
  s.t_pred = t_pred;
  s.offsets = Tensor({n, t_obs - 1, 2});
  s.origins = Tensor({n, 2});
  s.world_obs = Tensor({n, t_obs, 2});
  s.centered_obs = Tensor({n, t_obs, 2});
  s.ground_truth = Tensor({n, t_pred, 2});
  s.future_world = Tensor({n, t_pred, 2});
  for (int a = 0; a < n; ++a) {
    double ox = window.positions.at3(a, t_obs - 1, 0);
    double oy = window.positions.at3(a, t_obs - 1, 1);
    s.origins.at2(a, 0) = ox;
    s.origins.at2(a, 1) = oy;
    for (int t = 0; t < t_obs; ++t) {
      double px = window.positions.at3(a, t, 0);
      double py = window.positions.at3(a, t, 1);
      s.world_obs.at3(a, t, 0) = px;
      s.world_obs.at3(a, t, 1) = py;
      s.centered_obs.at3(a, t, 0) = px - ox;
      s.centered_obs.at3(a, t, 1) = py - oy;
      if (t + 1 < t_obs) {
        s.offsets.at3(a, t, 0) = window.positions.at3(a, t + 1, 0) - px;
        s.offsets.at3(a, t, 1) = window.positions.at3(a, t + 1, 1) - py;
      }
    }
    for (int t = 0; t < t_pred; ++t) {
      double px = window.positions.at3(a, t_obs + t, 0);
      double py = window.positions.at3(a, t_obs + t, 1);
      s.future_world.at3(a, t, 0) = px;
      s.future_world.at3(a, t, 1) = py;
      s.ground_truth.at3(a, t, 0) = px - ox;
      s.ground_truth.at3(a, t, 1) = py - oy;
    }
  }
  return s;
}

std::vector<NormalizedScene> normalize_all(std::span<const SceneWindow> windows) {
  std::vector<NormalizedScene> scenes;
  scenes.reserve(windows.size());
  for (const SceneWindow& w : windows) scenes.push_back(normalize(w));
  return scenes;
}

LooSplit leave_one_out_split(const std::vector<std::pair<std::string, ObservationTable>>& subsets,
                             const std::string& held_out) {
  LooSplit split;
  bool found = false;
  for (const auto& [name, table] : subsets) {
    if (name == held_out) {
      split.test = table;
      found = true;
    } else {
      split.train.push_back(table);
    }
  }
  if (!found) throw std::invalid_argument("leave_one_out_split: unknown subset " + held_out);
  return split;
}

std::vector<double> junction_exit_headings(int n_exits) {
  if (n_exits < 1) throw std::invalid_argument("junction: n_exits must be >= 1");
  std::vector<double> headings;
  if (n_exits == 1) {
    headings.push_back(0.0);
    return headings;
  }
  const double half = std::acos(-1.0) / 2.0;
  for (int e = 0; e < n_exits; ++e)
    headings.push_back(-half + 2.0 * half * e / (n_exits - 1));
  return headings;
}

ObservationTable synth_junction(const JunctionParams& p) {
  if (p.n_scenes < 1 || p.agents_per_scene < 1)
    throw std::invalid_argument("junction: scene and agent counts must be positive");
  if (p.t_obs < 2 || p.t_pred < 1) throw std::invalid_argument("junction: bad horizon");
  std::vector<double> probs = p.branch_probs;
  if (probs.empty()) probs.assign(static_cast<size_t>(p.n_exits), 1.0 / p.n_exits);
  if (static_cast<int>(probs.size()) != p.n_exits)
    throw std::invalid_argument("junction: branch_probs size does not match n_exits");
  double sum = 0.0;
  for (double pr : probs) {
    if (pr < 0.0 || !std::isfinite(pr)) throw std::invalid_argument("junction: invalid branch probability");
    sum += pr;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("junction: branch_probs must sum to 1");

  std::vector<double> headings = junction_exit_headings(p.n_exits);
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const int total = p.t_obs + p.t_pred;
  ObservationTable table;
  table.records.reserve(static_cast<size_t>(p.n_scenes) * p.agents_per_scene * total);
  for (int s = 0; s < p.n_scenes; ++s) {
    for (int a = 0; a < p.agents_per_scene; ++a) {
      double u = unif(rng);
      int exit = 0;
      double cum = 0.0;
      for (int e = 0; e < p.n_exits; ++e) {
        cum += probs[static_cast<size_t>(e)];
        if (u <= cum) {
          exit = e;
          break;
        }
        exit = e;
      }
      double th = headings[static_cast<size_t>(exit)];
      double ex = std::cos(th), ey = std::sin(th);
      double lat = p.agent_spacing * (a - 0.5 * (p.agents_per_scene - 1));
      for (int t = 0; t < total; ++t) {
        double d = p.speed * (t - (p.t_obs - 1));
        double px, py;
        if (t < p.t_obs) {
          px = p.junction_x + d;
          py = p.junction_y + lat;
        } else {
          px = p.junction_x + d * ex;
          py = p.junction_y + lat + d * ey;
        }
        px += p.noise_std * gauss(rng);
        py += p.noise_std * gauss(rng);
        Observation rec;
        rec.frame = static_cast<std::int64_t>(s) * total + t;
        rec.agent = static_cast<std::int64_t>(s) * p.agents_per_scene + a;
        rec.x = snap_q20(px);
        rec.y = snap_q20(py);
        table.records.push_back(rec);
      }
    }
  }
  finalize(table);
  return table;
}

void write_scene_dump(std::ostream& out, std::span<const SceneWindow> windows) {
  out << std::setprecision(17);
  for (const SceneWindow& w : windows) {
    const int total = w.t_obs + w.t_pred;
    for (int a = 0; a < w.n_agents(); ++a)
      for (int t = 0; t < total; ++t)
        out << w.scene_id << ' ' << w.agent_ids[static_cast<size_t>(a)] << ' ' << t << ' '
            << w.positions.at3(a, t, 0) << ' ' << w.positions.at3(a, t, 1) << '\n';
  }
}

}  // namespace trajpred::data
