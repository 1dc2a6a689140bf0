#include "trajpred/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace trajpred::metrics {

namespace {

void per_agent_errors(const Tensor& preds, const Tensor& gt, int a, double* ade, double* fde) {
  const int k = preds.dim(1), tp = preds.dim(2);
  double best_ade = 0.0, best_fde = 0.0;
  for (int kk = 0; kk < k; ++kk) {
    double sum = 0.0, last = 0.0;
    for (int t = 0; t < tp; ++t) {
      std::int64_t i = ((static_cast<std::int64_t>(a) * k + kk) * tp + t) * 2;
      double dx = preds[i] - gt.at3(a, t, 0);
      double dy = preds[i + 1] - gt.at3(a, t, 1);
      double d = std::sqrt(dx * dx + dy * dy);
      sum += d;
      if (t == tp - 1) last = d;
    }
    double mode_ade = sum / tp;
    if (kk == 0 || mode_ade < best_ade) best_ade = mode_ade;
    if (kk == 0 || last < best_fde) best_fde = last;
  }
  *ade = best_ade;
  *fde = best_fde;
}

}  // namespace

MetricReport evaluate(const Tensor& preds, const Tensor& gt) {
  if (preds.ndim() != 4 || preds.dim(3) != 2)
    throw std::invalid_argument("metrics: expected [N, K, T', 2] predictions, got " +
                                preds.shape_str());
  if (gt.ndim() != 3 || gt.dim(0) != preds.dim(0) || gt.dim(1) != preds.dim(2) || gt.dim(2) != 2)
    throw std::invalid_argument("metrics: ground truth " + gt.shape_str() +
                                " does not match predictions " + preds.shape_str());
  MetricReport r;
  r.k = preds.dim(1);
  r.n_agents = preds.dim(0);
  double sum_ade = 0.0, sum_fde = 0.0;
  for (int a = 0; a < preds.dim(0); ++a) {
    double ade, fde;
    per_agent_errors(preds, gt, a, &ade, &fde);
    sum_ade += ade;
    sum_fde += fde;
  }
  r.min_ade = r.n_agents ? sum_ade / r.n_agents : 0.0;
  r.min_fde = r.n_agents ? sum_fde / r.n_agents : 0.0;
  return r;
}

void Accumulator::add(const Tensor& preds, const Tensor& gt) {
  MetricReport r = evaluate(preds, gt);
  if (k_ == 0) k_ = r.k;
  if (r.k != k_) throw std::invalid_argument("metrics: mixed K across scenes");
  sum_ade_ += r.min_ade * r.n_agents;
  sum_fde_ += r.min_fde * r.n_agents;
  n_agents_ += r.n_agents;
}

MetricReport Accumulator::report() const {
  MetricReport r;
  r.k = k_;
  r.n_agents = n_agents_;
  r.min_ade = n_agents_ ? sum_ade_ / n_agents_ : 0.0;
  r.min_fde = n_agents_ ? sum_fde_ / n_agents_ : 0.0;
  return r;
}

MetricReport evaluate_scenes(model::Predictor& predictor,
                             const std::vector<data::NormalizedScene>& scenes, int k_eval,
                             int threads) {
  if (k_eval < 1 || k_eval > predictor.config().modes)
    throw std::invalid_argument("evaluate_scenes: K " + std::to_string(k_eval) +
                                " exceeds trained modes " +
                                std::to_string(predictor.config().modes));
  // Per-scene results land in index order so the final reduction (and thus
  // the report) does not depend on the thread count.
  std::vector<MetricReport> per_scene(scenes.size());
  auto eval_one = [&](std::size_t i) {
    model::LaplaceMixture mix = predictor.predict(scenes[i]);
    mix = model::truncate_modes(mix, k_eval);
    Tensor world = model::mixture_world_locations(mix, scenes[i].origins);
    per_scene[i] = evaluate(world, scenes[i].future_world);
  };
  if (threads <= 1) {
    for (std::size_t i = 0; i < scenes.size(); ++i) eval_one(i);
  } else {
    std::mutex next_mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w)
      pool.emplace_back([&]() {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard<std::mutex> lk(next_mu);
            if (next >= scenes.size()) return;
            i = next++;
          }
          eval_one(i);
        }
      });
    for (std::thread& t : pool) t.join();
  }
  MetricReport out;
  out.k = k_eval;
  double sum_ade = 0.0, sum_fde = 0.0;
  for (const MetricReport& r : per_scene) {
    sum_ade += r.min_ade * r.n_agents;
    sum_fde += r.min_fde * r.n_agents;
    out.n_agents += r.n_agents;
  }
  out.min_ade = out.n_agents ? sum_ade / out.n_agents : 0.0;
  out.min_fde = out.n_agents ? sum_fde / out.n_agents : 0.0;
  return out;
}

void write_report(std::ostream& out, const MetricReport& report) {
  out << std::setprecision(17);
  out << "minade " << report.k << ' ' << report.min_ade << '\n';
  out << "minfde " << report.k << ' ' << report.min_fde << '\n';
}

}  // namespace trajpred::metrics
