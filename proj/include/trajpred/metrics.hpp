#pragma once

#include <iosfwd>

#include "trajpred/model.hpp"

namespace trajpred::metrics {

struct MetricReport {
  double min_ade = 0.0;
  double min_fde = 0.0;
  int k = 0;
  std::int64_t n_agents = 0;
};

// Best-of-K displacement errors with the minimum taken per agent:
// minADE_K averages the per-step Euclidean distance of the closest mode,
// minFDE_K takes the final-step distance of the mode closest at the end.
// preds: [N, K, T', 2], gt: [N, T', 2], both in the same frame.
MetricReport evaluate(const Tensor& preds, const Tensor& gt);

// Agent-weighted aggregation across scenes.
class Accumulator {
 public:
  void add(const Tensor& preds, const Tensor& gt);
  MetricReport report() const;

 private:
  double sum_ade_ = 0.0;
  double sum_fde_ = 0.0;
  std::int64_t n_agents_ = 0;
  int k_ = 0;
};

// Runs the model over scenes world-frame, truncating to the k_eval most
// probable modes. threads > 1 splits scenes across workers; parameters are
// shared read-only.
MetricReport evaluate_scenes(model::Predictor& predictor,
                             const std::vector<data::NormalizedScene>& scenes, int k_eval,
                             int threads = 1);

// Line-oriented report: `metric K value`.
void write_report(std::ostream& out, const MetricReport& report);

}  // namespace trajpred::metrics
