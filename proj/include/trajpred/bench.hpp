#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "trajpred/model.hpp"

namespace trajpred::bench {

struct BenchReport {
  std::string label;
  std::int64_t param_count = 0;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  int warmup = 0;
  int iters = 0;
  int batch_scenes = 0;
  std::string host;
};

// Times the end-to-end model forward on batches of `batch_scenes` scenes
// cycled from the pool; parsing and normalization happen beforehand and are
// not measured.
BenchReport run(model::Predictor& predictor, const std::vector<data::NormalizedScene>& pool,
                int batch_scenes, int iters, int warmup, const std::string& label);

std::string host_descriptor();

// Line-oriented `key value` report.
void write_report(std::ostream& out, const BenchReport& report);

}  // namespace trajpred::bench
