#include "trajpred/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace trajpred::bench {

BenchReport run(model::Predictor& predictor, const std::vector<data::NormalizedScene>& pool,
                int batch_scenes, int iters, int warmup, const std::string& label) {
  if (pool.empty()) throw std::invalid_argument("bench: empty scene pool");
  if (iters < 10) throw std::invalid_argument("bench: need at least 10 measured iterations");
  if (warmup < 0 || batch_scenes < 1) throw std::invalid_argument("bench: bad iteration counts");

  auto make_batch = [&](int iteration) {
    std::vector<const data::NormalizedScene*> batch;
    batch.reserve(static_cast<size_t>(batch_scenes));
    for (int i = 0; i < batch_scenes; ++i)
      batch.push_back(&pool[(static_cast<size_t>(iteration) * batch_scenes + i) % pool.size()]);
    return batch;
  };

  volatile double sink = 0.0;
  for (int i = 0; i < warmup; ++i) {
    auto batch = make_batch(i);
    model::Predictor::Forward f = predictor.forward(batch);
    sink = sink + f.loc.value()[0];
  }

  std::vector<double> ms(static_cast<size_t>(iters));
  for (int i = 0; i < iters; ++i) {
    auto batch = make_batch(warmup + i);
    auto t0 = std::chrono::steady_clock::now();
    model::Predictor::Forward f = predictor.forward(batch);
    auto t1 = std::chrono::steady_clock::now();
    sink = sink + f.loc.value()[0];
    ms[static_cast<size_t>(i)] =
        std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(t1 - t0).count();
  }

  BenchReport r;
  r.label = label;
  r.param_count = predictor.param_count();
  r.warmup = warmup;
  r.iters = iters;
  r.batch_scenes = batch_scenes;
  r.host = host_descriptor();
  double sum = 0.0;
  for (double v : ms) sum += v;
  r.mean_ms = sum / iters;
  std::vector<double> sorted = ms;
  std::sort(sorted.begin(), sorted.end());
  if (iters % 2 == 1)
    r.median_ms = sorted[static_cast<size_t>(iters / 2)];
  else
    r.median_ms = 0.5 * (sorted[static_cast<size_t>(iters / 2 - 1)] +
                         sorted[static_cast<size_t>(iters / 2)]);
  size_t p95_idx = static_cast<size_t>(std::ceil(0.95 * iters)) - 1;
  r.p95_ms = sorted[std::min(p95_idx, sorted.size() - 1)];
  return r;
}

std::string host_descriptor() {
  std::string cpu = "unknown cpu";
  std::ifstream info("/proc/cpuinfo");
  std::string line;
  while (std::getline(info, line)) {
    if (line.rfind("model name", 0) == 0) {
      size_t colon = line.find(':');
      if (colon != std::string::npos) {
        cpu = line.substr(colon + 1);
        size_t b = cpu.find_first_not_of(' ');
        if (b != std::string::npos) cpu = cpu.substr(b);
      }
      break;
    }
  }
  std::ostringstream os;
  os << cpu << " (" << std::thread::hardware_concurrency() << " hw threads)";
  return os.str();
}

void write_report(std::ostream& out, const BenchReport& r) {
  out << std::setprecision(6);
  out << "label " << r.label << '\n'
      << "params " << r.param_count << '\n'
      << "batch_scenes " << r.batch_scenes << '\n'
      << "warmup " << r.warmup << '\n'
      << "iters " << r.iters << '\n'
      << "mean_ms " << r.mean_ms << '\n'
      << "median_ms " << r.median_ms << '\n'
      << "p95_ms " << r.p95_ms << '\n'
      << "host " << r.host << '\n';
}

}  // namespace trajpred::bench
