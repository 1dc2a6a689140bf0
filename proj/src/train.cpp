#include "trajpred/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include "trajpred/loss.hpp"

namespace trajpred::train {

double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr_init, double lr_final) {
  if (total_steps < 1) throw std::invalid_argument("cosine_lr: total_steps must be >= 1");
  if (step < 0 || step > total_steps)
    throw std::invalid_argument("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                                std::to_string(total_steps) + "]");
  const double pi = std::acos(-1.0);
  return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + std::cos(pi * step / total_steps));
}

Adam::Adam(nn::ParamStore& ps, double beta1, double beta2, double eps)
    : ps_(&ps), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto& [name, v] : ps.entries()) {
    m_.emplace_back(v.value().shape());
    v_.emplace_back(v.value().shape());
  }
}

void Adam::step(double lr) {
  auto& entries = ps_->entries();
  for (const auto& [name, p] : entries) {
    const Tensor& g = p.node()->grad;
    for (std::int64_t i = 0; i < g.size(); ++i)
      if (!std::isfinite(g[i])) {
        ++skipped_;
        return;
      }
  }
  ++t_;
  double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (size_t pi = 0; pi < entries.size(); ++pi) {
    Tensor& value = entries[pi].second.node()->value;
    const Tensor& g = entries[pi].second.node()->grad;
    Tensor& m = m_[pi];
    Tensor& v = v_[pi];
    if (g.empty()) continue;  // parameter unused by this graph
    for (std::int64_t i = 0; i < value.size(); ++i) {
      m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
      v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      value[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

double clip_grad_norm(nn::ParamStore& ps, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, p] : ps.entries()) {
    const Tensor& g = p.node()->grad;
    for (std::int64_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
  }
  double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm && norm > 0.0) {
    double f = max_norm / norm;
    for (auto& [name, p] : ps.entries()) {
      Tensor& g = p.node()->grad;
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] *= f;
    }
  }
  return norm;
}

FitResult fit(model::Predictor& predictor, const std::vector<data::NormalizedScene>& train_scenes,
              const std::vector<data::NormalizedScene>& val_scenes, const TrainConfig& tc) {
  if (train_scenes.empty()) throw std::invalid_argument("fit: empty training set");
  if (tc.batch_size < 1) throw std::invalid_argument("fit: batch_size must be >= 1");
  if (!(tc.lr_init > tc.lr_final) || !(tc.lr_final > 0.0))
    throw std::invalid_argument("fit: need lr_init > lr_final > 0");

  const std::int64_t batches_per_epoch =
      (static_cast<std::int64_t>(train_scenes.size()) + tc.batch_size - 1) / tc.batch_size;
  const std::int64_t total_steps = batches_per_epoch * tc.max_epochs;

  Adam opt(predictor.params());
  std::mt19937_64 shuffle_rng(tc.seed);
  std::vector<size_t> order(train_scenes.size());
  std::iota(order.begin(), order.end(), size_t{0});

  FitResult result;
  std::int64_t step = 0;
  const bool gaussian = predictor.config().gmm_head;
  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sum_total = 0.0, sum_reg = 0.0, sum_cls = 0.0;
    std::int64_t agents_seen = 0;
    for (std::int64_t b = 0; b < batches_per_epoch; ++b) {
      size_t begin = static_cast<size_t>(b) * tc.batch_size;
      size_t end = std::min(begin + tc.batch_size, train_scenes.size());
      std::vector<const data::NormalizedScene*> batch;
      batch.reserve(end - begin);
      for (size_t i = begin; i < end; ++i) batch.push_back(&train_scenes[order[i]]);

      predictor.params().zero_grads();
      model::Predictor::Forward fwd = predictor.forward(batch, /*training=*/true);
      Tensor gt = model::stack_ground_truth(batch);
      loss::LossBreakdown lb = loss::wta_loss(fwd, gt, gaussian, tc.cls_weight);
      if (!std::isfinite(lb.total))
        throw std::runtime_error("fit: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(b));
      ad::backward(lb.total_var);
      clip_grad_norm(predictor.params(), tc.grad_clip);
      opt.step(cosine_lr(step, total_steps, tc.lr_init, tc.lr_final));
      ++step;

      int batch_agents = fwd.layout.n;
      sum_total += lb.total * batch_agents;
      sum_reg += lb.reg * batch_agents;
      sum_cls += lb.cls * batch_agents;
      agents_seen += batch_agents;
    }

    EpochStats es;
    es.epoch = epoch;
    es.total = sum_total / agents_seen;
    es.reg = sum_reg / agents_seen;
    es.cls = sum_cls / agents_seen;
    es.lr = cosine_lr(step, total_steps, tc.lr_init, tc.lr_final);
    if (!val_scenes.empty()) {
      metrics::MetricReport r =
          metrics::evaluate_scenes(predictor, val_scenes, predictor.config().modes);
      es.val_minade = r.min_ade;
      es.val_minfde = r.min_fde;
    } else {
      es.val_minade = std::nan("");
      es.val_minfde = std::nan("");
    }
    result.log.push_back(es);
  }
  result.steps = step;
  result.skipped_steps = opt.skipped();
  return result;
}

void write_epoch_log(std::ostream& out, const std::vector<EpochStats>& log) {
  out << std::setprecision(12);
  for (const EpochStats& e : log)
    out << e.epoch << ' ' << e.total << ' ' << e.reg << ' ' << e.cls << ' ' << e.val_minade << ' '
        << e.val_minfde << ' ' << e.lr << '\n';
}

namespace {

constexpr char kMagic[8] = {'T', 'P', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ostream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ostream& out, T v) {
  write_bytes(out, &v, sizeof(T));
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  write_bytes(out, s.data(), s.size());
}

void write_tensor(std::ostream& out, const Tensor& t) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.ndim()));
  for (int d : t.shape()) write_pod<std::int32_t>(out, d);
  write_bytes(out, t.data(), static_cast<size_t>(t.size()) * sizeof(double));
}

void read_bytes(std::istream& in, void* p, size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n)
    throw std::runtime_error("checkpoint: truncated file");
}

template <typename T>
T read_pod(std::istream& in) {
  T v;
  read_bytes(in, &v, sizeof(T));
  return v;
}

std::string read_string(std::istream& in) {
  std::uint32_t n = read_pod<std::uint32_t>(in);
  std::string s(n, '\0');
  read_bytes(in, s.data(), n);
  return s;
}

Tensor read_tensor(std::istream& in) {
  std::uint32_t nd = read_pod<std::uint32_t>(in);
  std::vector<int> shape;
  for (std::uint32_t i = 0; i < nd; ++i) shape.push_back(read_pod<std::int32_t>(in));
  Tensor t(shape);
  read_bytes(in, t.data(), static_cast<size_t>(t.size()) * sizeof(double));
  return t;
}

void check_header(std::istream& in) {
  char magic[8];
  read_bytes(in, magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic (not a checkpoint file)");
  std::uint32_t version = read_pod<std::uint32_t>(in);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
}

}  // namespace

void save_checkpoint(const std::string& path, const model::Predictor& predictor, const Adam* opt,
                     std::int64_t step) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  write_bytes(out, kMagic, 8);
  write_pod<std::uint32_t>(out, kVersion);
  std::string cfg_text = serialize_model_config(predictor.config());
  write_string(out, cfg_text);
  write_pod<std::uint64_t>(out, fnv1a64(cfg_text));
  write_pod<std::int64_t>(out, step);
  const auto& entries = predictor.params().entries();
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, v] : entries) {
    write_string(out, name);
    write_tensor(out, v.value());
  }
  write_pod<std::uint8_t>(out, opt ? 1 : 0);
  if (opt) {
    write_pod<std::int64_t>(out, opt->steps_taken());
    for (const Tensor& t : opt->m()) write_tensor(out, t);
    for (const Tensor& t : opt->v()) write_tensor(out, t);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

ModelConfig checkpoint_model_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  check_header(in);
  std::string cfg_text = read_string(in);
  std::uint64_t hash = read_pod<std::uint64_t>(in);
  if (hash != fnv1a64(cfg_text)) throw std::runtime_error("checkpoint: config hash mismatch");
  return parse_model_config_text(cfg_text);
}

std::int64_t load_checkpoint(const std::string& path, model::Predictor& predictor, Adam* opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  check_header(in);
  std::string cfg_text = read_string(in);
  std::uint64_t stored_hash = read_pod<std::uint64_t>(in);
  if (stored_hash != fnv1a64(cfg_text)) throw std::runtime_error("checkpoint: config hash mismatch");
  if (stored_hash != model_config_hash(predictor.config()))
    throw std::runtime_error(
        "checkpoint: architecture does not match this model (config hash mismatch)");
  std::int64_t step = read_pod<std::int64_t>(in);
  std::uint32_t n = read_pod<std::uint32_t>(in);
  const auto& entries = predictor.params().entries();
  if (n != entries.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = read_string(in);
    if (name != entries[i].first)
      throw std::runtime_error("checkpoint: parameter name mismatch at " + name);
    Tensor t = read_tensor(in);
    if (!t.same_shape(entries[i].second.value()))
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    entries[i].second.node()->value = std::move(t);
  }
  std::uint8_t has_opt = read_pod<std::uint8_t>(in);
  if (opt) {
    if (!has_opt) throw std::runtime_error("checkpoint: no optimizer state stored");
    opt->set_steps(read_pod<std::int64_t>(in));
    for (size_t i = 0; i < entries.size(); ++i) opt->m()[i] = read_tensor(in);
    for (size_t i = 0; i < entries.size(); ++i) opt->v()[i] = read_tensor(in);
  }
  return step;
}

}  // namespace trajpred::train
