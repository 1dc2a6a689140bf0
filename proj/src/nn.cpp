#include "trajpred/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace trajpred::nn {

Tensor xavier_uniform(std::vector<int> shape, int fan_in, int fan_out, std::mt19937_64& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

ad::Var ParamStore::insert(const std::string& name, Tensor init) {
  if (index_.count(name)) throw std::invalid_argument("param store: duplicate name " + name);
  ad::Var v = ad::leaf(std::move(init), true);
  index_[name] = entries_.size();
  entries_.emplace_back(name, v);
  return v;
}

ad::Var ParamStore::xavier(const std::string& name, std::vector<int> shape, int fan_in,
                           int fan_out) {
  return insert(name, xavier_uniform(std::move(shape), fan_in, fan_out, rng_));
}

ad::Var ParamStore::zeros(const std::string& name, std::vector<int> shape) {
  return insert(name, Tensor(std::move(shape)));
}

ad::Var ParamStore::constant(const std::string& name, std::vector<int> shape, double v) {
  return insert(name, Tensor::full(std::move(shape), v));
}

ad::Var ParamStore::with_values(const std::string& name, Tensor init) {
  return insert(name, std::move(init));
}

ad::Var ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("param store: unknown name " + name);
  return entries_[it->second].second;
}

std::int64_t ParamStore::count() const {
  std::int64_t n = 0;
  for (const auto& [name, v] : entries_) n += v.value().size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [name, v] : entries_) {
    Tensor& g = v.node()->grad;
    if (!g.empty())
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] = 0.0;
  }
}

LinearParams make_linear(ParamStore& ps, const std::string& prefix, int in, int out) {
  LinearParams p;
  p.w = ps.xavier(prefix + ".w", {in, out}, in, out);
  p.b = ps.zeros(prefix + ".b", {out});
  return p;
}

ad::Var apply_linear(const LinearParams& p, const ad::Var& x) {
  return ad::linear(x, p.w, p.b);
}

Mlp2 make_mlp2(ParamStore& ps, const std::string& prefix, int in, int hidden, int out) {
  Mlp2 p;
  p.l1 = make_linear(ps, prefix + ".l1", in, hidden);
  p.l2 = make_linear(ps, prefix + ".l2", hidden, out);
  return p;
}

ad::Var apply_mlp2(const Mlp2& p, const ad::Var& x) {
  return apply_linear(p.l2, ad::gelu(apply_linear(p.l1, x)));
}

LayerNormParams make_layer_norm(ParamStore& ps, const std::string& prefix, int width) {
  LayerNormParams p;
  p.gamma = ps.constant(prefix + ".gamma", {width}, 1.0);
  p.beta = ps.zeros(prefix + ".beta", {width});
  return p;
}

ad::Var apply_layer_norm(const LayerNormParams& p, const ad::Var& x) {
  return ad::layer_norm(x, p.gamma, p.beta);
}

LstmParams make_lstm(ParamStore& ps, const std::string& prefix, int input, int hidden) {
  LstmParams p;
  p.hidden = hidden;
  p.w_ih = ps.xavier(prefix + ".w_ih", {input, 4 * hidden}, input, hidden);
  p.w_hh = ps.xavier(prefix + ".w_hh", {hidden, 4 * hidden}, hidden, hidden);
  Tensor bias({4 * hidden});
  for (int i = hidden; i < 2 * hidden; ++i) bias[i] = 1.0;
  p.bias = ps.with_values(prefix + ".bias", std::move(bias));
  return p;
}

std::pair<ad::Var, ad::Var> lstm_cell(const LstmParams& p, const ad::Var& x, const ad::Var& h,
                                      const ad::Var& c) {
  int d = p.hidden;
  ad::Var pre = ad::add(ad::linear(x, p.w_ih, p.bias), ad::linear(h, p.w_hh, ad::Var()));
  ad::Var i = ad::sigmoid(ad::slice(pre, -1, 0, d));
  ad::Var f = ad::sigmoid(ad::slice(pre, -1, d, d));
  ad::Var g = ad::tanh_(ad::slice(pre, -1, 2 * d, d));
  ad::Var o = ad::sigmoid(ad::slice(pre, -1, 3 * d, d));
  ad::Var c_next = ad::add(ad::mul(f, c), ad::mul(i, g));
  ad::Var h_next = ad::mul(o, ad::tanh_(c_next));
  return {h_next, c_next};
}

}  // namespace trajpred::nn
