#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "trajpred/autodiff.hpp"

namespace trajpred::nn {

// Named registry of learnable tensors. Creation order is stable and doubles
// as the checkpoint serialization order. Parameter values are mutated only by
// the optimizer; forward passes treat them as read-only.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : rng_(seed) {}

  ad::Var xavier(const std::string& name, std::vector<int> shape, int fan_in, int fan_out);
  ad::Var zeros(const std::string& name, std::vector<int> shape);
  ad::Var constant(const std::string& name, std::vector<int> shape, double v);
  ad::Var with_values(const std::string& name, Tensor init);

  const std::vector<std::pair<std::string, ad::Var>>& entries() const { return entries_; }
  ad::Var find(const std::string& name) const;
  std::int64_t count() const;
  void zero_grads();
  std::mt19937_64& rng() { return rng_; }

 private:
  ad::Var insert(const std::string& name, Tensor init);

  std::vector<std::pair<std::string, ad::Var>> entries_;
  std::unordered_map<std::string, size_t> index_;
  std::mt19937_64 rng_;
};

struct LinearParams {
  ad::Var w, b;
};
LinearParams make_linear(ParamStore& ps, const std::string& prefix, int in, int out);
ad::Var apply_linear(const LinearParams& p, const ad::Var& x);

// Two-layer perceptron, smooth (GELU) hidden activation.
struct Mlp2 {
  LinearParams l1, l2;
};
Mlp2 make_mlp2(ParamStore& ps, const std::string& prefix, int in, int hidden, int out);
ad::Var apply_mlp2(const Mlp2& p, const ad::Var& x);

struct LayerNormParams {
  ad::Var gamma, beta;
};
LayerNormParams make_layer_norm(ParamStore& ps, const std::string& prefix, int width);
ad::Var apply_layer_norm(const LayerNormParams& p, const ad::Var& x);

// Single-cell LSTM. Gate layout along the 4D preactivation: input, forget,
// candidate, output. Forget bias initialized to 1.
struct LstmParams {
  ad::Var w_ih, w_hh, bias;
  int hidden = 0;
};
LstmParams make_lstm(ParamStore& ps, const std::string& prefix, int input, int hidden);
std::pair<ad::Var, ad::Var> lstm_cell(const LstmParams& p, const ad::Var& x, const ad::Var& h,
                                      const ad::Var& c);

Tensor xavier_uniform(std::vector<int> shape, int fan_in, int fan_out, std::mt19937_64& rng);

}  // namespace trajpred::nn
