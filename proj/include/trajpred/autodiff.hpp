#pragma once

#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "trajpred/tensor.hpp"

namespace trajpred::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the compute tape. Ops below build nodes eagerly: `value` is
// filled at construction, `grad` is allocated and accumulated during
// backward(). The tape is acyclic and backward visits each reachable node
// exactly once in reverse topological order.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward_fn;

  void ensure_grad();
};

// Value-semantic handle to a tape node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : n_(std::move(n)) {}

  bool defined() const { return n_ != nullptr; }
  const Tensor& value() const { return n_->value; }
  // Gradient accumulated by backward(); zeros if the node was never reached.
  Tensor grad() const;
  const std::vector<int>& shape() const { return n_->value.shape(); }
  bool requires_grad() const { return n_->requires_grad; }
  NodePtr node() const { return n_; }
  // New leaf sharing this node's value, cut off from the tape.
  Var detach() const;

 private:
  NodePtr n_;
};

Var leaf(Tensor value, bool requires_grad = false);
Var constant(Tensor value);
Var constant_scalar(double v);

// Elementwise arithmetic. The second operand may broadcast: a row vector
// ([C] or [1, C]) against the last axis, a column ([R, 1]) against a matrix,
// or a scalar. mul/add also accept the broadcast operand first.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

Var tanh_(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var gelu(const Var& a);
Var exp_(const Var& a);
Var log_(const Var& a);
Var softplus(const Var& a);
Var abs_(const Var& a);
Var square(const Var& a);
Var clamp_min(const Var& a, double lo);

Var matmul(const Var& a, const Var& b);
// x [..., in] -> [..., out]; bias optional (pass Var() to omit).
Var linear(const Var& x, const Var& w, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, std::vector<int> new_shape);
Var concat(const std::vector<Var>& parts, int axis);
Var slice(const Var& a, int axis, int start, int len);
// 2-D only. out[r, :] = x[idx[r], :]
Var gather_rows(const Var& x, std::vector<int> idx);
// 2-D only. out[s, :] = sum over rows r with seg[r] == s of x[r, :]
Var segment_sum(const Var& x, std::vector<int> seg, int n_segments);
// Max-subtracted softmax along `axis` (default last).
Var softmax(const Var& x, int axis = -1);
// x [N, S, Cin], kernel [Cout, Cin, ksz] (ksz odd), stride 1, same padding.
Var conv1d(const Var& x, const Var& kernel, const Var& bias);
// q, k, v [N, S, D] with D divisible by heads; scaled dot-product attention
// per agent over the S axis, heads concatenated.
Var multihead_attention(const Var& q, const Var& k, const Var& v, int heads);
// Normalization over the last axis; gamma/beta shaped [C].
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
// Inverted dropout; identity when p == 0.
Var dropout(const Var& x, double p, std::mt19937_64& rng);
Var sum(const Var& x);
Var mean(const Var& x);

// Reverse-mode sweep from a scalar loss. Accumulates into the grads of every
// requires_grad node reachable from `loss`.
void backward(const Var& loss);

// Forward-only helpers (no tape).
Tensor softmax_values(const Tensor& x, int axis = -1);
// Attention probabilities per agent and head: [N, heads, S, S].
Tensor attention_probs(const Tensor& q, const Tensor& k, int heads);

// Finite-difference gradient checking. `fn` must be deterministic and
// scalar-valued. Returns max over coordinates of
// |autodiff - central difference| / max(1, |central difference|).
using VecFn = std::function<Var(const std::vector<Var>&)>;
double grad_check(const VecFn& fn, const std::vector<Tensor>& point, double eps);
// Same, but checks only `coords_per_tensor` randomly sampled coordinates of
// each input tensor; for functions too large to sweep exhaustively.
double grad_check_sampled(const VecFn& fn, const std::vector<Tensor>& point, double eps,
                          int coords_per_tensor, std::mt19937_64& rng);

}  // namespace trajpred::ad
