#include "trajpred/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>

namespace trajpred::ad {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

bool any_requires(const std::vector<NodePtr>& inputs) {
  for (const auto& n : inputs)
    if (n->requires_grad) return true;
  return false;
}

Var make_node(const char* op, Tensor value, std::vector<NodePtr> inputs,
              std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->value = std::move(value);
  n->inputs = std::move(inputs);
  n->requires_grad = any_requires(n->inputs);
  if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  return Var(std::move(n));
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() +
                              " and " + b.shape_str());
}

// Broadcast modes for the second operand of a binary op.
enum class Bc { kSame, kRow, kCol, kScalar, kNone };

Bc classify(const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return Bc::kSame;
  if (b.size() == 1 && b.ndim() <= 1) return Bc::kScalar;
  if (a.ndim() >= 1) {
    int last = a.dim(a.ndim() - 1);
    if (b.size() == last && (b.ndim() == 1 || (b.ndim() == 2 && b.dim(0) == 1)))
      return Bc::kRow;
  }
  if (a.ndim() == 2 && b.ndim() == 2 && b.dim(1) == 1 && b.dim(0) == a.dim(0)) return Bc::kCol;
  return Bc::kNone;
}

std::int64_t bcast_index(Bc bc, std::int64_t i, int last, int cols) {
  switch (bc) {
    case Bc::kRow: return i % last;
    case Bc::kCol: return i / cols;
    case Bc::kScalar: return 0;
    default: return i;
  }
}

// dC = A[m,k] * B[k,n], optionally accumulating.
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
  if (!acc) std::fill(c, c + static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* ar = a + static_cast<size_t>(i) * k;
    double* cr = c + static_cast<size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      double av = ar[l];
      const double* br = b + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

// C = A[m,k] * B^T with B stored [n,k].
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
  for (int i = 0; i < m; ++i) {
    const double* ar = a + static_cast<size_t>(i) * k;
    double* cr = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* br = b + static_cast<size_t>(j) * k;
      double s = 0.0;
      for (int l = 0; l < k; ++l) s += ar[l] * br[l];
      cr[j] = acc ? cr[j] + s : s;
    }
  }
}

// C = A^T * B with A stored [k,m], B stored [k,n].
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
  if (!acc) std::fill(c, c + static_cast<size_t>(m) * n, 0.0);
  for (int l = 0; l < k; ++l) {
    const double* ar = a + static_cast<size_t>(l) * m;
    const double* br = b + static_cast<size_t>(l) * n;
    for (int i = 0; i < m; ++i) {
      double av = ar[i];
      double* cr = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

using BinFwd = double (*)(double, double);
using BinGrad = double (*)(double, double);

Var binary_op(const char* op, const Var& a, const Var& b, BinFwd f, BinGrad dfda, BinGrad dfdb,
              bool commutative) {
  Bc bc = classify(a.value(), b.value());
  if (bc == Bc::kNone && commutative && classify(b.value(), a.value()) != Bc::kNone)
    return binary_op(op, b, a, f, dfdb, dfda, false);
  if (bc == Bc::kNone) shape_error(op, a.value(), b.value());

  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  int last = av.ndim() >= 1 ? av.dim(av.ndim() - 1) : 1;
  int cols = av.ndim() == 2 ? av.dim(1) : 1;

  Tensor out(av.shape());
  for (std::int64_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[bcast_index(bc, i, last, cols)]);

  return make_node(op, std::move(out), {a.node(), b.node()},
                   [bc, last, cols, dfda, dfdb](Node& self) {
                     Node* na = self.inputs[0].get();
                     Node* nb = self.inputs[1].get();
                     const Tensor& va = na->value;
                     const Tensor& vb = nb->value;
                     if (na->requires_grad) {
                       na->ensure_grad();
                       for (std::int64_t i = 0; i < va.size(); ++i)
                         na->grad[i] += self.grad[i] * dfda(va[i], vb[bcast_index(bc, i, last, cols)]);
                     }
                     if (nb->requires_grad) {
                       nb->ensure_grad();
                       for (std::int64_t i = 0; i < va.size(); ++i) {
                         std::int64_t j = bcast_index(bc, i, last, cols);
                         nb->grad[j] += self.grad[i] * dfdb(va[i], vb[j]);
                       }
                     }
                   });
}

using UnFwd = double (*)(double);
// Derivative gets the input x and the cached output y.
using UnGrad = double (*)(double, double);

Var unary_op(const char* op, const Var& a, UnFwd f, UnGrad df) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return make_node(op, std::move(out), {a.node()}, [df](Node& self) {
    Node* na = self.inputs[0].get();
    if (!na->requires_grad) return;
    na->ensure_grad();
    for (std::int64_t i = 0; i < na->value.size(); ++i)
      na->grad[i] += self.grad[i] * df(na->value[i], self.value[i]);
  });
}

double softplus_fwd(double x) {
  // log(1 + e^x) without overflow
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid_fwd(double x) {
  if (x >= 0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x, double) {
  double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

void softmax_rows(const double* x, double* y, std::int64_t rows, int c) {
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * c;
    double* yr = y + r * c;
    double m = xr[0];
    for (int j = 1; j < c; ++j) m = std::max(m, xr[j]);
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      yr[j] = std::exp(xr[j] - m);
      s += yr[j];
    }
    for (int j = 0; j < c; ++j) yr[j] /= s;
  }
}

}  // namespace

void Node::ensure_grad() {
  if (grad.empty() && value.size() > 0) grad = Tensor(value.shape());
  if (grad.empty() && value.size() == 0) grad = Tensor(value.shape());
}

Tensor Var::grad() const {
  if (n_->grad.empty()) return Tensor(n_->value.shape());
  return n_->grad;
}

Var Var::detach() const { return leaf(n_->value, false); }

Var leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

Var constant(Tensor value) { return leaf(std::move(value), false); }

Var constant_scalar(double v) { return leaf(Tensor::scalar(v), false); }

Var add(const Var& a, const Var& b) {
  return binary_op("add", a, b, [](double x, double y) { return x + y; },
                   [](double, double) { return 1.0; }, [](double, double) { return 1.0; }, true);
}

Var sub(const Var& a, const Var& b) {
  return binary_op("sub", a, b, [](double x, double y) { return x - y; },
                   [](double, double) { return 1.0; }, [](double, double) { return -1.0; }, false);
}

Var mul(const Var& a, const Var& b) {
  return binary_op("mul", a, b, [](double x, double y) { return x * y; },
                   [](double, double y) { return y; }, [](double x, double) { return x; }, true);
}

Var div(const Var& a, const Var& b) {
  return binary_op("div", a, b, [](double x, double y) { return x / y; },
                   [](double, double y) { return 1.0 / y; },
                   [](double x, double y) { return -x / (y * y); }, false);
}

Var neg(const Var& a) {
  return unary_op("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var scale(const Var& a, double s) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < av.size(); ++i) out[i] = av[i] * s;
  return make_node("scale", std::move(out), {a.node()}, [s](Node& self) {
    Node* na = self.inputs[0].get();
    na->ensure_grad();
    for (std::int64_t i = 0; i < na->value.size(); ++i) na->grad[i] += self.grad[i] * s;
  });
}

Var add_scalar(const Var& a, double s) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < av.size(); ++i) out[i] = av[i] + s;
  return make_node("add_scalar", std::move(out), {a.node()}, [](Node& self) {
    Node* na = self.inputs[0].get();
    na->ensure_grad();
    for (std::int64_t i = 0; i < na->value.size(); ++i) na->grad[i] += self.grad[i];
  });
}

Var tanh_(const Var& a) {
  return unary_op("tanh", a, [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary_op("sigmoid", a, sigmoid_fwd, [](double, double y) { return y * (1.0 - y); });
}

Var relu(const Var& a) {
  return unary_op("relu", a, [](double x) { return x > 0 ? x : 0.0; },
                  [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var gelu(const Var& a) { return unary_op("gelu", a, gelu_fwd, gelu_grad); }

Var exp_(const Var& a) {
  return unary_op("exp", a, [](double x) { return std::exp(x); },
                  [](double, double y) { return y; });
}

Var log_(const Var& a) {
  return unary_op("log", a, [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}

Var softplus(const Var& a) {
  return unary_op("softplus", a, softplus_fwd, [](double x, double) { return sigmoid_fwd(x); });
}

Var abs_(const Var& a) {
  return unary_op("abs", a, [](double x) { return std::abs(x); },
                  [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var square(const Var& a) {
  return unary_op("square", a, [](double x) { return x * x; },
                  [](double x, double) { return 2.0 * x; });
}

Var clamp_min(const Var& a, double lo) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < av.size(); ++i) out[i] = std::max(av[i], lo);
  return make_node("clamp_min", std::move(out), {a.node()}, [lo](Node& self) {
    Node* na = self.inputs[0].get();
    na->ensure_grad();
    for (std::int64_t i = 0; i < na->value.size(); ++i)
      if (na->value[i] > lo) na->grad[i] += self.grad[i];
  });
}

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(0)) shape_error("matmul", av, bv);
  int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  mm_nn(av.data(), bv.data(), out.data(), m, k, n, false);
  return make_node("matmul", std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    Node* na = self.inputs[0].get();
    Node* nb = self.inputs[1].get();
    if (na->requires_grad) {
      na->ensure_grad();
      mm_nt(self.grad.data(), nb->value.data(), na->grad.data(), m, n, k, true);
    }
    if (nb->requires_grad) {
      nb->ensure_grad();
      mm_tn(na->value.data(), self.grad.data(), nb->grad.data(), k, m, n, true);
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.ndim() < 1 || wv.ndim() != 2 || xv.dim(xv.ndim() - 1) != wv.dim(0))
    shape_error("linear", xv, wv);
  int in = wv.dim(0), out_dim = wv.dim(1);
  std::int64_t rows = xv.size() / in;
  if (b.defined() && b.value().size() != out_dim) shape_error("linear(bias)", wv, b.value());

  std::vector<int> out_shape = xv.shape();
  out_shape.back() = out_dim;
  Tensor out(out_shape);
  mm_nn(xv.data(), wv.data(), out.data(), static_cast<int>(rows), in, out_dim, false);
  if (b.defined()) {
    const double* bd = b.value().data();
    for (std::int64_t r = 0; r < rows; ++r) {
      double* o = out.data() + r * out_dim;
      for (int j = 0; j < out_dim; ++j) o[j] += bd[j];
    }
  }

  std::vector<NodePtr> inputs{x.node(), w.node()};
  if (b.defined()) inputs.push_back(b.node());
  return make_node("linear", std::move(out), std::move(inputs),
                   [rows, in, out_dim](Node& self) {
                     Node* nx = self.inputs[0].get();
                     Node* nw = self.inputs[1].get();
                     if (nx->requires_grad) {
                       nx->ensure_grad();
                       mm_nt(self.grad.data(), nw->value.data(), nx->grad.data(),
                             static_cast<int>(rows), out_dim, in, true);
                     }
                     if (nw->requires_grad) {
                       nw->ensure_grad();
                       mm_tn(nx->value.data(), self.grad.data(), nw->grad.data(), in,
                             static_cast<int>(rows), out_dim, true);
                     }
                     if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                       Node* nb = self.inputs[2].get();
                       nb->ensure_grad();
                       for (std::int64_t r = 0; r < rows; ++r) {
                         const double* g = self.grad.data() + r * out_dim;
                         for (int j = 0; j < out_dim; ++j) nb->grad[j] += g[j];
                       }
                     }
                   });
}

Var transpose(const Var& a) {
  const Tensor& av = a.value();
  if (av.ndim() != 2) throw std::invalid_argument("transpose: expected matrix, got " + av.shape_str());
  int r = av.dim(0), c = av.dim(1);
  Tensor out({c, r});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at2(j, i) = av.at2(i, j);
  return make_node("transpose", std::move(out), {a.node()}, [r, c](Node& self) {
    Node* na = self.inputs[0].get();
    na->ensure_grad();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) na->grad.at2(i, j) += self.grad.at2(j, i);
  });
}

Var reshape(const Var& a, std::vector<int> new_shape) {
  const Tensor& av = a.value();
  if (shape_size(new_shape) != av.size())
    throw std::invalid_argument("reshape: cannot view " + av.shape_str() + " as " +
                                shape_str(new_shape));
  Tensor out(std::move(new_shape), av.vec());
  return make_node("reshape", std::move(out), {a.node()}, [](Node& self) {
    Node* na = self.inputs[0].get();
    na->ensure_grad();
    for (std::int64_t i = 0; i < na->value.size(); ++i) na->grad[i] += self.grad[i];
  });
}

namespace {

void axis_extents(const std::vector<int>& shape, int axis, std::int64_t* outer,
                  std::int64_t* inner) {
  *outer = 1;
  *inner = 1;
  for (int i = 0; i < axis; ++i) *outer *= shape[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) *inner *= shape[i];
}

}  // namespace

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Tensor& first = parts[0].value();
  int nd = first.ndim();
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd) throw std::invalid_argument("concat: bad axis");
  std::vector<int> out_shape = first.shape();
  int total = 0;
  for (const Var& p : parts) {
    const Tensor& t = p.value();
    if (t.ndim() != nd) shape_error("concat", first, t);
    for (int i = 0; i < nd; ++i)
      if (i != axis && t.dim(i) != first.dim(i)) shape_error("concat", first, t);
    total += t.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = total;

  std::int64_t outer, inner;
  axis_extents(out_shape, axis, &outer, &inner);
  Tensor out(out_shape);
  std::vector<int> dims;
  dims.reserve(parts.size());
  for (const Var& p : parts) dims.push_back(p.value().dim(axis));

  std::int64_t off = 0;
  for (size_t pi = 0; pi < parts.size(); ++pi) {
    const Tensor& t = parts[pi].value();
    std::int64_t block = static_cast<std::int64_t>(dims[pi]) * inner;
    for (std::int64_t o = 0; o < outer; ++o)
      std::memcpy(out.data() + (o * total) * inner + off * inner, t.data() + o * block,
                  static_cast<size_t>(block) * sizeof(double));
    off += dims[pi];
  }

  std::vector<NodePtr> inputs;
  inputs.reserve(parts.size());
  for (const Var& p : parts) inputs.push_back(p.node());
  return make_node("concat", std::move(out), std::move(inputs),
                   [outer, inner, total, dims](Node& self) {
                     std::int64_t off = 0;
                     for (size_t pi = 0; pi < self.inputs.size(); ++pi) {
                       Node* n = self.inputs[pi].get();
                       std::int64_t block = static_cast<std::int64_t>(dims[pi]) * inner;
                       if (n->requires_grad) {
                         n->ensure_grad();
                         for (std::int64_t o = 0; o < outer; ++o) {
                           const double* g = self.grad.data() + (o * total + off) * inner;
                           double* dst = n->grad.data() + o * block;
                           for (std::int64_t i = 0; i < block; ++i) dst[i] += g[i];
                         }
                       }
                       off += dims[pi];
                     }
                   });
}

Var slice(const Var& a, int axis, int start, int len) {
  const Tensor& av = a.value();
  int nd = av.ndim();
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd) throw std::invalid_argument("slice: bad axis");
  int d = av.dim(axis);
  if (start < 0 || len < 0 || start + len > d)
    throw std::invalid_argument("slice: range [" + std::to_string(start) + ", " +
                                std::to_string(start + len) + ") out of bounds for " +
                                av.shape_str());
  std::vector<int> out_shape = av.shape();
  out_shape[static_cast<size_t>(axis)] = len;
  std::int64_t outer, inner;
  axis_extents(av.shape(), axis, &outer, &inner);
  Tensor out(out_shape);
  for (std::int64_t o = 0; o < outer; ++o)
    std::memcpy(out.data() + o * len * inner, av.data() + (o * d + start) * inner,
                static_cast<size_t>(len) * inner * sizeof(double));
  return make_node("slice", std::move(out), {a.node()},
                   [outer, inner, d, start, len](Node& self) {
                     Node* na = self.inputs[0].get();
                     na->ensure_grad();
                     for (std::int64_t o = 0; o < outer; ++o) {
                       const double* g = self.grad.data() + o * len * inner;
                       double* dst = na->grad.data() + (o * d + start) * inner;
                       for (std::int64_t i = 0; i < static_cast<std::int64_t>(len) * inner; ++i)
                         dst[i] += g[i];
                     }
                   });
}

Var gather_rows(const Var& x, std::vector<int> idx) {
  const Tensor& xv = x.value();
  if (xv.ndim() != 2) throw std::invalid_argument("gather_rows: expected matrix, got " + xv.shape_str());
  int r = xv.dim(0), c = xv.dim(1);
  for (int i : idx)
    if (i < 0 || i >= r)
      throw std::invalid_argument("gather_rows: index " + std::to_string(i) + " out of range for " +
                                  xv.shape_str());
  Tensor out({static_cast<int>(idx.size()), c});
  for (size_t k = 0; k < idx.size(); ++k)
    std::memcpy(out.data() + k * c, xv.data() + static_cast<size_t>(idx[k]) * c,
                static_cast<size_t>(c) * sizeof(double));
  return make_node("gather_rows", std::move(out), {x.node()}, [idx, c](Node& self) {
    Node* nx = self.inputs[0].get();
    nx->ensure_grad();
    for (size_t k = 0; k < idx.size(); ++k) {
      const double* g = self.grad.data() + k * c;
      double* dst = nx->grad.data() + static_cast<size_t>(idx[k]) * c;
      for (int j = 0; j < c; ++j) dst[j] += g[j];
    }
  });
}

Var segment_sum(const Var& x, std::vector<int> seg, int n_segments) {
  const Tensor& xv = x.value();
  if (xv.ndim() != 2) throw std::invalid_argument("segment_sum: expected matrix, got " + xv.shape_str());
  int e = xv.dim(0), c = xv.dim(1);
  if (static_cast<int>(seg.size()) != e)
    throw std::invalid_argument("segment_sum: " + std::to_string(seg.size()) + " ids for " +
                                xv.shape_str());
  for (int s : seg)
    if (s < 0 || s >= n_segments) throw std::invalid_argument("segment_sum: id out of range");
  Tensor out({n_segments, c});
  for (int r = 0; r < e; ++r) {
    const double* src = xv.data() + static_cast<size_t>(r) * c;
    double* dst = out.data() + static_cast<size_t>(seg[static_cast<size_t>(r)]) * c;
    for (int j = 0; j < c; ++j) dst[j] += src[j];
  }
  return make_node("segment_sum", std::move(out), {x.node()}, [seg, c](Node& self) {
    Node* nx = self.inputs[0].get();
    nx->ensure_grad();
    for (size_t r = 0; r < seg.size(); ++r) {
      const double* g = self.grad.data() + static_cast<size_t>(seg[r]) * c;
      double* dst = nx->grad.data() + r * c;
      for (int j = 0; j < c; ++j) dst[j] += g[j];
    }
  });
}

Var softmax(const Var& x, int axis) {
  const Tensor& xv = x.value();
  int nd = xv.ndim();
  if (nd == 0) throw std::invalid_argument("softmax: scalar input");
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd) throw std::invalid_argument("softmax: bad axis");
  if (xv.dim(axis) == 0) throw std::invalid_argument("softmax: empty axis");
  if (axis != nd - 1) {
    if (nd != 2) throw std::invalid_argument("softmax: non-last axis supported for matrices only");
    return transpose(softmax(transpose(x), -1));
  }
  int c = xv.dim(nd - 1);
  std::int64_t rows = xv.size() / c;
  Tensor out(xv.shape());
  softmax_rows(xv.data(), out.data(), rows, c);
  return make_node("softmax", std::move(out), {x.node()}, [rows, c](Node& self) {
    Node* nx = self.inputs[0].get();
    nx->ensure_grad();
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * c;
      const double* g = self.grad.data() + r * c;
      double dot = 0.0;
      for (int j = 0; j < c; ++j) dot += y[j] * g[j];
      double* dst = nx->grad.data() + r * c;
      for (int j = 0; j < c; ++j) dst[j] += y[j] * (g[j] - dot);
    }
  });
}

Var conv1d(const Var& x, const Var& kernel, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  if (xv.ndim() != 3 || kv.ndim() != 3 || kv.dim(1) != xv.dim(2))
    shape_error("conv1d", xv, kv);
  int ksz = kv.dim(2);
  if (ksz % 2 == 0) throw std::invalid_argument("conv1d: kernel size must be odd");
  int n = xv.dim(0), s = xv.dim(1), cin = xv.dim(2), cout = kv.dim(0);
  if (bias.defined() && bias.value().size() != cout) shape_error("conv1d(bias)", kv, bias.value());
  int pad = (ksz - 1) / 2;

  Tensor out({n, s, cout});
  const double* bd = bias.defined() ? bias.value().data() : nullptr;
  for (int a = 0; a < n; ++a)
    for (int p = 0; p < s; ++p)
      for (int co = 0; co < cout; ++co) {
        double acc = bd ? bd[co] : 0.0;
        for (int t = 0; t < ksz; ++t) {
          int sp = p + t - pad;
          if (sp < 0 || sp >= s) continue;
          const double* xr = xv.data() + (static_cast<size_t>(a) * s + sp) * cin;
          const double* kr = kv.data() + (static_cast<size_t>(co) * cin) * ksz + t;
          for (int ci = 0; ci < cin; ++ci) acc += kr[static_cast<size_t>(ci) * ksz] * xr[ci];
        }
        out.at3(a, p, co) = acc;
      }

  std::vector<NodePtr> inputs{x.node(), kernel.node()};
  if (bias.defined()) inputs.push_back(bias.node());
  return make_node("conv1d", std::move(out), std::move(inputs),
                   [n, s, cin, cout, ksz, pad](Node& self) {
                     Node* nx = self.inputs[0].get();
                     Node* nk = self.inputs[1].get();
                     const Tensor& xv = nx->value;
                     const Tensor& kv = nk->value;
                     if (nx->requires_grad) nx->ensure_grad();
                     if (nk->requires_grad) nk->ensure_grad();
                     Node* nb = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
                     if (nb && nb->requires_grad)
                       nb->ensure_grad();
                     else
                       nb = nullptr;
                     for (int a = 0; a < n; ++a)
                       for (int p = 0; p < s; ++p)
                         for (int co = 0; co < cout; ++co) {
                           double g = self.grad.at3(a, p, co);
                           if (nb) nb->grad[co] += g;
                           for (int t = 0; t < ksz; ++t) {
                             int sp = p + t - pad;
                             if (sp < 0 || sp >= s) continue;
                             for (int ci = 0; ci < cin; ++ci) {
                               std::int64_t ki =
                                   (static_cast<std::int64_t>(co) * cin + ci) * ksz + t;
                               if (nx->requires_grad)
                                 nx->grad.at3(a, sp, ci) += g * kv[ki];
                               if (nk->requires_grad)
                                 nk->grad[ki] += g * xv.at3(a, sp, ci);
                             }
                           }
                         }
                   });
}

Var multihead_attention(const Var& q, const Var& k, const Var& v, int heads) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  if (qv.ndim() != 3 || !qv.same_shape(kv) || !qv.same_shape(vv))
    shape_error("multihead_attention", qv, kv);
  int n = qv.dim(0), s = qv.dim(1), d = qv.dim(2);
  if (heads < 1 || d % heads != 0)
    throw std::invalid_argument("multihead_attention: width " + std::to_string(d) +
                                " not divisible by " + std::to_string(heads) + " heads");
  int dh = d / heads;
  double sc = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor probs({n, heads, s, s});
  Tensor out({n, s, d});
  std::vector<double> row(static_cast<size_t>(s));
  for (int a = 0; a < n; ++a)
    for (int h = 0; h < heads; ++h) {
      int hoff = h * dh;
      for (int i = 0; i < s; ++i) {
        const double* qi = qv.data() + (static_cast<size_t>(a) * s + i) * d + hoff;
        for (int j = 0; j < s; ++j) {
          const double* kj = kv.data() + (static_cast<size_t>(a) * s + j) * d + hoff;
          double dot = 0.0;
          for (int c = 0; c < dh; ++c) dot += qi[c] * kj[c];
          row[static_cast<size_t>(j)] = dot * sc;
        }
        double* pr = probs.data() + ((static_cast<size_t>(a) * heads + h) * s + i) * s;
        softmax_rows(row.data(), pr, 1, s);
        double* oi = out.data() + (static_cast<size_t>(a) * s + i) * d + hoff;
        for (int c = 0; c < dh; ++c) oi[c] = 0.0;
        for (int j = 0; j < s; ++j) {
          const double* vj = vv.data() + (static_cast<size_t>(a) * s + j) * d + hoff;
          double p = pr[j];
          for (int c = 0; c < dh; ++c) oi[c] += p * vj[c];
        }
      }
    }

  auto cached = std::make_shared<Tensor>(std::move(probs));
  return make_node(
      "multihead_attention", std::move(out), {q.node(), k.node(), v.node()},
      [n, s, d, heads, dh, sc, cached](Node& self) {
        Node* nq = self.inputs[0].get();
        Node* nk = self.inputs[1].get();
        Node* nv = self.inputs[2].get();
        for (Node* nn : {nq, nk, nv})
          if (nn->requires_grad) nn->ensure_grad();
        const Tensor& probs = *cached;
        std::vector<double> da(static_cast<size_t>(s)), ds(static_cast<size_t>(s));
        for (int a = 0; a < n; ++a)
          for (int h = 0; h < heads; ++h) {
            int hoff = h * dh;
            for (int i = 0; i < s; ++i) {
              const double* go = self.grad.data() + (static_cast<size_t>(a) * s + i) * d + hoff;
              const double* pr = probs.data() + ((static_cast<size_t>(a) * heads + h) * s + i) * s;
              // dV and dA
              double dot = 0.0;
              for (int j = 0; j < s; ++j) {
                const double* vj = nv->value.data() + (static_cast<size_t>(a) * s + j) * d + hoff;
                double daj = 0.0;
                for (int c = 0; c < dh; ++c) daj += go[c] * vj[c];
                da[static_cast<size_t>(j)] = daj;
                dot += pr[j] * daj;
                if (nv->requires_grad) {
                  double* dv = nv->grad.data() + (static_cast<size_t>(a) * s + j) * d + hoff;
                  double p = pr[j];
                  for (int c = 0; c < dh; ++c) dv[c] += p * go[c];
                }
              }
              // softmax backward, then Q/K
              for (int j = 0; j < s; ++j)
                ds[static_cast<size_t>(j)] = pr[j] * (da[static_cast<size_t>(j)] - dot) * sc;
              const double* qi = nq->value.data() + (static_cast<size_t>(a) * s + i) * d + hoff;
              double* dq = nq->requires_grad
                               ? nq->grad.data() + (static_cast<size_t>(a) * s + i) * d + hoff
                               : nullptr;
              for (int j = 0; j < s; ++j) {
                double dsj = ds[static_cast<size_t>(j)];
                const double* kj = nk->value.data() + (static_cast<size_t>(a) * s + j) * d + hoff;
                if (dq)
                  for (int c = 0; c < dh; ++c) dq[c] += dsj * kj[c];
                if (nk->requires_grad) {
                  double* dk = nk->grad.data() + (static_cast<size_t>(a) * s + j) * d + hoff;
                  for (int c = 0; c < dh; ++c) dk[c] += dsj * qi[c];
                }
              }
            }
          }
      });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Tensor& xv = x.value();
  if (xv.ndim() < 1) throw std::invalid_argument("layer_norm: scalar input");
  int c = xv.dim(xv.ndim() - 1);
  if (gamma.value().size() != c || beta.value().size() != c)
    shape_error("layer_norm", xv, gamma.value());
  std::int64_t rows = xv.size() / c;

  Tensor out(xv.shape());
  Tensor mean_t({static_cast<int>(rows)});
  Tensor inv_t({static_cast<int>(rows)});
  const double* g = gamma.value().data();
  const double* b = beta.value().data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * c;
    double m = 0.0;
    for (int j = 0; j < c; ++j) m += xr[j];
    m /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) var += (xr[j] - m) * (xr[j] - m);
    var /= c;
    double inv = 1.0 / std::sqrt(var + eps);
    mean_t[r] = m;
    inv_t[r] = inv;
    double* o = out.data() + r * c;
    for (int j = 0; j < c; ++j) o[j] = g[j] * ((xr[j] - m) * inv) + b[j];
  }

  auto mean_c = std::make_shared<Tensor>(std::move(mean_t));
  auto inv_c = std::make_shared<Tensor>(std::move(inv_t));
  return make_node(
      "layer_norm", std::move(out), {x.node(), gamma.node(), beta.node()},
      [rows, c, mean_c, inv_c](Node& self) {
        Node* nx = self.inputs[0].get();
        Node* ng = self.inputs[1].get();
        Node* nb = self.inputs[2].get();
        for (Node* nn : {nx, ng, nb})
          if (nn->requires_grad) nn->ensure_grad();
        const double* gamma = ng->value.data();
        std::vector<double> dyg(static_cast<size_t>(c)), xhat(static_cast<size_t>(c));
        for (std::int64_t r = 0; r < rows; ++r) {
          const double* xr = nx->value.data() + r * c;
          const double* go = self.grad.data() + r * c;
          double m = (*mean_c)[r], inv = (*inv_c)[r];
          double m1 = 0.0, m2 = 0.0;
          for (int j = 0; j < c; ++j) {
            xhat[static_cast<size_t>(j)] = (xr[j] - m) * inv;
            dyg[static_cast<size_t>(j)] = go[j] * gamma[j];
            m1 += dyg[static_cast<size_t>(j)];
            m2 += dyg[static_cast<size_t>(j)] * xhat[static_cast<size_t>(j)];
          }
          m1 /= c;
          m2 /= c;
          if (nx->requires_grad) {
            double* dx = nx->grad.data() + r * c;
            for (int j = 0; j < c; ++j)
              dx[j] += inv * (dyg[static_cast<size_t>(j)] - m1 - xhat[static_cast<size_t>(j)] * m2);
          }
          if (ng->requires_grad)
            for (int j = 0; j < c; ++j) ng->grad[j] += go[j] * xhat[static_cast<size_t>(j)];
          if (nb->requires_grad)
            for (int j = 0; j < c; ++j) nb->grad[j] += go[j];
        }
      });
}

Var dropout(const Var& x, double p, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0, 1)");
  if (p == 0.0) return x;
  const Tensor& xv = x.value();
  Tensor mask(xv.shape());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double keep = 1.0 - p;
  for (std::int64_t i = 0; i < xv.size(); ++i) mask[i] = u(rng) < keep ? 1.0 / keep : 0.0;
  Tensor out(xv.shape());
  for (std::int64_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * mask[i];
  auto mask_c = std::make_shared<Tensor>(std::move(mask));
  return make_node("dropout", std::move(out), {x.node()}, [mask_c](Node& self) {
    Node* nx = self.inputs[0].get();
    nx->ensure_grad();
    for (std::int64_t i = 0; i < nx->value.size(); ++i)
      nx->grad[i] += self.grad[i] * (*mask_c)[i];
  });
}

Var sum(const Var& x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (std::int64_t i = 0; i < xv.size(); ++i) s += xv[i];
  return make_node("sum", Tensor::scalar(s), {x.node()}, [](Node& self) {
    Node* nx = self.inputs[0].get();
    nx->ensure_grad();
    double g = self.grad[0];
    for (std::int64_t i = 0; i < nx->value.size(); ++i) nx->grad[i] += g;
  });
}

Var mean(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.size() == 0) throw std::invalid_argument("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(xv.size()));
}

void backward(const Var& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined loss");
  if (loss.value().size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " + loss.value().shape_str());
  NodePtr root = loss.node();
  if (!root->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& top = stack.back();
    Node* n = top.first;
    if (top.second < n->inputs.size()) {
      Node* c = n->inputs[top.second++].get();
      if (c->requires_grad && seen.insert(c).second) stack.emplace_back(c, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

Tensor softmax_values(const Tensor& x, int axis) {
  Var v = softmax(constant(x), axis);
  return v.value();
}

Tensor attention_probs(const Tensor& q, const Tensor& k, int heads) {
  if (q.ndim() != 3 || !q.same_shape(k))
    throw std::invalid_argument("attention_probs: incompatible shapes " + q.shape_str() + " and " +
                                k.shape_str());
  int n = q.dim(0), s = q.dim(1), d = q.dim(2);
  if (heads < 1 || d % heads != 0) throw std::invalid_argument("attention_probs: bad head count");
  int dh = d / heads;
  double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor probs({n, heads, s, s});
  std::vector<double> row(static_cast<size_t>(s));
  for (int a = 0; a < n; ++a)
    for (int h = 0; h < heads; ++h)
      for (int i = 0; i < s; ++i) {
        const double* qi = q.data() + (static_cast<size_t>(a) * s + i) * d + h * dh;
        for (int j = 0; j < s; ++j) {
          const double* kj = k.data() + (static_cast<size_t>(a) * s + j) * d + h * dh;
          double dot = 0.0;
          for (int c = 0; c < dh; ++c) dot += qi[c] * kj[c];
          row[static_cast<size_t>(j)] = dot * sc;
        }
        softmax_rows(row.data(), probs.data() + ((static_cast<size_t>(a) * heads + h) * s + i) * s,
                     1, s);
      }
  return probs;
}

namespace {

double eval_scalar(const VecFn& fn, const std::vector<Tensor>& point) {
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const Tensor& t : point) leaves.push_back(leaf(t, false));
  Var out = fn(leaves);
  if (out.value().size() != 1)
    throw std::invalid_argument("grad_check: fn must be scalar-valued");
  double v = out.value()[0];
  if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite value at evaluated point");
  return v;
}

std::vector<Tensor> autodiff_grads(const VecFn& fn, const std::vector<Tensor>& point) {
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const Tensor& t : point) leaves.push_back(leaf(t, true));
  Var out = fn(leaves);
  if (out.value().size() != 1)
    throw std::invalid_argument("grad_check: fn must be scalar-valued");
  backward(out);
  std::vector<Tensor> grads;
  grads.reserve(leaves.size());
  for (const Var& l : leaves) grads.push_back(l.grad());
  return grads;
}

double check_coord(const VecFn& fn, std::vector<Tensor>& point, size_t ti, std::int64_t c,
                   double eps, double ad_grad) {
  double orig = point[ti][c];
  point[ti][c] = orig + eps;
  double fp = eval_scalar(fn, point);
  point[ti][c] = orig - eps;
  double fm = eval_scalar(fn, point);
  point[ti][c] = orig;
  double fd = (fp - fm) / (2.0 * eps);
  return std::abs(ad_grad - fd) / std::max(1.0, std::abs(fd));
}

}  // namespace

double grad_check(const VecFn& fn, const std::vector<Tensor>& point, double eps) {
  if (eps <= 0) throw std::invalid_argument("grad_check: eps must be positive");
  std::vector<Tensor> grads = autodiff_grads(fn, point);
  std::vector<Tensor> p = point;
  double max_err = 0.0;
  for (size_t ti = 0; ti < p.size(); ++ti)
    for (std::int64_t c = 0; c < p[ti].size(); ++c)
      max_err = std::max(max_err, check_coord(fn, p, ti, c, eps, grads[ti][c]));
  return max_err;
}

double grad_check_sampled(const VecFn& fn, const std::vector<Tensor>& point, double eps,
                          int coords_per_tensor, std::mt19937_64& rng) {
  if (eps <= 0) throw std::invalid_argument("grad_check: eps must be positive");
  std::vector<Tensor> grads = autodiff_grads(fn, point);
  std::vector<Tensor> p = point;
  double max_err = 0.0;
  for (size_t ti = 0; ti < p.size(); ++ti) {
    std::int64_t n = p[ti].size();
    if (n == 0) continue;
    if (n <= coords_per_tensor) {
      for (std::int64_t c = 0; c < n; ++c)
        max_err = std::max(max_err, check_coord(fn, p, ti, c, eps, grads[ti][c]));
      continue;
    }
    std::uniform_int_distribution<std::int64_t> pick(0, n - 1);
    std::unordered_set<std::int64_t> used;
    while (static_cast<int>(used.size()) < coords_per_tensor) {
      std::int64_t c = pick(rng);
      if (!used.insert(c).second) continue;
      max_err = std::max(max_err, check_coord(fn, p, ti, c, eps, grads[ti][c]));
    }
  }
  return max_err;
}

}  // namespace trajpred::ad
