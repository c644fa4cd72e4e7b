#ifndef CSIVA_TENSOR_HPP
#define CSIVA_TENSOR_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "csiva/common.hpp"

// Dense tensors of rank 1..3 with reverse-mode automatic differentiation.
// The computation graph is define-by-run: each op records a node holding its
// forward values; backward() walks the nodes in reverse creation order.
// Everything is single-threaded and reductions run in a fixed order, so a
// fixed seed reproduces results bitwise. Real is double (default) or float.

namespace csiva::num {

struct Shape {
  std::array<int, 3> d{1, 1, 1};
  int rank = 1;

  static Shape vec(int a) { return Shape{{a, 1, 1}, 1}; }
  static Shape mat(int a, int b) { return Shape{{a, b, 1}, 2}; }
  static Shape cube(int a, int b, int c) { return Shape{{a, b, c}, 3}; }

  int64_t size() const {
    int64_t s = 1;
    for (int i = 0; i < rank; ++i) s *= d[i];
    return s;
  }
  int last() const { return d[rank - 1]; }
  // Product of all dimensions except the last: the number of "rows" that
  // last-axis ops (softmax, layer norm, bias add) treat independently.
  int64_t lead() const { return size() / last(); }
  bool operator==(const Shape& o) const { return rank == o.rank && d == o.d; }
  std::string str() const {
    std::string s = "(";
    for (int i = 0; i < rank; ++i) s += (i ? "x" : "") + std::to_string(d[i]);
    return s + ")";
  }
};

enum class Op : uint8_t {
  leaf_const,
  leaf_param,
  reshape,
  add,
  sub,
  mul,
  affine,    // y = r0 * x + r1
  add_vec,   // broadcast vector over the last axis
  mul_vec,
  matmul,    // a: rank 2/3 (leading dims folded), b: rank 2
  bmm,       // batched matmul; i0 != 0 means the second factor is transposed
  transpose01,
  relu,
  leaky_relu,  // slope in r0
  tanh_e,
  sigmoid_e,
  log_e,
  clamp_e,  // [r0, r1]
  softmax_last,
  layer_norm_last,
  concat0,      // along axis 0, same trailing dims
  stack0,       // new leading axis over equal-shape inputs
  concat_last,  // along the last axis, same leading dims
  slice_last,   // [i0, i1) of the last axis
  slice_rows,   // [i0, i1) of axis 0
  slice_cols,   // [i0, i1) of axis 1, rank-3 input
  gather_rows,  // rows of a rank-2 table by index list
  sum_all,
  mean_all,
};

template <class Real>
struct Param {
  std::string name;
  Shape shape;
  std::vector<Real> w;
  std::vector<Real> g;
};

template <class Real>
class Graph;

template <class Real>
struct Tensor {
  Graph<Real>* g = nullptr;
  int id = -1;

  const Shape& shape() const { return g->nodes[id].shape; }
  const std::vector<Real>& val() const { return g->nodes[id].val; }
  Real scalar() const {
    if (shape().size() != 1) throw ShapeError("scalar(): tensor has size > 1");
    return val()[0];
  }
};

template <class Real>
class Graph {
 public:
  struct Node {
    Op op = Op::leaf_const;
    Shape shape;
    std::vector<Real> val;
    std::vector<Real> grad;  // allocated on first use
    int a = -1, b = -1;      // parent node ids
    int i0 = 0, i1 = 0;      // slice bounds / flags
    Real r0 = 0, r1 = 0;     // scalar op arguments
    Param<Real>* param = nullptr;
    std::vector<int> extra;        // additional parents or gather indices
    std::vector<uint8_t> mask;     // softmax: 1 = position may attend
    bool needs_grad = false;
  };

  // When true, parameters are treated as constants: no gradient bookkeeping.
  bool inference = false;
  std::vector<Node> nodes;

  Graph() { nodes.reserve(512); }

  Node& node(int id) { return nodes[id]; }
  const Node& node(int id) const { return nodes[id]; }

  Tensor<Real> make(Op op, Shape shape, int a, int b) {
    Node n;
    n.op = op;
    n.shape = shape;
    n.a = a;
    n.b = b;
    n.val.resize(static_cast<size_t>(shape.size()));
    n.needs_grad = (a >= 0 && nodes[a].needs_grad) || (b >= 0 && nodes[b].needs_grad);
    nodes.push_back(std::move(n));
    return Tensor<Real>{this, static_cast<int>(nodes.size()) - 1};
  }

  // All forward values must stay finite; a NaN or Inf here is a hard error.
  void check_finite(const Tensor<Real>& t, const char* what) {
    for (Real v : nodes[t.id].val)
      if (!std::isfinite(static_cast<double>(v)))
        throw NumericError(std::string("non-finite value out of ") + what);
  }

  void ensure_grad(int id) {
    Node& n = nodes[id];
    if (n.grad.empty()) n.grad.assign(n.val.size(), Real(0));
  }

  void backward(const Tensor<Real>& loss);
};

// ----- kernels -----
// Row-major, accumulating: C (M x N) += A * B with the noted layouts.

namespace detail {

template <class Real>
void gemm_nn(int M, int N, int K, const Real* A, const Real* B, Real* C) {
  for (int i = 0; i < M; ++i)
    for (int k = 0; k < K; ++k) {
      Real a = A[static_cast<size_t>(i) * K + k];
      const Real* brow = B + static_cast<size_t>(k) * N;
      Real* crow = C + static_cast<size_t>(i) * N;
      for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
    }
}

// A is M x K, B stored N x K: C += A * B^T.
template <class Real>
void gemm_nt(int M, int N, int K, const Real* A, const Real* B, Real* C) {
  for (int i = 0; i < M; ++i) {
    const Real* arow = A + static_cast<size_t>(i) * K;
    for (int j = 0; j < N; ++j) {
      const Real* brow = B + static_cast<size_t>(j) * K;
      Real s = 0;
      for (int k = 0; k < K; ++k) s += arow[k] * brow[k];
      C[static_cast<size_t>(i) * N + j] += s;
    }
  }
}

// A stored K x M (logical A^T is M x K): C += A^T * B.
template <class Real>
void gemm_tn(int M, int N, int K, const Real* A, const Real* B, Real* C) {
  for (int k = 0; k < K; ++k) {
    const Real* arow = A + static_cast<size_t>(k) * M;
    const Real* brow = B + static_cast<size_t>(k) * N;
    for (int i = 0; i < M; ++i) {
      Real a = arow[i];
      Real* crow = C + static_cast<size_t>(i) * N;
      for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
    }
  }
}

template <class Real>
constexpr Real layer_norm_eps() {
  if constexpr (sizeof(Real) == 8)
    return Real(1e-8);
  else
    return Real(1e-5);
}

}  // namespace detail

// ----- leaf constructors -----

template <class Real>
Tensor<Real> constant(Graph<Real>& g, Shape shape, const Real* data) {
  Tensor<Real> t = g.make(Op::leaf_const, shape, -1, -1);
  std::copy(data, data + shape.size(), g.node(t.id).val.begin());
  g.check_finite(t, "constant");
  return t;
}

template <class Real>
Tensor<Real> constant(Graph<Real>& g, Shape shape, const std::vector<Real>& data) {
  if (static_cast<int64_t>(data.size()) != shape.size())
    throw ShapeError("constant: data size does not match shape " + shape.str());
  return constant(g, shape, data.data());
}

template <class Real>
Tensor<Real> zeros(Graph<Real>& g, Shape shape) {
  Tensor<Real> t = g.make(Op::leaf_const, shape, -1, -1);
  return t;
}

template <class Real>
Tensor<Real> scalar_const(Graph<Real>& g, Real v) {
  Tensor<Real> t = g.make(Op::leaf_const, Shape::vec(1), -1, -1);
  g.node(t.id).val[0] = v;
  g.check_finite(t, "constant");
  return t;
}

template <class Real>
Tensor<Real> leaf(Graph<Real>& g, Param<Real>& p) {
  Tensor<Real> t = g.make(Op::leaf_param, p.shape, -1, -1);
  typename Graph<Real>::Node& n = g.node(t.id);
  n.val = p.w;
  n.param = &p;
  n.needs_grad = !g.inference;
  return t;
}

// ----- ops -----

template <class Real>
Tensor<Real> reshape(Tensor<Real> x, Shape shape) {
  if (shape.size() != x.shape().size())
    throw ShapeError("reshape: size mismatch " + x.shape().str() + " -> " + shape.str());
  Graph<Real>& g = *x.g;
  Tensor<Real> t = g.make(Op::reshape, shape, x.id, -1);
  g.node(t.id).val = g.node(x.id).val;
  return t;
}

namespace detail {

template <class Real>
Tensor<Real> binary_same_shape(Op op, Tensor<Real> a, Tensor<Real> b, const char* what) {
  if (!(a.shape() == b.shape()))
    throw ShapeError(std::string(what) + ": shapes differ " + a.shape().str() + " vs " +
                     b.shape().str());
  Graph<Real>& g = *a.g;
  Tensor<Real> t = g.make(op, a.shape(), a.id, b.id);
  const auto& av = g.node(a.id).val;
  const auto& bv = g.node(b.id).val;
  auto& out = g.node(t.id).val;
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = op == Op::add ? av[i] + bv[i] : op == Op::sub ? av[i] - bv[i] : av[i] * bv[i];
  g.check_finite(t, what);
  return t;
}

}  // namespace detail

template <class Real>
Tensor<Real> add(Tensor<Real> a, Tensor<Real> b) {
  return detail::binary_same_shape(Op::add, a, b, "add");
}
template <class Real>
Tensor<Real> sub(Tensor<Real> a, Tensor<Real> b) {
  return detail::binary_same_shape(Op::sub, a, b, "sub");
}
template <class Real>
Tensor<Real> mul(Tensor<Real> a, Tensor<Real> b) {
  return detail::binary_same_shape(Op::mul, a, b, "mul");
}

template <class Real>
Tensor<Real> affine(Tensor<Real> x, Real alpha, Real beta) {
  Graph<Real>& g = *x.g;
  Tensor<Real> t = g.make(Op::affine, x.shape(), x.id, -1);
  g.node(t.id).r0 = alpha;
  g.node(t.id).r1 = beta;
  const auto& xv = g.node(x.id).val;
  auto& out = g.node(t.id).val;
  for (size_t i = 0; i < out.size(); ++i) out[i] = alpha * xv[i] + beta;
  g.check_finite(t, "affine");
  return t;
}

namespace detail {

template <class Real>
Tensor<Real> broadcast_vec(Op op, Tensor<Real> x, Tensor<Real> v, const char* what) {
  if (v.shape().rank != 1 || v.shape().d[0] != x.shape().last())
    throw ShapeError(std::string(what) + ": vector must match the last axis");
  Graph<Real>& g = *x.g;
  Tensor<Real> t = g.make(op, x.shape(), x.id, v.id);
  const auto& xv = g.node(x.id).val;
  const auto& vv = g.node(v.id).val;
  auto& out = g.node(t.id).val;
  int L = x.shape().last();
  for (size_t i = 0; i < out.size(); ++i) {
    Real b = vv[i % L];
    out[i] = op == Op::add_vec ? xv[i] + b : xv[i] * b;
  }
  g.check_finite(t, what);
  return t;
}

}  // namespace detail

template <class Real>
Tensor<Real> add_vec(Tensor<Real> x, Tensor<Real> v) {
  return detail::broadcast_vec(Op::add_vec, x, v, "add_vec");
}
template <class Real>
Tensor<Real> mul_vec(Tensor<Real> x, Tensor<Real> v) {
  return detail::broadcast_vec(Op::mul_vec, x, v, "mul_vec");
}

// a: rank 2 (M x K) or rank 3 with the leading two dims folded into M;
// b: rank 2 (K x N).
template <class Real>
Tensor<Real> matmul(Tensor<Real> a, Tensor<Real> b) {
  if (b.shape().rank != 2) throw ShapeError("matmul: second factor must be rank 2");
  int K = b.shape().d[0], N = b.shape().d[1];
  if (a.shape().last() != K)
    throw ShapeError("matmul: inner dims differ " + a.shape().str() + " vs " + b.shape().str());
  Shape out;
  if (a.shape().rank == 2)
    out = Shape::mat(a.shape().d[0], N);
  else if (a.shape().rank == 3)
    out = Shape::cube(a.shape().d[0], a.shape().d[1], N);
  else
    throw ShapeError("matmul: first factor must be rank 2 or 3");
  Graph<Real>& g = *a.g;
  Tensor<Real> t = g.make(Op::matmul, out, a.id, b.id);
  int M = static_cast<int>(a.shape().lead());
  detail::gemm_nn(M, N, K, g.node(a.id).val.data(), g.node(b.id).val.data(),
                  g.node(t.id).val.data());
  g.check_finite(t, "matmul");
  return t;
}

// Batched matmul over rank-3 tensors: a is B x M x K; b is B x K x N, or
// B x N x K with transpose_b (then y = a * b^T per batch).
template <class Real>
Tensor<Real> bmm(Tensor<Real> a, Tensor<Real> b, bool transpose_b = false) {
  if (a.shape().rank != 3 || b.shape().rank != 3)
    throw ShapeError("bmm: both factors must be rank 3");
  int B = a.shape().d[0], M = a.shape().d[1], K = a.shape().d[2];
  if (b.shape().d[0] != B) throw ShapeError("bmm: batch dims differ");
  int N;
  if (transpose_b) {
    if (b.shape().d[2] != K) throw ShapeError("bmm: inner dims differ (transposed)");
    N = b.shape().d[1];
  } else {
    if (b.shape().d[1] != K) throw ShapeError("bmm: inner dims differ");
    N = b.shape().d[2];
  }
  Graph<Real>& g = *a.g;
  Tensor<Real> t = g.make(Op::bmm, Shape::cube(B, M, N), a.id, b.id);
  g.node(t.id).i0 = transpose_b ? 1 : 0;
  const Real* av = g.node(a.id).val.data();
  const Real* bv = g.node(b.id).val.data();
  Real* yv = g.node(t.id).val.data();
  for (int i = 0; i < B; ++i) {
    const Real* ai = av + static_cast<size_t>(i) * M * K;
    const Real* bi = bv + static_cast<size_t>(i) * (transpose_b ? N * K : K * N);
    Real* yi = yv + static_cast<size_t>(i) * M * N;
    if (transpose_b)
      detail::gemm_nt(M, N, K, ai, bi, yi);
    else
      detail::gemm_nn(M, N, K, ai, bi, yi);
  }
  g.check_finite(t, "bmm");
  return t;
}

// Swaps the first two axes. Rank 2: ordinary transpose.
template <class Real>
Tensor<Real> transpose01(Tensor<Real> x) {
  const Shape& s = x.shape();
  if (s.rank < 2) throw ShapeError("transpose01: needs rank >= 2");
  Shape out = s;
  std::swap(out.d[0], out.d[1]);
  Graph<Real>& g = *x.g;
  Tensor<Real> t = g.make(Op::transpose01, out, x.id, -1);
  const Real* xv = g.node(x.id).val.data();
  Real* yv = g.node(t.id).val.data();
  int A = s.d[0], B = s.d[1];
  int H = s.rank == 3 ? s.d[2] : 1;
  for (int i = 0; i < A; ++i)
    for (int j = 0; j < B; ++j)
      std::copy(xv + (static_cast<size_t>(i) * B + j) * H,
                xv + (static_cast<size_t>(i) * B + j) * H + H,
                yv + (static_cast<size_t>(j) * A + i) * H);
  return t;
}

namespace detail {

template <class Real, class F>
Tensor<Real> unary_elementwise(Op op, Tensor<Real> x, const char* what, F f, Real r0 = 0,
                               Real r1 = 0) {
  Graph<Real>& g = *x.g;
  Tensor<Real> t = g.make(op, x.shape(), x.id, -1);
  g.node(t.id).r0 = r0;
  g.node(t.id).r1 = r1;
  const auto& xv = g.node(x.id).val;
  auto& out = g.node(t.id).val;
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  g.check_finite(t, what);
  return t;
}

}  // namespace detail

template <class Real>
Tensor<Real> relu(Tensor<Real> x) {
  return detail::unary_elementwise(Op::relu, x, "relu",
                                   [](Real v) { return v > Real(0) ? v : Real(0); });
}

template <class Real>
Tensor<Real> leaky_relu(Tensor<Real> x, Real slope) {
  return detail::unary_elementwise(
      Op::leaky_relu, x, "leaky_relu", [slope](Real v) { return v > Real(0) ? v : slope * v; },
      slope);
}

template <class Real>
Tensor<Real> tanh_t(Tensor<Real> x) {
  return detail::unary_elementwise(Op::tanh_e, x, "tanh",
                                   [](Real v) { return std::tanh(v); });
}

template <class Real>
Tensor<Real> sigmoid(Tensor<Real> x) {
  return detail::unary_elementwise(Op::sigmoid_e, x, "sigmoid", [](Real v) {
    return v >= Real(0) ? Real(1) / (Real(1) + std::exp(-v))
                        : Real(1) - Real(1) / (Real(1) + std::exp(v));
  });
}

template <class Real>
Tensor<Real> log_t(Tensor<Real> x) {
  return detail::unary_elementwise(Op::log_e, x, "log", [](Real v) { return std::log(v); });
}

template <class Real>
Tensor<Real> clamp(Tensor<Real> x, Real lo, Real hi) {
  return detail::unary_elementwise(
      Op::clamp_e, x, "clamp",
      [lo, hi](Real v) { return v < lo ? lo : (v > hi ? hi : v); }, lo, hi);
}

// Softmax over the last axis. The optional mask has the shape of the last two
// axes (rows repeat across any leading batch); entries with mask 0 receive
// exactly zero weight and never influence the normalization.
template <class Real>
Tensor<Real> softmax_last(Tensor<Real> x, const std::vector<uint8_t>* mask = nullptr) {
  Graph<Real>& g = *x.g;
  const Shape& s = x.shape();
  int L = s.last();
  int mask_rows = s.rank >= 2 ? s.d[s.rank - 2] : 1;
  if (mask && static_cast<int64_t>(mask->size()) != static_cast<int64_t>(mask_rows) * L)
    throw ShapeError("softmax_last: mask must cover the last two axes");
  Tensor<Real> t = g.make(Op::softmax_last, s, x.id, -1);
  if (mask) g.node(t.id).mask = *mask;
  const Real* xv = g.node(x.id).val.data();
  Real* yv = g.node(t.id).val.data();
  int64_t rows = s.lead();
  const uint8_t* mk = mask ? g.node(t.id).mask.data() : nullptr;
  for (int64_t r = 0; r < rows; ++r) {
    const Real* xr = xv + r * L;
    Real* yr = yv + r * L;
    const uint8_t* mr = mk ? mk + (r % mask_rows) * L : nullptr;
    Real mx = Real(0);
    bool any = false;
    for (int j = 0; j < L; ++j)
      if (!mr || mr[j]) {
        mx = any ? std::max(mx, xr[j]) : xr[j];
        any = true;
      }
    if (!any) throw NumericError("softmax_last: a row is fully masked");
    Real sum = 0;
    for (int j = 0; j < L; ++j) {
      if (mr && !mr[j]) {
        yr[j] = 0;
      } else {
        yr[j] = std::exp(xr[j] - mx);
        sum += yr[j];
      }
    }
    for (int j = 0; j < L; ++j) yr[j] /= sum;
  }
  g.check_finite(t, "softmax_last");
  return t;
}

// Normalizes the last axis to zero mean and unit variance (no affine part;
// scale and shift are separate parameters applied by the caller).
template <class Real>
Tensor<Real> layer_norm_last(Tensor<Real> x) {
  Graph<Real>& g = *x.g;
  const Shape& s = x.shape();
  int L = s.last();
  if (L < 2) throw ShapeError("layer_norm_last: last axis must have >= 2 entries");
  Tensor<Real> t = g.make(Op::layer_norm_last, s, x.id, -1);
  const Real* xv = g.node(x.id).val.data();
  Real* yv = g.node(t.id).val.data();
  int64_t rows = s.lead();
  const Real eps = detail::layer_norm_eps<Real>();
  for (int64_t r = 0; r < rows; ++r) {
    const Real* xr = xv + r * L;
    Real* yr = yv + r * L;
    Real m = 0;
    for (int j = 0; j < L; ++j) m += xr[j];
    m /= L;
    Real v = 0;
    for (int j = 0; j < L; ++j) v += (xr[j] - m) * (xr[j] - m);
    v /= L;
    Real inv = Real(1) / std::sqrt(v + eps);
    for (int j = 0; j < L; ++j) yr[j] = (xr[j] - m) * inv;
  }
  g.check_finite(t, "layer_norm_last");
  return t;
}

namespace detail {

template <class Real>
Tensor<Real> concat_flat(Op op, const std::vector<Tensor<Real>>& xs, Shape out, const char* what) {
  Graph<Real>& g = *xs[0].g;
  Tensor<Real> t = g.make(op, out, xs[0].id, xs.size() > 1 ? xs[1].id : -1);
  auto& n = g.node(t.id);
  for (size_t i = 2; i < xs.size(); ++i) n.extra.push_back(xs[i].id);
  for (const Tensor<Real>& x : xs) n.needs_grad = n.needs_grad || g.node(x.id).needs_grad;
  Real* out_p = n.val.data();
  for (const Tensor<Real>& x : xs) {
    const auto& v = g.node(x.id).val;
    std::copy(v.begin(), v.end(), out_p);
    out_p += v.size();
  }
  (void)what;
  return t;
}

}  // namespace detail

// Concatenates along axis 0; trailing dimensions must agree.
template <class Real>
Tensor<Real> concat0(const std::vector<Tensor<Real>>& xs) {
  if (xs.empty()) throw ShapeError("concat0: no inputs");
  Shape first = xs[0].shape();
  int total = 0;
  for (const Tensor<Real>& x : xs) {
    const Shape& s = x.shape();
    if (s.rank != first.rank) throw ShapeError("concat0: rank mismatch");
    for (int i = 1; i < s.rank; ++i)
      if (s.d[i] != first.d[i]) throw ShapeError("concat0: trailing dims differ");
    total += s.d[0];
  }
  Shape out = first;
  out.d[0] = total;
  return detail::concat_flat(Op::concat0, xs, out, "concat0");
}

// Stacks equal-shape tensors along a new leading axis.
template <class Real>
Tensor<Real> stack0(const std::vector<Tensor<Real>>& xs) {
  if (xs.empty()) throw ShapeError("stack0: no inputs");
  const Shape& s = xs[0].shape();
  if (s.rank >= 3) throw ShapeError("stack0: result would exceed rank 3");
  for (const Tensor<Real>& x : xs)
    if (!(x.shape() == s)) throw ShapeError("stack0: inputs must share one shape");
  Shape out;
  out.rank = s.rank + 1;
  out.d[0] = static_cast<int>(xs.size());
  for (int i = 0; i < s.rank; ++i) out.d[i + 1] = s.d[i];
  return detail::concat_flat(Op::stack0, xs, out, "stack0");
}

// Concatenates along the last axis; leading dimensions must agree.
template <class Real>
Tensor<Real> concat_last(const std::vector<Tensor<Real>>& xs) {
  if (xs.empty()) throw ShapeError("concat_last: no inputs");
  Shape first = xs[0].shape();
  int total = 0;
  for (const Tensor<Real>& x : xs) {
    const Shape& s = x.shape();
    if (s.rank != first.rank) throw ShapeError("concat_last: rank mismatch");
    for (int i = 0; i + 1 < s.rank; ++i)
      if (s.d[i] != first.d[i]) throw ShapeError("concat_last: leading dims differ");
    total += s.last();
  }
  Shape out = first;
  out.d[out.rank - 1] = total;
  Graph<Real>& g = *xs[0].g;
  Tensor<Real> t = g.make(Op::concat_last, out, xs[0].id, xs.size() > 1 ? xs[1].id : -1);
  auto& n = g.node(t.id);
  for (size_t i = 2; i < xs.size(); ++i) n.extra.push_back(xs[i].id);
  for (const Tensor<Real>& x : xs) n.needs_grad = n.needs_grad || g.node(x.id).needs_grad;
  int64_t rows = out.lead();
  int off = 0;
  for (const Tensor<Real>& x : xs) {
    int L = x.shape().last();
    const Real* xv = g.node(x.id).val.data();
    Real* yv = n.val.data();
    for (int64_t r = 0; r < rows; ++r)
      std::copy(xv + r * L, xv + (r + 1) * L, yv + r * out.last() + off);
    off += L;
  }
  return t;
}

template <class Real>
Tensor<Real> slice_last(Tensor<Real> x, int lo, int hi) {
  const Shape& s = x.shape();
  if (lo < 0 || hi > s.last() || lo >= hi) throw ShapeError("slice_last: bad range");
  Shape out = s;
  out.d[out.rank - 1] = hi - lo;
  Graph<Real>& g = *x.g;
  Tensor<Real> t = g.make(Op::slice_last, out, x.id, -1);
  g.node(t.id).i0 = lo;
  g.node(t.id).i1 = hi;
  const Real* xv = g.node(x.id).val.data();
  Real* yv = g.node(t.id).val.data();
  int L = s.last(), W = hi - lo;
  int64_t rows = s.lead();
  for (int64_t r = 0; r < rows; ++r)
    std::copy(xv + r * L + lo, xv + r * L + hi, yv + r * W);
  return t;
}

template <class Real>
Tensor<Real> slice_rows(Tensor<Real> x, int lo, int hi) {
  const Shape& s = x.shape();
  if (lo < 0 || hi > s.d[0] || lo >= hi) throw ShapeError("slice_rows: bad range");
  Shape out = s;
  out.d[0] = hi - lo;
  Graph<Real>& g = *x.g;
  Tensor<Real> t = g.make(Op::slice_rows, out, x.id, -1);
  g.node(t.id).i0 = lo;
  g.node(t.id).i1 = hi;
  int64_t stride = s.size() / s.d[0];
  const Real* xv = g.node(x.id).val.data();
  std::copy(xv + lo * stride, xv + hi * stride, g.node(t.id).val.data());
  return t;
}

template <class Real>
Tensor<Real> slice_cols(Tensor<Real> x, int lo, int hi) {
  const Shape& s = x.shape();
  if (s.rank != 3) throw ShapeError("slice_cols: input must be rank 3");
  if (lo < 0 || hi > s.d[1] || lo >= hi) throw ShapeError("slice_cols: bad range");
  Shape out = Shape::cube(s.d[0], hi - lo, s.d[2]);
  Graph<Real>& g = *x.g;
  Tensor<Real> t = g.make(Op::slice_cols, out, x.id, -1);
  g.node(t.id).i0 = lo;
  g.node(t.id).i1 = hi;
  const Real* xv = g.node(x.id).val.data();
  Real* yv = g.node(t.id).val.data();
  int B = s.d[0], M = s.d[1], H = s.d[2], W = hi - lo;
  for (int b = 0; b < B; ++b)
    std::copy(xv + (static_cast<size_t>(b) * M + lo) * H,
              xv + (static_cast<size_t>(b) * M + hi) * H,
              yv + static_cast<size_t>(b) * W * H);
  return t;
}

// Selects rows of a rank-2 table; gradient scatters back by index.
template <class Real>
Tensor<Real> gather_rows(Tensor<Real> table, const std::vector<int>& idx) {
  const Shape& s = table.shape();
  if (s.rank != 2) throw ShapeError("gather_rows: table must be rank 2");
  for (int i : idx)
    if (i < 0 || i >= s.d[0]) throw ShapeError("gather_rows: index out of range");
  Graph<Real>& g = *table.g;
  Tensor<Real> t = g.make(Op::gather_rows, Shape::mat(static_cast<int>(idx.size()), s.d[1]),
                          table.id, -1);
  auto& n = g.node(t.id);
  n.extra = idx;
  int H = s.d[1];
  const Real* tv = g.node(table.id).val.data();
  for (size_t r = 0; r < idx.size(); ++r)
    std::copy(tv + static_cast<size_t>(idx[r]) * H, tv + static_cast<size_t>(idx[r] + 1) * H,
              n.val.data() + r * H);
  return t;
}

template <class Real>
Tensor<Real> sum_all(Tensor<Real> x) {
  Graph<Real>& g = *x.g;
  Tensor<Real> t = g.make(Op::sum_all, Shape::vec(1), x.id, -1);
  Real s = 0;
  for (Real v : g.node(x.id).val) s += v;
  g.node(t.id).val[0] = s;
  g.check_finite(t, "sum_all");
  return t;
}

template <class Real>
Tensor<Real> mean_all(Tensor<Real> x) {
  Graph<Real>& g = *x.g;
  Tensor<Real> t = g.make(Op::mean_all, Shape::vec(1), x.id, -1);
  Real s = 0;
  for (Real v : g.node(x.id).val) s += v;
  g.node(t.id).val[0] = s / static_cast<Real>(g.node(x.id).val.size());
  g.check_finite(t, "mean_all");
  return t;
}

// softmax(q k^T / sqrt(d_k)) v with an optional attend-allowed mask applied
// before the softmax (disallowed scores act as -infinity).
template <class Real>
Tensor<Real> scaled_dot_attention(Tensor<Real> q, Tensor<Real> k, Tensor<Real> v,
                                  const std::vector<uint8_t>* mask = nullptr) {
  bool two_d = q.shape().rank == 2;
  if (two_d) {
    q = reshape(q, Shape::cube(1, q.shape().d[0], q.shape().d[1]));
    k = reshape(k, Shape::cube(1, k.shape().d[0], k.shape().d[1]));
    v = reshape(v, Shape::cube(1, v.shape().d[0], v.shape().d[1]));
  }
  int dk = q.shape().d[2];
  Tensor<Real> scores = affine(bmm(q, k, true), Real(1.0 / std::sqrt(double(dk))), Real(0));
  Tensor<Real> w = softmax_last(scores, mask);
  Tensor<Real> out = bmm(w, v);
  if (two_d) out = reshape(out, Shape::mat(out.shape().d[1], out.shape().d[2]));
  return out;
}

// ----- backward -----

template <class Real>
void Graph<Real>::backward(const Tensor<Real>& loss) {
  if (inference) throw UsageError("backward: graph is in inference mode");
  if (loss.shape().size() != 1) throw UsageError("backward: loss must be a scalar");
  if (!nodes[loss.id].needs_grad)
    throw UsageError("backward: loss does not depend on any parameter");
  ensure_grad(loss.id);
  nodes[loss.id].grad[0] = Real(1);

  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    const Real* gy = n.grad.data();
    int64_t sz = static_cast<int64_t>(n.val.size());
    auto gin = [&](int pid) -> Real* {
      ensure_grad(pid);
      return nodes[pid].grad.data();
    };
    auto parent_needs = [&](int pid) { return pid >= 0 && nodes[pid].needs_grad; };

    switch (n.op) {
      case Op::leaf_const:
        break;
      case Op::leaf_param: {
        Real* pg = n.param->g.data();
        for (int64_t i = 0; i < sz; ++i) pg[i] += gy[i];
        break;
      }
      case Op::reshape: {
        if (!parent_needs(n.a)) break;
        Real* ga = gin(n.a);
        for (int64_t i = 0; i < sz; ++i) ga[i] += gy[i];
        break;
      }
      case Op::add:
      case Op::sub: {
        if (parent_needs(n.a)) {
          Real* ga = gin(n.a);
          for (int64_t i = 0; i < sz; ++i) ga[i] += gy[i];
        }
        if (parent_needs(n.b)) {
          Real* gb = gin(n.b);
          if (n.op == Op::add)
            for (int64_t i = 0; i < sz; ++i) gb[i] += gy[i];
          else
            for (int64_t i = 0; i < sz; ++i) gb[i] -= gy[i];
        }
        break;
      }
      case Op::mul: {
        const Real* av = nodes[n.a].val.data();
        const Real* bv = nodes[n.b].val.data();
        if (parent_needs(n.a)) {
          Real* ga = gin(n.a);
          for (int64_t i = 0; i < sz; ++i) ga[i] += gy[i] * bv[i];
        }
        if (parent_needs(n.b)) {
          Real* gb = gin(n.b);
          for (int64_t i = 0; i < sz; ++i) gb[i] += gy[i] * av[i];
        }
        break;
      }
      case Op::affine: {
        if (!parent_needs(n.a)) break;
        Real* ga = gin(n.a);
        for (int64_t i = 0; i < sz; ++i) ga[i] += n.r0 * gy[i];
        break;
      }
      case Op::add_vec:
      case Op::mul_vec: {
        int L = n.shape.last();
        const Real* xv = nodes[n.a].val.data();
        const Real* vv = nodes[n.b].val.data();
        if (parent_needs(n.a)) {
          Real* ga = gin(n.a);
          if (n.op == Op::add_vec)
            for (int64_t i = 0; i < sz; ++i) ga[i] += gy[i];
          else
            for (int64_t i = 0; i < sz; ++i) ga[i] += gy[i] * vv[i % L];
        }
        if (parent_needs(n.b)) {
          Real* gb = gin(n.b);
          if (n.op == Op::add_vec)
            for (int64_t i = 0; i < sz; ++i) gb[i % L] += gy[i];
          else
            for (int64_t i = 0; i < sz; ++i) gb[i % L] += gy[i] * xv[i];
        }
        break;
      }
      case Op::matmul: {
        int K = nodes[n.b].shape.d[0], N = nodes[n.b].shape.d[1];
        int M = static_cast<int>(nodes[n.a].shape.lead());
        if (parent_needs(n.a))
          detail::gemm_nt(M, K, N, gy, nodes[n.b].val.data(), gin(n.a));
        if (parent_needs(n.b))
          detail::gemm_tn(K, N, M, nodes[n.a].val.data(), gy, gin(n.b));
        break;
      }
      case Op::bmm: {
        bool tb = n.i0 != 0;
        int B = nodes[n.a].shape.d[0];
        int M = nodes[n.a].shape.d[1], K = nodes[n.a].shape.d[2];
        int N = n.shape.d[2];
        const Real* av = nodes[n.a].val.data();
        const Real* bv = nodes[n.b].val.data();
        Real* ga = parent_needs(n.a) ? gin(n.a) : nullptr;
        Real* gb = parent_needs(n.b) ? gin(n.b) : nullptr;
        for (int i = 0; i < B; ++i) {
          const Real* gyi = gy + static_cast<size_t>(i) * M * N;
          const Real* ai = av + static_cast<size_t>(i) * M * K;
          const Real* bi = bv + static_cast<size_t>(i) * (tb ? N * K : K * N);
          if (!tb) {
            if (ga) detail::gemm_nt(M, K, N, gyi, bi, ga + static_cast<size_t>(i) * M * K);
            if (gb) detail::gemm_tn(K, N, M, ai, gyi, gb + static_cast<size_t>(i) * K * N);
          } else {
            if (ga) detail::gemm_nn(M, K, N, gyi, bi, ga + static_cast<size_t>(i) * M * K);
            if (gb) detail::gemm_tn(N, K, M, gyi, ai, gb + static_cast<size_t>(i) * N * K);
          }
        }
        break;
      }
      case Op::transpose01: {
        if (!parent_needs(n.a)) break;
        Real* ga = gin(n.a);
        const Shape& s = nodes[n.a].shape;
        int A = s.d[0], B = s.d[1];
        int H = s.rank == 3 ? s.d[2] : 1;
        for (int i = 0; i < A; ++i)
          for (int j = 0; j < B; ++j) {
            const Real* src = gy + (static_cast<size_t>(j) * A + i) * H;
            Real* dst = ga + (static_cast<size_t>(i) * B + j) * H;
            for (int h = 0; h < H; ++h) dst[h] += src[h];
          }
        break;
      }
      case Op::relu: {
        if (!parent_needs(n.a)) break;
        Real* ga = gin(n.a);
        const Real* xv = nodes[n.a].val.data();
        for (int64_t i = 0; i < sz; ++i)
          if (xv[i] > Real(0)) ga[i] += gy[i];
        break;
      }
      case Op::leaky_relu: {
        if (!parent_needs(n.a)) break;
        Real* ga = gin(n.a);
        const Real* xv = nodes[n.a].val.data();
        for (int64_t i = 0; i < sz; ++i) ga[i] += xv[i] > Real(0) ? gy[i] : n.r0 * gy[i];
        break;
      }
      case Op::tanh_e: {
        if (!parent_needs(n.a)) break;
        Real* ga = gin(n.a);
        const Real* yv = n.val.data();
        for (int64_t i = 0; i < sz; ++i) ga[i] += gy[i] * (Real(1) - yv[i] * yv[i]);
        break;
      }
      case Op::sigmoid_e: {
        if (!parent_needs(n.a)) break;
        Real* ga = gin(n.a);
        const Real* yv = n.val.data();
        for (int64_t i = 0; i < sz; ++i) ga[i] += gy[i] * yv[i] * (Real(1) - yv[i]);
        break;
      }
      case Op::log_e: {
        if (!parent_needs(n.a)) break;
        Real* ga = gin(n.a);
        const Real* xv = nodes[n.a].val.data();
        for (int64_t i = 0; i < sz; ++i) ga[i] += gy[i] / xv[i];
        break;
      }
      case Op::clamp_e: {
        if (!parent_needs(n.a)) break;
        Real* ga = gin(n.a);
        const Real* xv = nodes[n.a].val.data();
        for (int64_t i = 0; i < sz; ++i)
          if (xv[i] > n.r0 && xv[i] < n.r1) ga[i] += gy[i];
        break;
      }
      case Op::softmax_last: {
        if (!parent_needs(n.a)) break;
        Real* ga = gin(n.a);
        const Real* yv = n.val.data();
        int L = n.shape.last();
        int64_t rows = n.shape.lead();
        for (int64_t r = 0; r < rows; ++r) {
          const Real* yr = yv + r * L;
          const Real* gr = gy + r * L;
          Real dot = 0;
          for (int j = 0; j < L; ++j) dot += gr[j] * yr[j];
          Real* gar = ga + r * L;
          for (int j = 0; j < L; ++j) gar[j] += yr[j] * (gr[j] - dot);
        }
        break;
      }
      case Op::layer_norm_last: {
        if (!parent_needs(n.a)) break;
        Real* ga = gin(n.a);
        const Real* xv = nodes[n.a].val.data();
        const Real* yv = n.val.data();
        int L = n.shape.last();
        int64_t rows = n.shape.lead();
        const Real eps = detail::layer_norm_eps<Real>();
        for (int64_t r = 0; r < rows; ++r) {
          const Real* xr = xv + r * L;
          const Real* yr = yv + r * L;
          const Real* gr = gy + r * L;
          Real m = 0;
          for (int j = 0; j < L; ++j) m += xr[j];
          m /= L;
          Real v = 0;
          for (int j = 0; j < L; ++j) v += (xr[j] - m) * (xr[j] - m);
          v /= L;
          Real inv = Real(1) / std::sqrt(v + eps);
          Real gmean = 0, gdoty = 0;
          for (int j = 0; j < L; ++j) {
            gmean += gr[j];
            gdoty += gr[j] * yr[j];
          }
          gmean /= L;
          gdoty /= L;
          Real* gar = ga + r * L;
          for (int j = 0; j < L; ++j) gar[j] += inv * (gr[j] - gmean - yr[j] * gdoty);
        }
        break;
      }
      case Op::concat0:
      case Op::stack0: {
        int64_t off = 0;
        auto route = [&](int pid) {
          int64_t len = static_cast<int64_t>(nodes[pid].val.size());
          if (nodes[pid].needs_grad) {
            Real* gp = gin(pid);
            for (int64_t i = 0; i < len; ++i) gp[i] += gy[off + i];
          }
          off += len;
        };
        route(n.a);
        if (n.b >= 0) route(n.b);
        for (int pid : n.extra) route(pid);
        break;
      }
      case Op::concat_last: {
        int Lout = n.shape.last();
        int64_t rows = n.shape.lead();
        int off = 0;
        auto route = [&](int pid) {
          int L = nodes[pid].shape.last();
          if (nodes[pid].needs_grad) {
            Real* gp = gin(pid);
            for (int64_t r = 0; r < rows; ++r)
              for (int j = 0; j < L; ++j) gp[r * L + j] += gy[r * Lout + off + j];
          }
          off += L;
        };
        route(n.a);
        if (n.b >= 0) route(n.b);
        for (int pid : n.extra) route(pid);
        break;
      }
      case Op::slice_last: {
        if (!parent_needs(n.a)) break;
        Real* ga = gin(n.a);
        int L = nodes[n.a].shape.last(), W = n.shape.last();
        int64_t rows = n.shape.lead();
        for (int64_t r = 0; r < rows; ++r)
          for (int j = 0; j < W; ++j) ga[r * L + n.i0 + j] += gy[r * W + j];
        break;
      }
      case Op::slice_rows: {
        if (!parent_needs(n.a)) break;
        Real* ga = gin(n.a);
        int64_t stride = nodes[n.a].shape.size() / nodes[n.a].shape.d[0];
        for (int64_t i = 0; i < sz; ++i) ga[n.i0 * stride + i] += gy[i];
        break;
      }
      case Op::slice_cols: {
        if (!parent_needs(n.a)) break;
        Real* ga = gin(n.a);
        const Shape& s = nodes[n.a].shape;
        int M = s.d[1], H = s.d[2], W = n.shape.d[1];
        int B = s.d[0];
        for (int b = 0; b < B; ++b)
          for (int j = 0; j < W; ++j)
            for (int h = 0; h < H; ++h)
              ga[(static_cast<size_t>(b) * M + n.i0 + j) * H + h] +=
                  gy[(static_cast<size_t>(b) * W + j) * H + h];
        break;
      }
      case Op::gather_rows: {
        if (!parent_needs(n.a)) break;
        Real* ga = gin(n.a);
        int H = n.shape.d[1];
        for (size_t r = 0; r < n.extra.size(); ++r)
          for (int h = 0; h < H; ++h)
            ga[static_cast<size_t>(n.extra[r]) * H + h] += gy[r * H + h];
        break;
      }
      case Op::sum_all: {
        if (!parent_needs(n.a)) break;
        Real* ga = gin(n.a);
        int64_t len = static_cast<int64_t>(nodes[n.a].val.size());
        for (int64_t i = 0; i < len; ++i) ga[i] += gy[0];
        break;
      }
      case Op::mean_all: {
        if (!parent_needs(n.a)) break;
        Real* ga = gin(n.a);
        int64_t len = static_cast<int64_t>(nodes[n.a].val.size());
        Real w = gy[0] / static_cast<Real>(len);
        for (int64_t i = 0; i < len; ++i) ga[i] += w;
        break;
      }
    }
  }
}

}  // namespace csiva::num

#endif  // CSIVA_TENSOR_HPP
