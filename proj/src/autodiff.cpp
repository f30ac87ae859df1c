#include "slmvc/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "slmvc/dsp.hpp"

namespace slmvc {

namespace {

std::atomic<int64_t> g_node_id{1};

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using CMapM = Eigen::Map<const EMat>;

std::shared_ptr<Node> make_node(Tensor value, std::vector<std::shared_ptr<Node>> parents) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  n->id = g_node_id.fetch_add(1);
  for (const auto& p : n->parents)
    if (p && p->requires_grad) n->requires_grad = true;
  return n;
}

Var wrap(std::shared_ptr<Node> n) {
  Var v;
  v.node_ = std::move(n);
  return v;
}

void check_defined(const Var& v, const char* op) {
  if (!v.defined()) throw std::invalid_argument(std::string(op) + ": undefined Var");
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.value().shape_str() +
                                " vs " + b.value().shape_str());
}

// Unary elementwise helper: out = f(x), dx += df(x, out) * g.
template <typename FwdF, typename BwdF>
Var unary_op(Var a, FwdF fwd, BwdF dfn) {
  check_defined(a, "unary");
  Tensor out(a.value().shape());
  const double* x = a.value().data();
  double* o = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) o[i] = fwd(x[i]);
  auto node = make_node(std::move(out), {a.node_});
  Node* self = node.get();
  Node* pa = a.node_.get();
  node->backward_fn = [self, pa, dfn]() {
    if (!pa->requires_grad) return;
    Tensor& gx = pa->ensure_grad();
    const double* g = self->grad.data();
    const double* x = pa->value.data();
    const double* o = self->value.data();
    double* d = gx.data();
    for (int64_t i = 0, n = self->value.numel(); i < n; ++i) d[i] += dfn(x[i], o[i]) * g[i];
  };
  return wrap(node);
}

}  // namespace

Var::Var(Tensor value, bool requires_grad) {
  node_ = std::make_shared<Node>();
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
  node_->id = g_node_id.fetch_add(1);
}

const Tensor& Var::grad() const {
  if (!node_ || !node_->has_grad) throw std::runtime_error("Var::grad: no gradient accumulated");
  return node_->grad;
}

double Var::scalar() const {
  if (!node_ || node_->value.numel() != 1) throw std::invalid_argument("Var::scalar: not a scalar");
  return node_->value[0];
}

void Var::zero_grad() const {
  if (node_ && node_->has_grad) node_->grad.fill(0.0);
}

void Var::set_value(const Tensor& v) const {
  if (!node_) throw std::runtime_error("Var::set_value: undefined");
  if (!node_->value.same_shape(v)) throw std::invalid_argument("Var::set_value: shape mismatch");
  node_->value = v;
}

void backward(const Var& root) {
  check_defined(root, "backward");
  if (root.value().numel() != 1) throw std::invalid_argument("backward: root must be scalar");
  // Collect reachable nodes; creation ids give a valid topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.node_.get()};
  seen.insert(root.node_.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p && !seen.count(p.get())) {
        seen.insert(p.get());
        stack.push_back(p.get());
      }
    }
  }
  std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });
  root.node_->ensure_grad();
  root.node_->grad[0] += 1.0;
  for (Node* n : order) {
    if (n->backward_fn && n->requires_grad && n->has_grad) n->backward_fn();
  }
}

Var constant(Tensor t) { return Var(std::move(t), false); }

Var detach(const Var& v) {
  check_defined(v, "detach");
  return Var(v.value(), false);
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var add(Var a, Var b) {
  check_defined(a, "add");
  check_defined(b, "add");
  check_same_shape(a, b, "add");
  Tensor out(a.value().shape());
  const double* xa = a.value().data();
  const double* xb = b.value().data();
  double* o = out.data();
  for (int64_t i = 0, n = out.numel(); i < n; ++i) o[i] = xa[i] + xb[i];
  auto node = make_node(std::move(out), {a.node_, b.node_});
  Node* self = node.get();
  Node* pa = a.node_.get();
  Node* pb = b.node_.get();
  node->backward_fn = [self, pa, pb]() {
    pa->accumulate(self->grad);
    pb->accumulate(self->grad);
  };
  return wrap(node);
}

Var sub(Var a, Var b) {
  check_defined(a, "sub");
  check_defined(b, "sub");
  check_same_shape(a, b, "sub");
  Tensor out(a.value().shape());
  const double* xa = a.value().data();
  const double* xb = b.value().data();
  double* o = out.data();
  for (int64_t i = 0, n = out.numel(); i < n; ++i) o[i] = xa[i] - xb[i];
  auto node = make_node(std::move(out), {a.node_, b.node_});
  Node* self = node.get();
  Node* pa = a.node_.get();
  Node* pb = b.node_.get();
  node->backward_fn = [self, pa, pb]() {
    pa->accumulate(self->grad);
    if (pb->requires_grad) {
      Tensor& gb = pb->ensure_grad();
      const double* g = self->grad.data();
      double* d = gb.data();
      for (int64_t i = 0, n = self->grad.numel(); i < n; ++i) d[i] -= g[i];
    }
  };
  return wrap(node);
}

Var mul(Var a, Var b) {
  check_defined(a, "mul");
  check_defined(b, "mul");
  check_same_shape(a, b, "mul");
  Tensor out(a.value().shape());
  const double* xa = a.value().data();
  const double* xb = b.value().data();
  double* o = out.data();
  for (int64_t i = 0, n = out.numel(); i < n; ++i) o[i] = xa[i] * xb[i];
  auto node = make_node(std::move(out), {a.node_, b.node_});
  Node* self = node.get();
  Node* pa = a.node_.get();
  Node* pb = b.node_.get();
  node->backward_fn = [self, pa, pb]() {
    const double* g = self->grad.data();
    const int64_t n = self->grad.numel();
    if (pa->requires_grad) {
      Tensor& ga = pa->ensure_grad();
      double* d = ga.data();
      const double* vb = pb->value.data();
      for (int64_t i = 0; i < n; ++i) d[i] += vb[i] * g[i];
    }
    if (pb->requires_grad) {
      Tensor& gb = pb->ensure_grad();
      double* d = gb.data();
      const double* va = pa->value.data();
      for (int64_t i = 0; i < n; ++i) d[i] += va[i] * g[i];
    }
  };
  return wrap(node);
}

Var scale(Var a, double c) {
  return unary_op(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary_op(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var tanh_v(Var a) {
  return unary_op(a, [](double x) { return std::tanh(x); },
                  [](double, double o) { return 1.0 - o * o; });
}

Var leaky_relu(Var a, double slope) {
  return unary_op(a, [slope](double x) { return x >= 0 ? x : slope * x; },
                  [slope](double x, double) { return x >= 0 ? 1.0 : slope; });
}

Var softplus_v(Var a) {
  // stable: softplus(x) = max(x,0) + log1p(exp(-|x|))
  return unary_op(a,
                  [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
                  [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var exp_v(Var a) {
  return unary_op(a, [](double x) { return std::exp(x); }, [](double, double o) { return o; });
}

Var abs_v(Var a) {
  return unary_op(a, [](double x) { return std::abs(x); },
                  [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var square(Var a) { return mul(a, a); }

Var reciprocal(Var a) {
  return unary_op(a, [](double x) { return 1.0 / x; },
                  [](double, double o) { return -o * o; });
}

// ---------------------------------------------------------------------------
// shape / selection
// ---------------------------------------------------------------------------

Var reshape(Var a, std::vector<int64_t> shape) {
  check_defined(a, "reshape");
  if (Tensor::count(shape) != a.value().numel())
    throw std::invalid_argument("reshape: element count mismatch");
  Tensor out(shape);
  std::copy(a.value().data(), a.value().data() + a.value().numel(), out.data());
  auto node = make_node(std::move(out), {a.node_});
  Node* self = node.get();
  Node* pa = a.node_.get();
  node->backward_fn = [self, pa]() {
    if (!pa->requires_grad) return;
    Tensor& gx = pa->ensure_grad();
    const double* g = self->grad.data();
    double* d = gx.data();
    for (int64_t i = 0, n = self->grad.numel(); i < n; ++i) d[i] += g[i];
  };
  return wrap(node);
}

namespace {
void axis_strides(const std::vector<int64_t>& shape, int axis, int64_t& outer, int64_t& mid,
                  int64_t& inner) {
  outer = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[static_cast<size_t>(i)];
  mid = shape[static_cast<size_t>(axis)];
  inner = 1;
  for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) inner *= shape[i];
}
}  // namespace

Var concat(Var a, Var b, int axis) {
  check_defined(a, "concat");
  check_defined(b, "concat");
  const auto& sa = a.value().shape();
  const auto& sb = b.value().shape();
  if (sa.size() != sb.size()) throw std::invalid_argument("concat: rank mismatch");
  if (axis < 0) axis += static_cast<int>(sa.size());
  if (axis < 0 || axis >= static_cast<int>(sa.size())) throw std::out_of_range("concat: axis");
  for (size_t i = 0; i < sa.size(); ++i)
    if (static_cast<int>(i) != axis && sa[i] != sb[i])
      throw std::invalid_argument("concat: non-axis dims must match");
  std::vector<int64_t> os = sa;
  os[static_cast<size_t>(axis)] = sa[static_cast<size_t>(axis)] + sb[static_cast<size_t>(axis)];
  int64_t outer, ma, inner;
  axis_strides(sa, axis, outer, ma, inner);
  const int64_t mb = sb[static_cast<size_t>(axis)];
  Tensor out(os);
  const double* xa = a.value().data();
  const double* xb = b.value().data();
  double* o = out.data();
  for (int64_t u = 0; u < outer; ++u) {
    std::copy(xa + u * ma * inner, xa + (u + 1) * ma * inner, o + u * (ma + mb) * inner);
    std::copy(xb + u * mb * inner, xb + (u + 1) * mb * inner,
              o + u * (ma + mb) * inner + ma * inner);
  }
  auto node = make_node(std::move(out), {a.node_, b.node_});
  Node* self = node.get();
  Node* pa = a.node_.get();
  Node* pb = b.node_.get();
  node->backward_fn = [self, pa, pb, outer, ma, mb, inner]() {
    const double* g = self->grad.data();
    if (pa->requires_grad) {
      double* d = pa->ensure_grad().data();
      for (int64_t u = 0; u < outer; ++u)
        for (int64_t i = 0; i < ma * inner; ++i) d[u * ma * inner + i] += g[u * (ma + mb) * inner + i];
    }
    if (pb->requires_grad) {
      double* d = pb->ensure_grad().data();
      for (int64_t u = 0; u < outer; ++u)
        for (int64_t i = 0; i < mb * inner; ++i)
          d[u * mb * inner + i] += g[u * (ma + mb) * inner + ma * inner + i];
    }
  };
  return wrap(node);
}

Var narrow(Var a, int axis, int64_t start, int64_t len) {
  check_defined(a, "narrow");
  const auto& s = a.value().shape();
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size())) throw std::out_of_range("narrow: axis");
  if (start < 0 || len <= 0 || start + len > s[static_cast<size_t>(axis)])
    throw std::out_of_range("narrow: range");
  int64_t outer, mid, inner;
  axis_strides(s, axis, outer, mid, inner);
  std::vector<int64_t> os = s;
  os[static_cast<size_t>(axis)] = len;
  Tensor out(os);
  const double* x = a.value().data();
  double* o = out.data();
  for (int64_t u = 0; u < outer; ++u)
    std::copy(x + (u * mid + start) * inner, x + (u * mid + start + len) * inner,
              o + u * len * inner);
  auto node = make_node(std::move(out), {a.node_});
  Node* self = node.get();
  Node* pa = a.node_.get();
  node->backward_fn = [self, pa, outer, mid, inner, start, len]() {
    if (!pa->requires_grad) return;
    double* d = pa->ensure_grad().data();
    const double* g = self->grad.data();
    for (int64_t u = 0; u < outer; ++u)
      for (int64_t i = 0; i < len * inner; ++i) d[(u * mid + start) * inner + i] += g[u * len * inner + i];
  };
  return wrap(node);
}

Var transpose2(Var a) {
  check_defined(a, "transpose2");
  if (a.value().ndim() != 2) throw std::invalid_argument("transpose2: need 2-D");
  const int64_t m = a.value().size(0), n = a.value().size(1);
  Tensor out({n, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.at2(j, i) = a.value().at2(i, j);
  auto node = make_node(std::move(out), {a.node_});
  Node* self = node.get();
  Node* pa = a.node_.get();
  node->backward_fn = [self, pa, m, n]() {
    if (!pa->requires_grad) return;
    Tensor& gx = pa->ensure_grad();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) gx.at2(i, j) += self->grad.at2(j, i);
  };
  return wrap(node);
}

Var swap_last2(Var a) {
  check_defined(a, "swap_last2");
  if (a.value().ndim() != 3) throw std::invalid_argument("swap_last2: need 3-D");
  const int64_t b = a.value().size(0), c = a.value().size(1), t = a.value().size(2);
  Tensor out({b, t, c});
  for (int64_t i = 0; i < b; ++i)
    for (int64_t j = 0; j < c; ++j)
      for (int64_t k = 0; k < t; ++k) out.at3(i, k, j) = a.value().at3(i, j, k);
  auto node = make_node(std::move(out), {a.node_});
  Node* self = node.get();
  Node* pa = a.node_.get();
  node->backward_fn = [self, pa, b, c, t]() {
    if (!pa->requires_grad) return;
    Tensor& gx = pa->ensure_grad();
    for (int64_t i = 0; i < b; ++i)
      for (int64_t j = 0; j < c; ++j)
        for (int64_t k = 0; k < t; ++k) gx.at3(i, j, k) += self->grad.at3(i, k, j);
  };
  return wrap(node);
}

Var roll_last(Var a, int64_t shift) {
  check_defined(a, "roll_last");
  const int64_t t = a.value().size(-1);
  const int64_t rows = a.value().numel() / t;
  int64_t sh = ((shift % t) + t) % t;
  Tensor out(a.value().shape());
  const double* x = a.value().data();
  double* o = out.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < t; ++j) o[r * t + (j + sh) % t] = x[r * t + j];
  auto node = make_node(std::move(out), {a.node_});
  Node* self = node.get();
  Node* pa = a.node_.get();
  node->backward_fn = [self, pa, rows, t, sh]() {
    if (!pa->requires_grad) return;
    double* d = pa->ensure_grad().data();
    const double* g = self->grad.data();
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t j = 0; j < t; ++j) d[r * t + j] += g[r * t + (j + sh) % t];
  };
  return wrap(node);
}

Var stack_vars(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("stack_vars: empty");
  for (const auto& x : xs) {
    check_defined(x, "stack_vars");
    if (!x.value().same_shape(xs[0].value()))
      throw std::invalid_argument("stack_vars: shape mismatch");
  }
  const int64_t k = static_cast<int64_t>(xs.size());
  const int64_t n = xs[0].value().numel();
  std::vector<int64_t> os{k};
  for (int64_t d : xs[0].value().shape()) os.push_back(d);
  Tensor out(os);
  std::vector<std::shared_ptr<Node>> parents;
  parents.reserve(xs.size());
  for (int64_t i = 0; i < k; ++i) {
    std::copy(xs[static_cast<size_t>(i)].value().data(),
              xs[static_cast<size_t>(i)].value().data() + n, out.data() + i * n);
    parents.push_back(xs[static_cast<size_t>(i)].node_);
  }
  auto node = make_node(std::move(out), std::move(parents));
  Node* self = node.get();
  node->backward_fn = [self, k, n]() {
    const double* g = self->grad.data();
    for (int64_t i = 0; i < k; ++i) {
      Node* p = self->parents[static_cast<size_t>(i)].get();
      if (!p->requires_grad) continue;
      double* d = p->ensure_grad().data();
      for (int64_t j = 0; j < n; ++j) d[j] += g[i * n + j];
    }
  };
  return wrap(node);
}

// ---------------------------------------------------------------------------
// reductions / broadcasts
// ---------------------------------------------------------------------------

Var sum_all(Var a) {
  check_defined(a, "sum_all");
  Tensor out = Tensor::scalar(a.value().sum());
  auto node = make_node(std::move(out), {a.node_});
  Node* self = node.get();
  Node* pa = a.node_.get();
  node->backward_fn = [self, pa]() {
    if (!pa->requires_grad) return;
    const double g = self->grad[0];
    double* d = pa->ensure_grad().data();
    for (int64_t i = 0, n = pa->value.numel(); i < n; ++i) d[i] += g;
  };
  return wrap(node);
}

Var mean_all(Var a) {
  check_defined(a, "mean_all");
  const int64_t n = a.value().numel();
  return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

Var mean_trailing(Var a, int keep_dims) {
  check_defined(a, "mean_trailing");
  const auto& s = a.value().shape();
  if (keep_dims <= 0 || keep_dims > static_cast<int>(s.size()))
    throw std::invalid_argument("mean_trailing: keep_dims out of range");
  std::vector<int64_t> os(s.begin(), s.begin() + keep_dims);
  int64_t rows = 1;
  for (int64_t d : os) rows *= d;
  const int64_t cols = a.value().numel() / std::max<int64_t>(rows, 1);
  Tensor out(os);
  const double* x = a.value().data();
  for (int64_t r = 0; r < rows; ++r) {
    double acc = 0;
    for (int64_t c = 0; c < cols; ++c) acc += x[r * cols + c];
    out[r] = acc / static_cast<double>(cols);
  }
  auto node = make_node(std::move(out), {a.node_});
  Node* self = node.get();
  Node* pa = a.node_.get();
  node->backward_fn = [self, pa, rows, cols]() {
    if (!pa->requires_grad) return;
    double* d = pa->ensure_grad().data();
    const double* g = self->grad.data();
    const double inv = 1.0 / static_cast<double>(cols);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) d[r * cols + c] += g[r] * inv;
  };
  return wrap(node);
}

Var sum_mid(Var a) {
  check_defined(a, "sum_mid");
  if (a.value().ndim() != 3) throw std::invalid_argument("sum_mid: need 3-D");
  const int64_t A = a.value().size(0), M = a.value().size(1), B = a.value().size(2);
  Tensor out({A, B});
  for (int64_t i = 0; i < A; ++i)
    for (int64_t m = 0; m < M; ++m)
      for (int64_t j = 0; j < B; ++j) out.at2(i, j) += a.value().at3(i, m, j);
  auto node = make_node(std::move(out), {a.node_});
  Node* self = node.get();
  Node* pa = a.node_.get();
  node->backward_fn = [self, pa, A, M, B]() {
    if (!pa->requires_grad) return;
    Tensor& gx = pa->ensure_grad();
    for (int64_t i = 0; i < A; ++i)
      for (int64_t m = 0; m < M; ++m)
        for (int64_t j = 0; j < B; ++j) gx.at3(i, m, j) += self->grad.at2(i, j);
  };
  return wrap(node);
}

Var mul_colvec(Var x, Var c) {
  check_defined(x, "mul_colvec");
  check_defined(c, "mul_colvec");
  if (x.value().ndim() != 2 || c.value().ndim() != 1 || x.value().size(0) != c.value().size(0))
    throw std::invalid_argument("mul_colvec: want x[B,T], c[B]");
  const int64_t B = x.value().size(0), T = x.value().size(1);
  Tensor out({B, T});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t t = 0; t < T; ++t) out.at2(b, t) = x.value().at2(b, t) * c.value()[b];
  auto node = make_node(std::move(out), {x.node_, c.node_});
  Node* self = node.get();
  Node* px = x.node_.get();
  Node* pc = c.node_.get();
  node->backward_fn = [self, px, pc, B, T]() {
    const Tensor& g = self->grad;
    if (px->requires_grad) {
      Tensor& gx = px->ensure_grad();
      for (int64_t b = 0; b < B; ++b)
        for (int64_t t = 0; t < T; ++t) gx.at2(b, t) += g.at2(b, t) * pc->value[b];
    }
    if (pc->requires_grad) {
      Tensor& gc = pc->ensure_grad();
      for (int64_t b = 0; b < B; ++b) {
        double acc = 0;
        for (int64_t t = 0; t < T; ++t) acc += g.at2(b, t) * px->value.at2(b, t);
        gc[b] += acc;
      }
    }
  };
  return wrap(node);
}

Var add_rowvec(Var x, Var b) {
  check_defined(x, "add_rowvec");
  check_defined(b, "add_rowvec");
  if (x.value().ndim() != 2 || b.value().ndim() != 1 || x.value().size(1) != b.value().size(0))
    throw std::invalid_argument("add_rowvec: want x[M,N], b[N]");
  const int64_t M = x.value().size(0), N = x.value().size(1);
  Tensor out({M, N});
  for (int64_t i = 0; i < M; ++i)
    for (int64_t j = 0; j < N; ++j) out.at2(i, j) = x.value().at2(i, j) + b.value()[j];
  auto node = make_node(std::move(out), {x.node_, b.node_});
  Node* self = node.get();
  Node* px = x.node_.get();
  Node* pb = b.node_.get();
  node->backward_fn = [self, px, pb, M, N]() {
    const Tensor& g = self->grad;
    if (px->requires_grad) px->accumulate(g);
    if (pb->requires_grad) {
      Tensor& gb = pb->ensure_grad();
      for (int64_t i = 0; i < M; ++i)
        for (int64_t j = 0; j < N; ++j) gb[j] += g.at2(i, j);
    }
  };
  return wrap(node);
}

Var select_label(Var x, const std::vector<int>& labels) {
  check_defined(x, "select_label");
  if (x.value().ndim() != 2) throw std::invalid_argument("select_label: want [B,C]");
  const int64_t B = x.value().size(0), C = x.value().size(1);
  if (static_cast<int64_t>(labels.size()) != B)
    throw std::invalid_argument("select_label: label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= C) throw std::out_of_range("select_label: label out of range");
  Tensor out({B});
  for (int64_t b = 0; b < B; ++b) out[b] = x.value().at2(b, labels[static_cast<size_t>(b)]);
  auto node = make_node(std::move(out), {x.node_});
  Node* self = node.get();
  Node* px = x.node_.get();
  auto labs = labels;
  node->backward_fn = [self, px, labs, B]() {
    if (!px->requires_grad) return;
    Tensor& gx = px->ensure_grad();
    for (int64_t b = 0; b < B; ++b) gx.at2(b, labs[static_cast<size_t>(b)]) += self->grad[b];
  };
  return wrap(node);
}

// ---------------------------------------------------------------------------
// linear algebra / nets
// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  if (a.value().ndim() != 2 || b.value().ndim() != 2 || a.value().size(1) != b.value().size(0))
    throw std::invalid_argument("matmul: incompatible shapes " + a.value().shape_str() + " x " +
                                b.value().shape_str());
  const int64_t M = a.value().size(0), K = a.value().size(1), N = b.value().size(1);
  Tensor out({M, N});
  {
    CMapM A(a.value().data(), M, K), B(b.value().data(), K, N);
    MapM O(out.data(), M, N);
    O.noalias() = A * B;
  }
  auto node = make_node(std::move(out), {a.node_, b.node_});
  Node* self = node.get();
  Node* pa = a.node_.get();
  Node* pb = b.node_.get();
  node->backward_fn = [self, pa, pb, M, K, N]() {
    CMapM G(self->grad.data(), M, N);
    if (pa->requires_grad) {
      CMapM B(pb->value.data(), K, N);
      MapM GA(pa->ensure_grad().data(), M, K);
      GA.noalias() += G * B.transpose();
    }
    if (pb->requires_grad) {
      CMapM A(pa->value.data(), M, K);
      MapM GB(pb->ensure_grad().data(), K, N);
      GB.noalias() += A.transpose() * G;
    }
  };
  return wrap(node);
}

namespace {

// im2col for grouped 1-D convolution, one (batch, group) pair.
void im2col_1d(const Tensor& x, int64_t b, int64_t c0, int64_t cg, int64_t k, int64_t stride,
               int64_t pad, int64_t to, std::vector<double>& cols) {
  const int64_t T = x.size(2);
  cols.assign(static_cast<size_t>(cg * k * to), 0.0);
  for (int64_t cc = 0; cc < cg; ++cc)
    for (int64_t kk = 0; kk < k; ++kk) {
      double* row = cols.data() + (cc * k + kk) * to;
      for (int64_t t = 0; t < to; ++t) {
        const int64_t ti = t * stride + kk - pad;
        if (ti >= 0 && ti < T) row[t] = x.at3(b, c0 + cc, ti);
      }
    }
}

void im2col_2d(const Tensor& x, int64_t b, int64_t C, int64_t kh, int64_t kw, int64_t sh,
               int64_t sw, int64_t ph, int64_t pw, int64_t ho, int64_t wo,
               std::vector<double>& cols) {
  const int64_t H = x.size(2), W = x.size(3);
  cols.assign(static_cast<size_t>(C * kh * kw * ho * wo), 0.0);
  for (int64_t c = 0; c < C; ++c)
    for (int64_t ki = 0; ki < kh; ++ki)
      for (int64_t kj = 0; kj < kw; ++kj) {
        double* row = cols.data() + ((c * kh + ki) * kw + kj) * ho * wo;
        for (int64_t i = 0; i < ho; ++i) {
          const int64_t hi = i * sh + ki - ph;
          if (hi < 0 || hi >= H) continue;
          for (int64_t j = 0; j < wo; ++j) {
            const int64_t wi = j * sw + kj - pw;
            if (wi >= 0 && wi < W) row[i * wo + j] = x.at4(b, c, hi, wi);
          }
        }
      }
}

}  // namespace

Var conv1d(Var x, Var w, Var b, int stride, int pad, int groups) {
  check_defined(x, "conv1d");
  check_defined(w, "conv1d");
  if (x.value().ndim() != 3 || w.value().ndim() != 3)
    throw std::invalid_argument("conv1d: want x[B,C,T], w[O,C/g,k]");
  const int64_t B = x.value().size(0), C = x.value().size(1), T = x.value().size(2);
  const int64_t O = w.value().size(0), Cg = w.value().size(1), K = w.value().size(2);
  if (groups <= 0 || C % groups != 0 || O % groups != 0 || Cg != C / groups)
    throw std::invalid_argument("conv1d: bad group layout");
  if (b.defined() && (b.value().ndim() != 1 || b.value().size(0) != O))
    throw std::invalid_argument("conv1d: bad bias");
  const int64_t To = (T + 2 * pad - K) / stride + 1;
  if (To <= 0) throw std::invalid_argument("conv1d: output would be empty");
  const int64_t Og = O / groups;

  Tensor out({B, O, To});
  std::vector<double> cols;
  for (int64_t bi = 0; bi < B; ++bi)
    for (int64_t g = 0; g < groups; ++g) {
      im2col_1d(x.value(), bi, g * Cg, Cg, K, stride, pad, To, cols);
      CMapM Wg(w.value().data() + g * Og * Cg * K, Og, Cg * K);
      CMapM Cm(cols.data(), Cg * K, To);
      MapM Om(out.data() + (bi * O + g * Og) * To, Og, To);
      Om.noalias() = Wg * Cm;
    }
  if (b.defined()) {
    for (int64_t bi = 0; bi < B; ++bi)
      for (int64_t o = 0; o < O; ++o) {
        double* r = out.data() + (bi * O + o) * To;
        const double bv = b.value()[o];
        for (int64_t t = 0; t < To; ++t) r[t] += bv;
      }
  }

  std::vector<std::shared_ptr<Node>> parents{x.node_, w.node_};
  if (b.defined()) parents.push_back(b.node_);
  auto node = make_node(std::move(out), std::move(parents));
  Node* self = node.get();
  Node* px = x.node_.get();
  Node* pw = w.node_.get();
  Node* pb = b.defined() ? b.node_.get() : nullptr;
  const int64_t st = stride, pd = pad;
  node->backward_fn = [self, px, pw, pb, B, C, T, O, Cg, K, To, st, pd, groups]() {
    const int64_t Og = O / groups;
    std::vector<double> cols;
    for (int64_t bi = 0; bi < B; ++bi)
      for (int64_t g = 0; g < groups; ++g) {
        CMapM G(self->grad.data() + (bi * O + g * Og) * To, Og, To);
        if (pw->requires_grad) {
          im2col_1d(px->value, bi, g * Cg, Cg, K, st, pd, To, cols);
          CMapM Cm(cols.data(), Cg * K, To);
          MapM GW(pw->ensure_grad().data() + g * Og * Cg * K, Og, Cg * K);
          GW.noalias() += G * Cm.transpose();
        }
        if (px->requires_grad) {
          CMapM Wg(pw->value.data() + g * Og * Cg * K, Og, Cg * K);
          EMat gcols = Wg.transpose() * G;  // [Cg*K, To]
          Tensor& gx = px->ensure_grad();
          for (int64_t cc = 0; cc < Cg; ++cc)
            for (int64_t kk = 0; kk < K; ++kk)
              for (int64_t t = 0; t < To; ++t) {
                const int64_t ti = t * st + kk - pd;
                if (ti >= 0 && ti < T) gx.at3(bi, g * Cg + cc, ti) += gcols(cc * K + kk, t);
              }
        }
      }
    if (pb && pb->requires_grad) {
      Tensor& gb = pb->ensure_grad();
      for (int64_t bi = 0; bi < B; ++bi)
        for (int64_t o = 0; o < O; ++o) {
          double acc = 0;
          const double* r = self->grad.data() + (bi * O + o) * To;
          for (int64_t t = 0; t < To; ++t) acc += r[t];
          gb[o] += acc;
        }
    }
  };
  return wrap(node);
}

Var conv2d(Var x, Var w, Var b, int stride_h, int stride_w, int pad_h, int pad_w) {
  check_defined(x, "conv2d");
  check_defined(w, "conv2d");
  if (x.value().ndim() != 4 || w.value().ndim() != 4 || x.value().size(1) != w.value().size(1))
    throw std::invalid_argument("conv2d: want x[B,C,H,W], w[O,C,kh,kw]");
  const int64_t B = x.value().size(0), C = x.value().size(1), H = x.value().size(2),
                W = x.value().size(3);
  const int64_t O = w.value().size(0), KH = w.value().size(2), KW = w.value().size(3);
  if (b.defined() && (b.value().ndim() != 1 || b.value().size(0) != O))
    throw std::invalid_argument("conv2d: bad bias");
  const int64_t Ho = (H + 2 * pad_h - KH) / stride_h + 1;
  const int64_t Wo = (W + 2 * pad_w - KW) / stride_w + 1;
  if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: output would be empty");

  Tensor out({B, O, Ho, Wo});
  std::vector<double> cols;
  for (int64_t bi = 0; bi < B; ++bi) {
    im2col_2d(x.value(), bi, C, KH, KW, stride_h, stride_w, pad_h, pad_w, Ho, Wo, cols);
    CMapM Wm(w.value().data(), O, C * KH * KW);
    CMapM Cm(cols.data(), C * KH * KW, Ho * Wo);
    MapM Om(out.data() + bi * O * Ho * Wo, O, Ho * Wo);
    Om.noalias() = Wm * Cm;
  }
  if (b.defined()) {
    for (int64_t bi = 0; bi < B; ++bi)
      for (int64_t o = 0; o < O; ++o) {
        double* r = out.data() + (bi * O + o) * Ho * Wo;
        const double bv = b.value()[o];
        for (int64_t i = 0; i < Ho * Wo; ++i) r[i] += bv;
      }
  }

  std::vector<std::shared_ptr<Node>> parents{x.node_, w.node_};
  if (b.defined()) parents.push_back(b.node_);
  auto node = make_node(std::move(out), std::move(parents));
  Node* self = node.get();
  Node* px = x.node_.get();
  Node* pw = w.node_.get();
  Node* pb = b.defined() ? b.node_.get() : nullptr;
  const int64_t sh = stride_h, sw = stride_w, ph = pad_h, pw_ = pad_w;
  node->backward_fn = [self, px, pw, pb, B, C, H, W, O, KH, KW, Ho, Wo, sh, sw, ph, pw_]() {
    std::vector<double> cols;
    for (int64_t bi = 0; bi < B; ++bi) {
      CMapM G(self->grad.data() + bi * O * Ho * Wo, O, Ho * Wo);
      if (pw->requires_grad) {
        im2col_2d(px->value, bi, C, KH, KW, sh, sw, ph, pw_, Ho, Wo, cols);
        CMapM Cm(cols.data(), C * KH * KW, Ho * Wo);
        MapM GW(pw->ensure_grad().data(), O, C * KH * KW);
        GW.noalias() += G * Cm.transpose();
      }
      if (px->requires_grad) {
        CMapM Wm(pw->value.data(), O, C * KH * KW);
        EMat gcols = Wm.transpose() * G;  // [C*KH*KW, Ho*Wo]
        Tensor& gx = px->ensure_grad();
        for (int64_t c = 0; c < C; ++c)
          for (int64_t ki = 0; ki < KH; ++ki)
            for (int64_t kj = 0; kj < KW; ++kj) {
              const int64_t row = (c * KH + ki) * KW + kj;
              for (int64_t i = 0; i < Ho; ++i) {
                const int64_t hi = i * sh + ki - ph;
                if (hi < 0 || hi >= H) continue;
                for (int64_t j = 0; j < Wo; ++j) {
                  const int64_t wi = j * sw + kj - pw_;
                  if (wi >= 0 && wi < W) gx.at4(bi, c, hi, wi) += gcols(row, i * Wo + j);
                }
              }
            }
      }
    }
    if (pb && pb->requires_grad) {
      Tensor& gb = pb->ensure_grad();
      for (int64_t bi = 0; bi < B; ++bi)
        for (int64_t o = 0; o < O; ++o) {
          double acc = 0;
          const double* r = self->grad.data() + (bi * O + o) * Ho * Wo;
          for (int64_t i = 0; i < Ho * Wo; ++i) acc += r[i];
          gb[o] += acc;
        }
    }
  };
  return wrap(node);
}

Var adain_core(Var x, Var gamma, Var beta, double eps) {
  check_defined(x, "adain_core");
  check_defined(gamma, "adain_core");
  check_defined(beta, "adain_core");
  if (x.value().ndim() != 3) throw std::invalid_argument("adain_core: want x[B,C,T]");
  const int64_t B = x.value().size(0), C = x.value().size(1), T = x.value().size(2);
  if (gamma.value().ndim() != 2 || gamma.value().size(0) != B || gamma.value().size(1) != C ||
      !gamma.value().same_shape(beta.value()))
    throw std::invalid_argument("adain_core: want gamma,beta [B,C]");

  Tensor out({B, C, T});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c) {
      double mu = 0;
      for (int64_t t = 0; t < T; ++t) mu += x.value().at3(b, c, t);
      mu /= static_cast<double>(T);
      double var = 0;
      for (int64_t t = 0; t < T; ++t) {
        const double d = x.value().at3(b, c, t) - mu;
        var += d * d;
      }
      var /= static_cast<double>(T);
      const double s = std::sqrt(var) + eps;
      const double g = gamma.value().at2(b, c), bt = beta.value().at2(b, c);
      for (int64_t t = 0; t < T; ++t)
        out.at3(b, c, t) = g * (x.value().at3(b, c, t) - mu) / s + bt;
    }

  auto node = make_node(std::move(out), {x.node_, gamma.node_, beta.node_});
  Node* self = node.get();
  Node* px = x.node_.get();
  Node* pg = gamma.node_.get();
  Node* pb = beta.node_.get();
  node->backward_fn = [self, px, pg, pb, B, C, T, eps]() {
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c) {
        double mu = 0;
        for (int64_t t = 0; t < T; ++t) mu += px->value.at3(b, c, t);
        mu /= static_cast<double>(T);
        double var = 0;
        for (int64_t t = 0; t < T; ++t) {
          const double d = px->value.at3(b, c, t) - mu;
          var += d * d;
        }
        var /= static_cast<double>(T);
        const double sd = std::sqrt(var);
        const double s = sd + eps;
        const double gam = pg->value.at2(b, c);
        double gsum = 0, gdsum = 0, gxhat = 0;
        for (int64_t t = 0; t < T; ++t) {
          const double g = self->grad.at3(b, c, t);
          const double d = px->value.at3(b, c, t) - mu;
          gsum += g;
          gdsum += g * d;
          gxhat += g * d / s;
        }
        if (pg->requires_grad) pg->ensure_grad().at2(b, c) += gxhat;
        if (pb->requires_grad) pb->ensure_grad().at2(b, c) += gsum;
        if (px->requires_grad) {
          Tensor& gx = px->ensure_grad();
          // dL/dd_t = gam*g_t/s - gam*gdsum*d_t / (T*s^2*sd); then subtract row mean.
          const double k2 = (sd > 0) ? gam * gdsum / (static_cast<double>(T) * s * s * sd) : 0.0;
          double dd_mean = 0;
          for (int64_t t = 0; t < T; ++t) {
            const double g = self->grad.at3(b, c, t);
            const double d = px->value.at3(b, c, t) - mu;
            dd_mean += gam * g / s - k2 * d;
          }
          dd_mean /= static_cast<double>(T);
          for (int64_t t = 0; t < T; ++t) {
            const double g = self->grad.at3(b, c, t);
            const double d = px->value.at3(b, c, t) - mu;
            gx.at3(b, c, t) += gam * g / s - k2 * d - dd_mean;
          }
        }
      }
  };
  return wrap(node);
}

Var softmax_cols(Var x) {
  check_defined(x, "softmax_cols");
  if (x.value().ndim() != 2) throw std::invalid_argument("softmax_cols: want [N,T]");
  const int64_t N = x.value().size(0), T = x.value().size(1);
  Tensor out({N, T});
  for (int64_t t = 0; t < T; ++t) {
    double m = x.value().at2(0, t);
    for (int64_t i = 1; i < N; ++i) m = std::max(m, x.value().at2(i, t));
    double z = 0;
    for (int64_t i = 0; i < N; ++i) z += std::exp(x.value().at2(i, t) - m);
    for (int64_t i = 0; i < N; ++i) out.at2(i, t) = std::exp(x.value().at2(i, t) - m) / z;
  }
  auto node = make_node(std::move(out), {x.node_});
  Node* self = node.get();
  Node* px = x.node_.get();
  node->backward_fn = [self, px, N, T]() {
    if (!px->requires_grad) return;
    Tensor& gx = px->ensure_grad();
    for (int64_t t = 0; t < T; ++t) {
      double dot = 0;
      for (int64_t i = 0; i < N; ++i) dot += self->grad.at2(i, t) * self->value.at2(i, t);
      for (int64_t i = 0; i < N; ++i)
        gx.at2(i, t) += self->value.at2(i, t) * (self->grad.at2(i, t) - dot);
    }
  };
  return wrap(node);
}

Var cross_entropy(Var logits, const std::vector<int>& labels) {
  check_defined(logits, "cross_entropy");
  if (logits.value().ndim() != 2) throw std::invalid_argument("cross_entropy: want [B,R]");
  const int64_t B = logits.value().size(0), R = logits.value().size(1);
  if (static_cast<int64_t>(labels.size()) != B)
    throw std::invalid_argument("cross_entropy: label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= R) throw std::out_of_range("cross_entropy: label out of range");
  double loss = 0;
  for (int64_t b = 0; b < B; ++b) {
    double m = logits.value().at2(b, 0);
    for (int64_t r = 1; r < R; ++r) m = std::max(m, logits.value().at2(b, r));
    double z = 0;
    for (int64_t r = 0; r < R; ++r) z += std::exp(logits.value().at2(b, r) - m);
    loss += m + std::log(z) - logits.value().at2(b, labels[static_cast<size_t>(b)]);
  }
  loss /= static_cast<double>(B);
  auto node = make_node(Tensor::scalar(loss), {logits.node_});
  Node* self = node.get();
  Node* px = logits.node_.get();
  auto labs = labels;
  node->backward_fn = [self, px, labs, B, R]() {
    if (!px->requires_grad) return;
    Tensor& gx = px->ensure_grad();
    const double g = self->grad[0] / static_cast<double>(B);
    for (int64_t b = 0; b < B; ++b) {
      double m = px->value.at2(b, 0);
      for (int64_t r = 1; r < R; ++r) m = std::max(m, px->value.at2(b, r));
      double z = 0;
      for (int64_t r = 0; r < R; ++r) z += std::exp(px->value.at2(b, r) - m);
      for (int64_t r = 0; r < R; ++r) {
        const double p = std::exp(px->value.at2(b, r) - m) / z;
        gx.at2(b, r) += g * (p - (labs[static_cast<size_t>(b)] == r ? 1.0 : 0.0));
      }
    }
  };
  return wrap(node);
}

// ---------------------------------------------------------------------------
// signal ops
// ---------------------------------------------------------------------------

Var overlap_add(Var frames, int hop, int64_t out_len, int64_t center_offset) {
  check_defined(frames, "overlap_add");
  if (frames.value().ndim() != 2) throw std::invalid_argument("overlap_add: want [W,T]");
  const int64_t W = frames.value().size(0), T = frames.value().size(1);
  Tensor out({out_len});
  for (int64_t t = 0; t < T; ++t)
    for (int64_t j = 0; j < W; ++j) {
      const int64_t n = t * hop + j - center_offset;
      if (n >= 0 && n < out_len) out[n] += frames.value().at2(j, t);
    }
  auto node = make_node(std::move(out), {frames.node_});
  Node* self = node.get();
  Node* pf = frames.node_.get();
  const int64_t h = hop, co = center_offset, L = out_len;
  node->backward_fn = [self, pf, W, T, h, co, L]() {
    if (!pf->requires_grad) return;
    Tensor& gf = pf->ensure_grad();
    for (int64_t t = 0; t < T; ++t)
      for (int64_t j = 0; j < W; ++j) {
        const int64_t n = t * h + j - co;
        if (n >= 0 && n < L) gf.at2(j, t) += self->grad[n];
      }
  };
  return wrap(node);
}

Var resample_var(Var x, int src_rate, int dst_rate) {
  check_defined(x, "resample_var");
  if (x.value().ndim() != 1) throw std::invalid_argument("resample_var: want [L]");
  const int64_t n = x.value().size(0);
  std::vector<double> y = dsp::resample_sinc(x.value().data(), n, src_rate, dst_rate);
  const int64_t ny = static_cast<int64_t>(y.size());
  Tensor out({ny}, std::move(y));
  auto node = make_node(std::move(out), {x.node_});
  Node* self = node.get();
  Node* px = x.node_.get();
  node->backward_fn = [self, px, n, ny, src_rate, dst_rate]() {
    if (!px->requires_grad) return;
    Tensor& gx = px->ensure_grad();
    dsp::resample_sinc_backward(self->grad.data(), ny, gx.data(), n, src_rate, dst_rate);
  };
  return wrap(node);
}

}  // namespace slmvc
