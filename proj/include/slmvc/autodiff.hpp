#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "slmvc/tensor.hpp"

namespace slmvc {

/// One vertex of the dynamically built computation graph.
struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily on first accumulation
  bool requires_grad = false;
  bool has_grad = false;
  int64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;  // reads this->grad, accumulates into parents

  Tensor& ensure_grad() {
    if (!has_grad) {
      grad = Tensor::zeros(value.shape());
      has_grad = true;
    }
    return grad;
  }

  void accumulate(const Tensor& g) {
    if (!requires_grad) return;
    Tensor& dst = ensure_grad();
    const double* src = g.data();
    double* d = dst.data();
    for (int64_t i = 0, n = g.numel(); i < n; ++i) d[i] += src[i];
  }
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const;
  bool has_grad() const { return node_ && node_->has_grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  double scalar() const;
  void zero_grad() const;
  /// Overwrite the stored value in place (parameter updates). Shape must match.
  void set_value(const Tensor& v) const;

  std::shared_ptr<Node> node_;
};

/// Reverse pass from a scalar root. Accumulates into every reachable node
/// with requires_grad set.
void backward(const Var& root);

Var constant(Tensor t);
Var detach(const Var& v);

// elementwise
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var neg(Var a);
Var tanh_v(Var a);
Var leaky_relu(Var a, double slope = 0.2);
Var softplus_v(Var a);
Var exp_v(Var a);
Var abs_v(Var a);
Var square(Var a);
Var reciprocal(Var a);

// shape / selection
Var reshape(Var a, std::vector<int64_t> shape);
Var concat(Var a, Var b, int axis);
Var narrow(Var a, int axis, int64_t start, int64_t len);
Var transpose2(Var a);                          // [M,N] -> [N,M]
Var swap_last2(Var a);                          // [B,C,T] -> [B,T,C]
Var roll_last(Var a, int64_t shift);            // circular shift along last axis
Var stack_vars(const std::vector<Var>& xs);     // K tensors of shape S -> [K, S...]

// reductions / broadcasts
Var mean_all(Var a);
Var sum_all(Var a);
Var mean_trailing(Var a, int keep_dims);        // mean over axes >= keep_dims
Var sum_mid(Var a);                             // [A,M,B] -> [A,B], sum over middle axis
Var mul_colvec(Var x, Var c);                   // x[B,T] * c[B] broadcast over T
Var add_rowvec(Var x, Var b);                   // x[M,N] + b[N]
Var select_label(Var x, const std::vector<int>& labels);  // x[B,C] -> [B]

// linear algebra / nets
Var matmul(Var a, Var b);
Var conv1d(Var x, Var w, Var b, int stride, int pad, int groups);
Var conv2d(Var x, Var w, Var b, int stride_h, int stride_w, int pad_h, int pad_w);
Var adain_core(Var x, Var gamma, Var beta, double eps = 1e-8);
Var softmax_cols(Var x);                        // [N,T], softmax over axis 0 per column
Var cross_entropy(Var logits, const std::vector<int>& labels);

// signal ops
Var overlap_add(Var frames, int hop, int64_t out_len, int64_t center_offset);
Var resample_var(Var x, int src_rate, int dst_rate);

}  // namespace slmvc
