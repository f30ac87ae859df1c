#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "slmvc/autodiff.hpp"
#include "slmvc/tensor.hpp"

namespace testsup {

using slmvc::Tensor;
using slmvc::Var;

/// fn maps freshly wrapped leaf Vars (one per input tensor) to a scalar Var.
using GraphFn = std::function<Var(const std::vector<Var>&)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  int64_t checked = 0;
  bool ok(double tol) const { return checked > 0 && max_rel_err < tol; }
};

/// Central finite differences against the reverse-mode gradient. When
/// max_probes_per_input > 0 only that many coordinates per input are probed
/// (deterministically chosen), which keeps expensive graphs affordable.
inline GradCheckResult grad_check(const GraphFn& fn, const std::vector<Tensor>& inputs,
                                  double eps = 1e-4, int64_t max_probes_per_input = 0,
                                  uint64_t probe_seed = 1234) {
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.emplace_back(t, true);
  Var root = fn(leaves);
  slmvc::backward(root);

  auto eval_at = [&](size_t which, int64_t idx, double delta) {
    std::vector<Var> vs;
    vs.reserve(inputs.size());
    for (size_t i = 0; i < inputs.size(); ++i) {
      Tensor t = inputs[i];
      if (i == which) t[idx] += delta;
      vs.emplace_back(std::move(t), false);
    }
    return fn(vs).scalar();
  };

  GradCheckResult res;
  std::mt19937_64 rng(probe_seed);
  for (size_t i = 0; i < inputs.size(); ++i) {
    const int64_t n = inputs[i].numel();
    std::vector<int64_t> idxs;
    if (max_probes_per_input > 0 && n > max_probes_per_input) {
      std::uniform_int_distribution<int64_t> dist(0, n - 1);
      for (int64_t k = 0; k < max_probes_per_input; ++k) idxs.push_back(dist(rng));
    } else {
      for (int64_t k = 0; k < n; ++k) idxs.push_back(k);
    }
    const bool has = leaves[i].has_grad();
    for (int64_t idx : idxs) {
      const double fd = (eval_at(i, idx, eps) - eval_at(i, idx, -eps)) / (2 * eps);
      const double an = has ? leaves[i].grad()[idx] : 0.0;
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      const double rel = std::abs(fd - an) / denom;
      if (std::abs(fd - an) > 1e-9) res.max_rel_err = std::max(res.max_rel_err, rel);
      ++res.checked;
    }
  }
  return res;
}

inline Tensor rand_tensor(std::vector<int64_t> shape, std::mt19937_64& rng, double lo = -1.0,
                          double hi = 1.0) {
  return Tensor::uniform(std::move(shape), rng, lo, hi);
}

}  // namespace testsup
