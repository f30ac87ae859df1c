#pragma once

#include <iosfwd>
#include <vector>

#include "slmvc/autodiff.hpp"

namespace slmvc {

struct OptimConfig {
  double beta1 = 0.0;
  double beta2 = 0.99;
  double weight_decay = 1e-4;
  double learning_rate = 1e-4;
  double eps = 1e-8;
  void validate() const;
};

/// AdamW with decoupled weight decay.
class AdamW {
 public:
  AdamW(std::vector<Var> params, OptimConfig cfg);

  /// Applies one update from the gradients currently accumulated on the params.
  void step();
  void zero_grad() const;
  int64_t steps_taken() const { return t_; }

  void save(std::ostream& os) const;
  void load(std::istream& is);
  void save_file(const std::string& path) const;
  void load_file(const std::string& path);

 private:
  std::vector<Var> params_;
  std::vector<Tensor> m_, v_;
  OptimConfig cfg_;
  int64_t t_ = 0;
};

}  // namespace slmvc
