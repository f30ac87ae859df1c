#pragma once

#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "slmvc/autodiff.hpp"

namespace slmvc {

struct NamedParam {
  std::string name;
  Var var;
};

/// Raised when a checkpoint does not match the constructed model.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Base for anything with named parameters: registration, freezing,
/// hashing and binary (de)serialization.
class Module {
 public:
  virtual ~Module() = default;

  const std::vector<NamedParam>& parameters() const { return params_; }
  std::vector<Var> trainable() const;
  void zero_grads() const;
  bool frozen() const { return frozen_; }

  /// FNV-1a over names, shapes and raw values; bit-stable across a run.
  uint64_t parameter_hash() const;

  void save(std::ostream& os) const;
  void load(std::istream& is);
  void save_file(const std::string& path) const;
  void load_file(const std::string& path);

  Var register_param(const std::string& name, Tensor init, bool trainable = true);

 protected:
  void mark_frozen() { frozen_ = true; }

  std::vector<NamedParam> params_;
  bool frozen_ = false;
};

// weight initializers
Tensor he_normal(std::vector<int64_t> shape, int64_t fan_in, std::mt19937_64& rng);
Tensor xavier_normal(std::vector<int64_t> shape, int64_t fan_in, std::mt19937_64& rng);

/// Dense layer; weight stored [in, out] so forward is x[M,in] @ W + b.
struct Linear {
  Var W, b;
  Linear() = default;
  Linear(Module& owner, const std::string& name, int64_t in, int64_t out, std::mt19937_64& rng,
         bool trainable = true, double weight_scale = 1.0);
  Var forward(Var x) const { return add_rowvec(matmul(x, W), b); }
};

struct Conv1dLayer {
  Var W, b;
  int stride = 1, pad = 0, groups = 1;
  Conv1dLayer() = default;
  Conv1dLayer(Module& owner, const std::string& name, int64_t in_ch, int64_t out_ch, int kernel,
              int stride, int pad, int groups, std::mt19937_64& rng, bool trainable = true,
              bool tanh_init = false);
  Var forward(Var x) const { return conv1d(x, W, b, stride, pad, groups); }
};

struct Conv2dLayer {
  Var W, b;
  int stride_h = 1, stride_w = 1, pad_h = 0, pad_w = 0;
  Conv2dLayer() = default;
  Conv2dLayer(Module& owner, const std::string& name, int64_t in_ch, int64_t out_ch, int kh,
              int kw, int sh, int sw, int ph, int pw, std::mt19937_64& rng, bool trainable = true,
              bool tanh_init = false);
  Var forward(Var x) const { return conv2d(x, W, b, stride_h, stride_w, pad_h, pad_w); }
};

}  // namespace slmvc
