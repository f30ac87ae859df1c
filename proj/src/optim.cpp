#include "slmvc/optim.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "slmvc/nn.hpp"

namespace slmvc {

void OptimConfig::validate() const {
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
    throw std::invalid_argument("OptimConfig: betas must lie in [0,1)");
  if (learning_rate <= 0) throw std::invalid_argument("OptimConfig: learning_rate must be > 0");
  if (weight_decay < 0) throw std::invalid_argument("OptimConfig: weight_decay must be >= 0");
}

AdamW::AdamW(std::vector<Var> params, OptimConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros(p.value().shape()));
    v_.push_back(Tensor::zeros(p.value().shape()));
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    const Var& p = params_[i];
    Tensor next = p.value();
    const bool has_grad = p.has_grad();
    const double* g = has_grad ? p.grad().data() : nullptr;
    double* m = m_[i].data();
    double* v = v_[i].data();
    double* x = next.data();
    for (int64_t j = 0, n = next.numel(); j < n; ++j) {
      const double gj = has_grad ? g[j] : 0.0;
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      x[j] -= cfg_.learning_rate * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * x[j]);
    }
    p.set_value(next);
  }
}

void AdamW::zero_grad() const {
  for (const auto& p : params_) p.zero_grad();
}

namespace {
void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(double))));
}
void read_tensor(std::istream& is, Tensor& t) {
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(double))));
}
}  // namespace

void AdamW::save(std::ostream& os) const {
  write_u64(os, static_cast<uint64_t>(t_));
  write_u64(os, params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    write_u64(os, static_cast<uint64_t>(params_[i].value().numel()));
    write_tensor(os, m_[i]);
    write_tensor(os, v_[i]);
  }
}

void AdamW::load(std::istream& is) {
  t_ = static_cast<int64_t>(read_u64(is));
  const uint64_t count = read_u64(is);
  if (count != params_.size()) throw CheckpointError("optimizer state: parameter count mismatch");
  for (size_t i = 0; i < params_.size(); ++i) {
    const uint64_t n = read_u64(is);
    if (n != static_cast<uint64_t>(params_[i].value().numel()))
      throw CheckpointError("optimizer state: size mismatch");
    read_tensor(is, m_[i]);
    read_tensor(is, v_[i]);
    if (!is) throw CheckpointError("optimizer state: truncated");
  }
}

void AdamW::save_file(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open for write: " + path);
  save(os);
}

void AdamW::load_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open for read: " + path);
  load(is);
}

}  // namespace slmvc
