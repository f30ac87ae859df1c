#include "slmvc/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "slmvc/util.hpp"

namespace slmvc {

std::vector<Var> Module::trainable() const {
  std::vector<Var> out;
  for (const auto& p : params_)
    if (p.var.requires_grad()) out.push_back(p.var);
  return out;
}

void Module::zero_grads() const {
  for (const auto& p : params_) p.var.zero_grad();
}

uint64_t Module::parameter_hash() const {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto& p : params_) {
    h = fnv1a64(p.name.data(), p.name.size(), h);
    const Tensor& t = p.var.value();
    for (int64_t d : t.shape()) h = fnv1a64(&d, sizeof(d), h);
    h = fnv1a64(t.data(), static_cast<size_t>(t.numel()) * sizeof(double), h);
  }
  return h;
}

namespace {
constexpr char kMagic[8] = {'S', 'L', 'M', 'V', 'C', 'W', 'T', '1'};

void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
}  // namespace

void Module::save(std::ostream& os) const {
  os.write(kMagic, 8);
  write_u64(os, params_.size());
  for (const auto& p : params_) {
    write_u64(os, p.name.size());
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const Tensor& t = p.var.value();
    write_u64(os, static_cast<uint64_t>(t.ndim()));
    for (int64_t d : t.shape()) write_u64(os, static_cast<uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(double))));
  }
}

void Module::load(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw CheckpointError("weight file: bad magic header");
  const uint64_t count = read_u64(is);
  if (count != params_.size())
    throw CheckpointError("weight file: parameter count mismatch (have " +
                          std::to_string(params_.size()) + ", file has " + std::to_string(count) +
                          ")");
  for (auto& p : params_) {
    const uint64_t name_len = read_u64(is);
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    if (name != p.name) throw CheckpointError("weight file: expected param '" + p.name +
                                              "', found '" + name + "'");
    const uint64_t nd = read_u64(is);
    std::vector<int64_t> shape(nd);
    for (auto& d : shape) d = static_cast<int64_t>(read_u64(is));
    if (shape != p.var.value().shape())
      throw CheckpointError("weight file: shape mismatch for '" + p.name + "'");
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(double))));
    if (!is) throw CheckpointError("weight file: truncated data for '" + p.name + "'");
    p.var.set_value(t);
  }
}

void Module::save_file(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open for write: " + path);
  save(os);
}

void Module::load_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open for read: " + path);
  load(is);
}

Var Module::register_param(const std::string& name, Tensor init, bool trainable) {
  Var v(std::move(init), trainable);
  params_.push_back({name, v});
  return v;
}

Tensor he_normal(std::vector<int64_t> shape, int64_t fan_in, std::mt19937_64& rng) {
  return Tensor::randn(std::move(shape), rng, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

Tensor xavier_normal(std::vector<int64_t> shape, int64_t fan_in, std::mt19937_64& rng) {
  return Tensor::randn(std::move(shape), rng, std::sqrt(1.0 / static_cast<double>(fan_in)));
}

Linear::Linear(Module& owner, const std::string& name, int64_t in, int64_t out,
               std::mt19937_64& rng, bool trainable, double weight_scale) {
  Tensor w = he_normal({in, out}, in, rng);
  if (weight_scale != 1.0)
    for (int64_t i = 0; i < w.numel(); ++i) w[i] *= weight_scale;
  W = owner.register_param(name + ".W", std::move(w), trainable);
  b = owner.register_param(name + ".b", Tensor::zeros({out}), trainable);
}

Conv1dLayer::Conv1dLayer(Module& owner, const std::string& name, int64_t in_ch, int64_t out_ch,
                         int kernel, int stride_, int pad_, int groups_, std::mt19937_64& rng,
                         bool trainable, bool tanh_init)
    : stride(stride_), pad(pad_), groups(groups_) {
  const int64_t cg = in_ch / groups_;
  const int64_t fan_in = cg * kernel;
  Tensor w = tanh_init ? xavier_normal({out_ch, cg, kernel}, fan_in, rng)
                       : he_normal({out_ch, cg, kernel}, fan_in, rng);
  W = owner.register_param(name + ".W", std::move(w), trainable);
  Tensor bias = tanh_init ? Tensor::randn({out_ch}, rng, 0.1) : Tensor::zeros({out_ch});
  b = owner.register_param(name + ".b", std::move(bias), trainable);
}

Conv2dLayer::Conv2dLayer(Module& owner, const std::string& name, int64_t in_ch, int64_t out_ch,
                         int kh, int kw, int sh, int sw, int ph, int pw, std::mt19937_64& rng,
                         bool trainable, bool tanh_init)
    : stride_h(sh), stride_w(sw), pad_h(ph), pad_w(pw) {
  const int64_t fan_in = in_ch * kh * kw;
  Tensor w = tanh_init ? xavier_normal({out_ch, in_ch, kh, kw}, fan_in, rng)
                       : he_normal({out_ch, in_ch, kh, kw}, fan_in, rng);
  W = owner.register_param(name + ".W", std::move(w), trainable);
  Tensor bias = tanh_init ? Tensor::randn({out_ch}, rng, 0.1) : Tensor::zeros({out_ch});
  b = owner.register_param(name + ".b", std::move(bias), trainable);
}

}  // namespace slmvc
