#include "slmvc/slm.hpp"

#include <cmath>

#include "slmvc/util.hpp"

namespace slmvc {

void SlmFeatureStack::validate() const {
  if (static_cast<int>(layers.size()) != kSlmLayers)
    throw std::invalid_argument("SlmFeatureStack: want exactly 13 layers");
  if (input_rate_hz != kSlmRateHz) throw std::invalid_argument("SlmFeatureStack: rate must be 16 kHz");
  const int64_t t = layers.front().size(0);
  for (const auto& l : layers) {
    if (l.ndim() != 2 || l.size(0) != t || l.size(1) != kSlmFeatureDim)
      throw std::invalid_argument("SlmFeatureStack: layer shape mismatch");
    if (!l.all_finite()) throw std::invalid_argument("SlmFeatureStack: non-finite feature");
  }
}

SlmBackbone::SlmBackbone(uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed));
  // stride 320 at 16 kHz = one frame per 20 ms
  front_ = Conv1dLayer(*this, "front", 1, kSlmFeatureDim, /*kernel=*/400, /*stride=*/320,
                       /*pad=*/0, /*groups=*/1, rng, /*trainable=*/false, /*tanh_init=*/true);
  for (int b = 0; b < kSlmLayers - 1; ++b) {
    blocks_.emplace_back(*this, "block" + std::to_string(b), kSlmFeatureDim, kSlmFeatureDim,
                         /*kernel=*/3, /*stride=*/1, /*pad=*/1, /*groups=*/64, rng,
                         /*trainable=*/false, /*tanh_init=*/true);
  }
  mark_frozen();
}

std::vector<Var> SlmBackbone::forward(Var wav16) const {
  if (wav16.value().ndim() != 2) throw std::invalid_argument("SlmBackbone: want [B,L]");
  const int64_t B = wav16.value().size(0), L = wav16.value().size(1);
  const int64_t T = frames_for(L);
  if (T < 1)
    throw std::invalid_argument("SlmBackbone: waveform shorter than one frame stride (" +
                                std::to_string(L) + " samples at 16 kHz)");
  // pad right so every frame window is in range
  const int64_t needed = (T - 1) * kSlmFrameStride + 400;
  Var x = reshape(wav16, {B, 1, L});
  if (needed > L) {
    Var pad = constant(Tensor::zeros({B, 1, needed - L}));
    x = concat(x, pad, 2);
  }
  std::vector<Var> layers;
  layers.reserve(kSlmLayers);
  Var h = tanh_v(front_.forward(x));
  if (h.value().size(2) != T) h = narrow(h, 2, 0, T);
  layers.push_back(h);
  // scale-preserving residual blocks keep every layer map O(1)
  const double inv_sqrt2 = 0.7071067811865476;
  for (const auto& blk : blocks_) {
    h = scale(add(h, tanh_v(blk.forward(h))), inv_sqrt2);
    layers.push_back(h);
  }
  return layers;
}

std::vector<Var> SlmBackbone::forward_any_rate(Var wav, int rate_hz) const {
  if (wav.value().ndim() != 2) throw std::invalid_argument("SlmBackbone: want [B,L]");
  if (rate_hz == kSlmRateHz) return forward(wav);
  const int64_t B = wav.value().size(0), L = wav.value().size(1);
  std::vector<Var> rows;
  rows.reserve(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) {
    Var row = reshape(narrow(wav, 0, b, 1), {L});
    rows.push_back(resample_var(row, rate_hz, kSlmRateHz));
  }
  return forward(stack_vars(rows));
}

SlmFeatureStack extract_slm(const SlmBackbone& backbone, const Waveform& wav) {
  wav.validate();
  Var w = reshape(constant(Tensor({static_cast<int64_t>(wav.samples.size())}, wav.samples)),
                  {1, static_cast<int64_t>(wav.samples.size())});
  std::vector<Var> layers = backbone.forward_any_rate(w, wav.sample_rate_hz);
  SlmFeatureStack stack;
  stack.layers.reserve(layers.size());
  for (const auto& l : layers) {
    const int64_t T = l.value().size(2);
    Tensor m({T, kSlmFeatureDim});
    for (int64_t c = 0; c < kSlmFeatureDim; ++c)
      for (int64_t t = 0; t < T; ++t) m.at2(t, c) = l.value().at3(0, c, t);
    stack.layers.push_back(std::move(m));
  }
  stack.validate();
  return stack;
}

Tensor consistency_features(const SlmFeatureStack& stack) {
  stack.validate();
  const int64_t T = stack.n_frames();
  Tensor out({T, 4 * kSlmFeatureDim});
  for (int l = 0; l < 4; ++l) {
    const Tensor& layer = stack.layers[static_cast<size_t>(6 + l)];
    for (int64_t t = 0; t < T; ++t)
      for (int64_t c = 0; c < kSlmFeatureDim; ++c)
        out.at2(t, l * kSlmFeatureDim + c) = layer.at2(t, c);
  }
  return out;
}

Var consistency_concat(const std::vector<Var>& layers) {
  if (static_cast<int>(layers.size()) != kSlmLayers)
    throw std::invalid_argument("consistency_concat: want 13 layers");
  Var out = layers[6];
  for (int l = 7; l <= 9; ++l) out = concat(out, layers[static_cast<size_t>(l)], 1);
  return out;  // [B, 4*768, T']
}

Tensor project(const SlmFeatureStack& stack, const ProjectionHead& head) {
  stack.validate();
  if (head.weight.ndim() != 2 || head.weight.size(0) != kSlmLayers * kSlmFeatureDim ||
      head.weight.size(1) != head.bias.size(0))
    throw std::invalid_argument("project: head dimensions mismatch");
  std::vector<Var> layer_vars;
  layer_vars.reserve(stack.layers.size());
  const int64_t T = stack.n_frames();
  for (const auto& l : stack.layers) {
    Var v = constant(l);                              // [T,768]
    layer_vars.push_back(reshape(transpose2(v), {1, kSlmFeatureDim, T}));
  }
  Var out = project_concat(layer_vars, constant(head.weight), constant(head.bias));
  Tensor res({T, head.bias.size(0)});
  for (int64_t i = 0; i < res.numel(); ++i) res[i] = out.value()[i];
  return res;
}

Var project_concat(const std::vector<Var>& layers, Var weight, Var bias) {
  if (static_cast<int>(layers.size()) != kSlmLayers)
    throw std::invalid_argument("project_concat: want 13 layers");
  Var cat = layers[0];
  for (int l = 1; l < kSlmLayers; ++l) cat = concat(cat, layers[static_cast<size_t>(l)], 1);
  // [B, 13*768, T'] -> [B*T', 13*768] -> affine -> [B, T', 256]
  const int64_t B = cat.value().size(0), D = cat.value().size(1), T = cat.value().size(2);
  if (weight.value().size(0) != D || weight.value().size(1) != bias.value().size(0))
    throw std::invalid_argument("project_concat: head dimensions mismatch");
  Var frames = reshape(swap_last2(cat), {B * T, D});
  Var out = add_rowvec(matmul(frames, weight), bias);
  return reshape(out, {B, T, bias.value().size(0)});
}

LayerImportance layer_importance(const ProjectionHead& head, ImportanceNorm norm) {
  if (head.weight.ndim() != 2 || head.weight.size(0) != kSlmLayers * kSlmFeatureDim)
    throw std::invalid_argument("layer_importance: want weight [13*768, out]");
  const int64_t out_dim = head.weight.size(1);
  std::array<double, kSlmLayers> mags{};
  double total = 0;
  for (int l = 0; l < kSlmLayers; ++l) {
    double acc = 0;
    for (int64_t r = 0; r < kSlmFeatureDim; ++r)
      for (int64_t c = 0; c < out_dim; ++c) {
        const double w = head.weight.at2(l * kSlmFeatureDim + r, c);
        acc += (norm == ImportanceNorm::kFrobenius) ? w * w : std::abs(w);
      }
    mags[static_cast<size_t>(l)] = (norm == ImportanceNorm::kFrobenius) ? std::sqrt(acc) : acc;
    total += mags[static_cast<size_t>(l)];
  }
  LayerImportance li;
  if (total == 0) {
    warn("layer_importance: all-zero projection head, reporting uniform importance");
    for (auto& v : li.importance) v = 1.0 / kSlmLayers;
    return li;
  }
  for (int l = 0; l < kSlmLayers; ++l) li.importance[static_cast<size_t>(l)] = mags[static_cast<size_t>(l)] / total;
  return li;
}

}  // namespace slmvc
