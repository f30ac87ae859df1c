#include "slmvc/discriminators.hpp"

#include <cmath>

namespace slmvc {

namespace {

// Projected stack [B,T',256] viewed as a 1-channel image [B,1,256,T'].
Var projection_image(const std::vector<Var>& layers, Var w, Var b) {
  Var proj = project_concat(layers, w, b);  // [B,T',256]
  const int64_t B = proj.value().size(0), T = proj.value().size(1), C = proj.value().size(2);
  return reshape(swap_last2(proj), {B, 1, C, T});
}

}  // namespace

// ---------------------------------------------------------------------------
// MelDiscriminator
// ---------------------------------------------------------------------------

MelDiscriminator::MelDiscriminator(const NetworkConfig& cfg, const AudioConfig& audio,
                                   int roster_size, std::mt19937_64& rng)
    : roster_size_(roster_size),
      n_bands_(audio.n_mel_bands),
      log_floor_(std::log(audio.log_floor)) {
  if (roster_size < 1) throw ConfigError("MelDiscriminator: roster must not be empty");
  const int w = cfg.disc_width;
  convs_.emplace_back(*this, "conv0", 1, w, 3, 3, 2, 2, 1, 1, rng);
  convs_.emplace_back(*this, "conv1", w, 2 * w, 3, 3, 2, 2, 1, 1, rng);
  convs_.emplace_back(*this, "conv2", 2 * w, 4 * w, 3, 3, 2, 2, 1, 1, rng);
  convs_.emplace_back(*this, "conv3", 4 * w, 4 * w, 3, 3, 2, 2, 1, 1, rng);
  out_conv_ = Conv2dLayer(*this, "out", 4 * w, roster_size, 3, 3, 1, 1, 1, 1, rng);
}

Var MelDiscriminator::forward_map(Var mel) const {
  if (mel.value().ndim() != 3 || mel.value().size(1) != n_bands_)
    throw std::invalid_argument("MelDiscriminator: want [B," + std::to_string(n_bands_) + ",T]");
  const int64_t B = mel.value().size(0);
  Var x = reshape(scale(add_scalar(mel, -log_floor_), 1.0 / (-log_floor_)),
                  {B, 1, mel.value().size(1), mel.value().size(2)});
  for (const auto& c : convs_) x = leaky_relu(c.forward(x));
  return out_conv_.forward(x);
}

Var MelDiscriminator::scores_from_map(Var map, const std::vector<int>& labels) {
  if (map.value().ndim() != 4) throw std::invalid_argument("scores_from_map: want [B,R,F,T]");
  return select_label(mean_trailing(map, 2), labels);
}

Var MelDiscriminator::scores(Var mel, const std::vector<int>& labels) const {
  return scores_from_map(forward_map(mel), labels);
}

double MelDiscriminator::score(const MelSpectrogram& mel, SpeakerId y) const {
  if (y.index < 0 || y.index >= roster_size_)
    throw std::out_of_range("MelDiscriminator: speaker index out of range");
  Var m = reshape(constant(mel.values), {1, mel.n_bands(), mel.n_frames()});
  return scores(m, {y.index}).value()[0];
}

// ---------------------------------------------------------------------------
// SlmDiscriminator
// ---------------------------------------------------------------------------

SlmDiscriminator::SlmDiscriminator(const NetworkConfig& cfg, std::mt19937_64& rng) {
  const int64_t in_dim = kSlmLayers * kSlmFeatureDim;
  proj_w_ = register_param("proj.W", he_normal({in_dim, 256}, in_dim, rng), true);
  proj_b_ = register_param("proj.b", Tensor::zeros({256}), true);
  const int w = cfg.disc_width;
  convs_.emplace_back(*this, "conv0", 1, w, 3, 3, 2, 2, 1, 1, rng);
  convs_.emplace_back(*this, "conv1", w, 2 * w, 3, 3, 2, 2, 1, 1, rng);
  convs_.emplace_back(*this, "conv2", 2 * w, 4 * w, 3, 3, 2, 2, 1, 1, rng);
  convs_.emplace_back(*this, "conv3", 4 * w, 4 * w, 3, 3, 2, 2, 1, 1, rng);
  out_conv_ = Conv2dLayer(*this, "out", 4 * w, 1, 3, 3, 1, 1, 1, 1, rng);
}

Var SlmDiscriminator::scores_from_layers(const std::vector<Var>& layers) const {
  Var x = projection_image(layers, proj_w_, proj_b_);
  for (const auto& c : convs_) x = leaky_relu(c.forward(x));
  Var map = out_conv_.forward(x);                 // [B,1,h,w]
  return reshape(mean_trailing(map, 2), {map.value().size(0)});
}

double SlmDiscriminator::score(const SlmBackbone& backbone, const Waveform& wav) const {
  Var w = reshape(constant(Tensor({static_cast<int64_t>(wav.samples.size())}, wav.samples)),
                  {1, static_cast<int64_t>(wav.samples.size())});
  std::vector<Var> layers = backbone.forward_any_rate(w, wav.sample_rate_hz);
  return scores_from_layers(layers).value()[0];
}

ProjectionHead SlmDiscriminator::head_snapshot() const {
  return ProjectionHead{proj_w_.value(), proj_b_.value()};
}

// ---------------------------------------------------------------------------
// SourceClassifier
// ---------------------------------------------------------------------------

SourceClassifier::SourceClassifier(const NetworkConfig& cfg, int roster_size,
                                   std::mt19937_64& rng)
    : roster_size_(roster_size) {
  if (roster_size < 1) throw ConfigError("SourceClassifier: roster must not be empty");
  const int64_t in_dim = kSlmLayers * kSlmFeatureDim;
  proj_w_ = register_param("proj.W", he_normal({in_dim, 256}, in_dim, rng), true);
  proj_b_ = register_param("proj.b", Tensor::zeros({256}), true);
  const int w = cfg.disc_width;
  convs_.emplace_back(*this, "conv0", 1, w, 3, 3, 2, 2, 1, 1, rng);
  convs_.emplace_back(*this, "conv1", w, 2 * w, 3, 3, 2, 2, 1, 1, rng);
  convs_.emplace_back(*this, "conv2", 2 * w, 4 * w, 3, 3, 2, 2, 1, 1, rng);
  head_ = Linear(*this, "head", 4 * w + 256, roster_size, rng);
}

Var SourceClassifier::logits_from_layers(const std::vector<Var>& layers) const {
  Var proj = project_concat(layers, proj_w_, proj_b_);  // [B,T',256]
  const int64_t B = proj.value().size(0), T = proj.value().size(1), C = proj.value().size(2);
  Var x = reshape(swap_last2(proj), {B, 1, C, T});
  for (const auto& c : convs_) x = leaky_relu(c.forward(x));
  // global-average skip of the projection keeps a directly learnable readout
  Var pooled = concat(mean_trailing(x, 2), mean_trailing(swap_last2(proj), 2), 1);
  return head_.forward(pooled);
}

std::vector<double> SourceClassifier::classify(const SlmBackbone& backbone,
                                               const Waveform& wav) const {
  Var w = reshape(constant(Tensor({static_cast<int64_t>(wav.samples.size())}, wav.samples)),
                  {1, static_cast<int64_t>(wav.samples.size())});
  std::vector<Var> layers = backbone.forward_any_rate(w, wav.sample_rate_hz);
  Var logits = logits_from_layers(layers);
  std::vector<double> out(static_cast<size_t>(roster_size_));
  for (int i = 0; i < roster_size_; ++i) out[static_cast<size_t>(i)] = logits.value().at2(0, i);
  return out;
}

}  // namespace slmvc
