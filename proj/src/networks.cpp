#include "slmvc/networks.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "slmvc/util.hpp"

namespace slmvc {

namespace {
constexpr double kPi = 3.14159265358979323846;

// Log-mels live in [ln(floor), ~+2]; map the silence floor to 0 and unit
// magnitude near 0 dB so conv stacks see well-scaled inputs.
Var normalize_mel_input(Var mel, double log_floor_value) {
  return scale(add_scalar(mel, -log_floor_value), 1.0 / (-log_floor_value));
}
}

void NetworkConfig::validate(const AudioConfig& audio) const {
  if (style_dim < 1 || base_width < 1 || num_stages < 1 || decoder_width < 1 ||
      decoder_blocks < 1 || f0_channels < 1 || disc_width < 1)
    throw ConfigError("NetworkConfig: all sizes must be positive");
  const int div = 1 << num_stages;
  if (audio.n_mel_bands % div != 0)
    throw ConfigError("NetworkConfig: n_mel_bands must be divisible by 2^num_stages (" +
                      std::to_string(audio.n_mel_bands) + " vs " + std::to_string(div) + ")");
}

// ---------------------------------------------------------------------------
// StyleEncoder
// ---------------------------------------------------------------------------

StyleEncoder::StyleEncoder(const NetworkConfig& cfg, const AudioConfig& audio,
                           std::mt19937_64& rng)
    : n_bands_(audio.n_mel_bands), log_floor_(std::log(audio.log_floor)) {
  cfg.validate(audio);
  const int w = cfg.base_width;
  convs_.emplace_back(*this, "conv0", 1, w, 3, 3, 2, 2, 1, 1, rng);
  convs_.emplace_back(*this, "conv1", w, 2 * w, 3, 3, 2, 2, 1, 1, rng);
  convs_.emplace_back(*this, "conv2", 2 * w, 4 * w, 3, 3, 2, 2, 1, 1, rng);
  head_ = Linear(*this, "head", 4 * w, cfg.style_dim, rng);
}

Var StyleEncoder::forward(Var mel) const {
  if (mel.value().ndim() != 3 || mel.value().size(1) != n_bands_)
    throw std::invalid_argument("StyleEncoder: want [B," + std::to_string(n_bands_) + ",T]");
  const int64_t B = mel.value().size(0);
  Var x = reshape(normalize_mel_input(mel, log_floor_), {B, 1, mel.value().size(1), mel.value().size(2)});
  for (const auto& c : convs_) x = leaky_relu(c.forward(x));
  Var pooled = mean_trailing(x, 2);  // [B, 4w]
  return head_.forward(pooled);
}

StyleVector StyleEncoder::encode(const MelSpectrogram& x_ref) const {
  Var mel = constant(x_ref.values);
  Var s = forward(reshape(mel, {1, x_ref.n_bands(), x_ref.n_frames()}));
  Tensor v({s.value().size(1)});
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = s.value()[i];
  return StyleVector{std::move(v)};
}

// ---------------------------------------------------------------------------
// F0Network
// ---------------------------------------------------------------------------

F0Network::F0Network(const NetworkConfig& cfg, const AudioConfig& audio)
    : voiced_threshold_(std::log(audio.log_floor) + 1.0),
      log_floor_(std::log(audio.log_floor)),
      n_bands_(audio.n_mel_bands) {
  cfg.validate(audio);
  std::mt19937_64 rng(cfg.f0_seed);
  const int c = cfg.f0_channels;
  convs_.emplace_back(*this, "conv0", 1, c / 2 < 1 ? 1 : c / 2, 3, 3, 2, 1, 1, 1, rng,
                      /*trainable=*/false, /*tanh_init=*/true);
  convs_.emplace_back(*this, "conv1", c / 2 < 1 ? 1 : c / 2, c, 3, 3, 2, 1, 1, 1, rng, false, true);
  convs_.emplace_back(*this, "conv2", c, c, 3, 3, 2, 1, 1, 1, rng, false, true);
  auto centers = mel_band_centers_hz(audio);
  band_centers_ = Tensor({1, audio.n_mel_bands});
  for (int i = 0; i < audio.n_mel_bands; ++i) band_centers_.at2(0, i) = centers[static_cast<size_t>(i)];
  mark_frozen();
}

F0Network::Out F0Network::forward(Var mel) const {
  if (mel.value().ndim() != 3 || mel.value().size(1) != n_bands_)
    throw std::invalid_argument("F0Network: want [B," + std::to_string(n_bands_) + ",T]");
  const int64_t B = mel.value().size(0), N = mel.value().size(1), T = mel.value().size(2);

  Var x = reshape(normalize_mel_input(mel, log_floor_), {B, 1, N, T});
  for (const auto& c : convs_) x = tanh_v(c.forward(x));
  // collapse the frequency axis: [B,C,F,T] -> [B,C,T]
  const int64_t C = x.value().size(1), F = x.value().size(2);
  Var flat = reshape(x, {B * C, F, T});
  Var features = scale(reshape(sum_mid(flat), {B, C, T}), 1.0 / static_cast<double>(F));

  // per-frame pitch: sharpened softmax over bands, dotted with band centers
  Var centers = constant(band_centers_);
  std::vector<Var> rows;
  rows.reserve(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) {
    Var m = reshape(narrow(mel, 0, b, 1), {N, T});
    Var sm = softmax_cols(scale(m, softmax_sharpness_));
    Var f0 = matmul(centers, sm);  // [1,T]
    Tensor mask({1, T});
    for (int64_t t = 0; t < T; ++t) {
      double peak = m.value().at2(0, t);
      for (int64_t n = 1; n < N; ++n) peak = std::max(peak, m.value().at2(n, t));
      mask.at2(0, t) = peak > voiced_threshold_ ? 1.0 : 0.0;
    }
    rows.push_back(reshape(mul(f0, constant(mask)), {T}));
  }
  return {features, stack_vars(rows)};
}

F0Features F0Network::extract(const MelSpectrogram& x) const {
  Var mel = constant(x.values);
  Out out = forward(reshape(mel, {1, x.n_bands(), x.n_frames()}));
  const int64_t C = out.features.value().size(1), T = out.features.value().size(2);
  Tensor h({C, T});
  for (int64_t i = 0; i < h.numel(); ++i) h[i] = out.features.value()[i];
  Tensor f0({T});
  for (int64_t t = 0; t < T; ++t) f0[t] = out.f0_hz.value()[t];
  return F0Features{std::move(h), std::move(f0)};
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

Generator::Generator(const NetworkConfig& cfg, const AudioConfig& audio, std::mt19937_64& rng)
    : n_bands_(audio.n_mel_bands),
      f0_channels_(cfg.f0_channels),
      log_floor_(std::log(audio.log_floor)) {
  cfg.validate(audio);
  const int w0 = cfg.base_width;
  in_conv_ = Conv2dLayer(*this, "enc.in", 1, w0, 3, 3, 1, 1, 1, 1, rng);
  int w = w0;
  for (int i = 0; i < cfg.num_stages; ++i) {
    const int wn = w * 2;
    const std::string tag = "enc.s" + std::to_string(i);
    down_convs_.emplace_back(*this, tag + ".conv1", w, wn, 3, 3, 2, 1, 1, 1, rng);
    down_convs_.emplace_back(*this, tag + ".conv2", wn, wn, 3, 3, 1, 1, 1, 1, rng);
    down_skips_.emplace_back(*this, tag + ".skip", w, wn, 1, 1, 2, 1, 0, 0, rng);
    w = wn;
  }
  latent_channels_ = w * (audio.n_mel_bands >> cfg.num_stages);

  const int d = cfg.decoder_width;
  dec_in_ = Conv1dLayer(*this, "dec.in", latent_channels_ + cfg.f0_channels, d, 3, 1, 1, 1, rng);
  for (int i = 0; i < cfg.decoder_blocks; ++i) {
    const std::string tag = "dec.b" + std::to_string(i);
    DecBlock blk;
    blk.a.affine = Linear(*this, tag + ".adain1", cfg.style_dim, 2 * d, rng, true, 0.01);
    blk.a.conv = Conv1dLayer(*this, tag + ".conv1", d, d, 3, 1, 1, 1, rng);
    blk.b.affine = Linear(*this, tag + ".adain2", cfg.style_dim, 2 * d, rng, true, 0.01);
    blk.b.conv = Conv1dLayer(*this, tag + ".conv2", d, d, 3, 1, 1, 1, rng);
    dec_blocks_.push_back(std::move(blk));
  }
  dec_out_ = Conv1dLayer(*this, "dec.out", d, audio.n_mel_bands, 3, 1, 1, 1, rng);
  // a fresh generator emits silence: output bias starts at the log floor
  dec_out_.b.set_value(Tensor::full({audio.n_mel_bands}, log_floor_));
}

Var Generator::encode(Var mel) const {
  if (mel.value().ndim() != 3 || mel.value().size(1) != n_bands_)
    throw std::invalid_argument("Generator: want [B," + std::to_string(n_bands_) + ",T]");
  const int64_t B = mel.value().size(0), T = mel.value().size(2);
  Var x = leaky_relu(
      in_conv_.forward(reshape(normalize_mel_input(mel, log_floor_), {B, 1, n_bands_, T})));
  for (size_t i = 0; i < down_skips_.size(); ++i) {
    Var y = down_convs_[2 * i].forward(leaky_relu(x));
    y = down_convs_[2 * i + 1].forward(leaky_relu(y));
    x = add(y, down_skips_[i].forward(x));
  }
  const int64_t C = x.value().size(1), F = x.value().size(2);
  return reshape(x, {B, C * F, T});
}

Var Generator::styled(const AdainPair& p, Var x, Var style) const {
  const int64_t C = x.value().size(1);
  Var affine = p.affine.forward(style);  // [B, 2C]
  Var gamma = add_scalar(narrow(affine, 1, 0, C), 1.0);
  Var beta = narrow(affine, 1, C, C);
  return p.conv.forward(leaky_relu(adain_core(x, gamma, beta)));
}

Var Generator::forward(Var mel, Var style, Var f0_features) const {
  Var h_x = encode(mel);
  if (f0_features.value().ndim() != 3 || f0_features.value().size(1) != f0_channels_)
    throw std::invalid_argument("Generator: f0 features want [B," + std::to_string(f0_channels_) +
                                ",T]");
  if (f0_features.value().size(2) != h_x.value().size(2))
    throw std::invalid_argument("Generator: temporal length mismatch between latent (" +
                                std::to_string(h_x.value().size(2)) + ") and f0 features (" +
                                std::to_string(f0_features.value().size(2)) + ")");
  Var z = dec_in_.forward(concat(h_x, f0_features, 1));
  for (const auto& blk : dec_blocks_) {
    Var t = styled(blk.a, z, style);
    t = styled(blk.b, t, style);
    z = add(z, t);
  }
  return dec_out_.forward(leaky_relu(z));
}

MelSpectrogram Generator::generate(const MelSpectrogram& x_src, const StyleVector& s,
                                   const F0Features& f0) const {
  const int64_t T = x_src.n_frames();
  Var mel = reshape(constant(x_src.values), {1, x_src.n_bands(), T});
  Var style = reshape(constant(s.values), {1, s.values.size(0)});
  Var h = reshape(constant(f0.h_f0), {1, f0.h_f0.size(0), f0.h_f0.size(1)});
  Var out = forward(mel, style, h);
  Tensor v({out.value().size(1), out.value().size(2)});
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = out.value()[i];
  return MelSpectrogram(std::move(v));
}

// ---------------------------------------------------------------------------
// Vocoder
// ---------------------------------------------------------------------------

Vocoder::Vocoder(const AudioConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  const int n_freq = cfg.fft_size / 2 + 1;
  const int N = cfg.n_mel_bands;
  const Tensor fb = mel_filterbank(cfg);

  Eigen::MatrixXd fb_e(N, n_freq);
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < n_freq; ++k) fb_e(n, k) = fb.at2(n, k);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(fb_e);
  Eigen::MatrixXd pinv = cod.pseudoInverse();  // [n_freq, N]

  Tensor pinv_t({n_freq, N});
  for (int k = 0; k < n_freq; ++k)
    for (int n = 0; n < N; ++n) pinv_t.at2(k, n) = pinv(k, n);
  pinv_ = constant(std::move(pinv_t));

  const int W = cfg.window_length;
  window_ = Tensor({W});
  for (int j = 0; j < W; ++j) window_[j] = 0.5 - 0.5 * std::cos(2.0 * kPi * j / W);

  Tensor syn({W, n_freq});
  for (int j = 0; j < W; ++j) {
    const double n_rel = static_cast<double>(j - W / 2);
    for (int k = 0; k < n_freq; ++k) {
      const double c = (k == 0 || k == cfg.fft_size / 2) ? 1.0 : 2.0;
      syn.at2(j, k) =
          window_[j] * c * std::cos(2.0 * kPi * k * n_rel / cfg.fft_size) / cfg.fft_size;
    }
  }
  synthesis_ = constant(std::move(syn));
}

Var Vocoder::forward(Var mel) const {
  if (mel.value().ndim() != 2)
    throw std::invalid_argument("Vocoder: want a single [N,T] mel");
  if (mel.value().size(0) != cfg_.n_mel_bands)
    throw std::invalid_argument("Vocoder: band count mismatch (got " +
                                std::to_string(mel.value().size(0)) + ", configured " +
                                std::to_string(cfg_.n_mel_bands) + ")");
  const int64_t T = mel.value().size(1);
  if (T < 2) throw std::invalid_argument("Vocoder: need at least 2 frames");
  const int64_t L = output_length(T);
  const int W = cfg_.window_length;

  Var mag = exp_v(mel);                       // undo the log
  Var spec = matmul(pinv_, mag);              // [n_freq, T]
  Var frames = matmul(synthesis_, spec);      // [W, T]
  Var raw = overlap_add(frames, cfg_.hop_length, L, W / 2);

  Tensor wsum({L});
  for (int64_t t = 0; t < T; ++t)
    for (int j = 0; j < W; ++j) {
      const int64_t n = t * cfg_.hop_length + j - W / 2;
      if (n >= 0 && n < L) wsum[n] += window_[j];
    }
  Tensor inv({L});
  for (int64_t n = 0; n < L; ++n) inv[n] = 1.0 / std::max(wsum[n], 1e-8);
  return mul(raw, constant(std::move(inv)));
}

Waveform Vocoder::vocode(const MelSpectrogram& mel) const {
  Var out = forward(constant(mel.values));
  std::vector<double> s(static_cast<size_t>(out.value().numel()));
  for (int64_t i = 0; i < out.value().numel(); ++i) s[static_cast<size_t>(i)] = out.value()[i];
  return Waveform(std::move(s), cfg_.sample_rate_hz);
}

uint64_t Vocoder::parameter_hash() const {
  uint64_t h = 0xCBF29CE484222325ULL;
  const Tensor& p = pinv_.value();
  h = fnv1a64(p.data(), static_cast<size_t>(p.numel()) * sizeof(double), h);
  const Tensor& s = synthesis_.value();
  h = fnv1a64(s.data(), static_cast<size_t>(s.numel()) * sizeof(double), h);
  h = fnv1a64(window_.data(), static_cast<size_t>(window_.numel()) * sizeof(double), h);
  return h;
}

}  // namespace slmvc
