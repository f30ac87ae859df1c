#pragma once

#include <random>
#include <vector>

#include "slmvc/audio.hpp"
#include "slmvc/nn.hpp"

namespace slmvc {

/// Speaker-style embedding produced by the style encoder.
struct StyleVector {
  Tensor values;  // [style_dim]
};

/// Conditioning features from the frozen pitch network: conv feature map
/// plus the scalar per-frame pitch track in Hz.
struct F0Features {
  Tensor h_f0;   // [C_f0, T]
  Tensor f0_hz;  // [T], entries >= 0
};

struct GeneratorLatent {
  Tensor h_x;  // [C_x, T]
};

struct NetworkConfig {
  int style_dim = 64;
  int base_width = 32;
  int num_stages = 3;       // frequency halvings in the encoder
  int decoder_width = 128;
  int decoder_blocks = 2;
  int f0_channels = 32;
  int disc_width = 32;      // critic conv width
  uint64_t f0_seed = 0xF0F0F0;
  uint64_t slm_seed = 0x51AB10;

  void validate(const AudioConfig& audio) const;
};

/// Reference-speech speaker encoder; a single shared head, no per-speaker
/// projections, so unseen speakers embed the same way as seen ones.
class StyleEncoder : public Module {
 public:
  StyleEncoder(const NetworkConfig& cfg, const AudioConfig& audio, std::mt19937_64& rng);
  Var forward(Var mel) const;  // [B,N,T] -> [B,style_dim]
  StyleVector encode(const MelSpectrogram& x_ref) const;

 private:
  std::vector<Conv2dLayer> convs_;
  Linear head_;
  int n_bands_;
  double log_floor_;
};

/// Frozen pitch feature extractor. Conv features condition the decoder;
/// the scalar track is a differentiable soft-argmax over mel band center
/// frequencies with a silence gate.
class F0Network : public Module {
 public:
  F0Network(const NetworkConfig& cfg, const AudioConfig& audio);

  struct Out {
    Var features;  // [B,C_f0,T]
    Var f0_hz;     // [B,T]
  };
  Out forward(Var mel) const;
  F0Features extract(const MelSpectrogram& x) const;

 private:
  std::vector<Conv2dLayer> convs_;
  Tensor band_centers_;  // [1,N]
  double voiced_threshold_;
  double log_floor_;
  double softmax_sharpness_ = 2.0;
  int n_bands_;
};

/// Mel-to-mel conversion network. A 2-D downsampling encoder over frequency
/// feeds a 1-D temporal decoder whose blocks are styled with AdaIN, so the
/// output frame count always equals the input frame count.
class Generator : public Module {
 public:
  Generator(const NetworkConfig& cfg, const AudioConfig& audio, std::mt19937_64& rng);

  Var forward(Var mel, Var style, Var f0_features) const;  // [B,N,T]x[B,S]x[B,C,T] -> [B,N,T]
  Var encode(Var mel) const;                               // latent [B,C_x,T]
  MelSpectrogram generate(const MelSpectrogram& x_src, const StyleVector& s,
                          const F0Features& f0) const;

  int latent_channels() const { return latent_channels_; }

 private:
  struct AdainPair {
    Linear affine;  // style -> [gamma-1, beta]
    Conv1dLayer conv;
  };
  struct DecBlock {
    AdainPair a, b;
  };
  Var styled(const AdainPair& p, Var x, Var style) const;

  Conv2dLayer in_conv_;
  std::vector<Conv2dLayer> down_convs_;   // stride (2,1) per stage
  std::vector<Conv2dLayer> down_skips_;   // 1x1 projections
  Conv1dLayer dec_in_;
  std::vector<DecBlock> dec_blocks_;
  Conv1dLayer dec_out_;
  int latent_channels_ = 0;
  int n_bands_;
  int f0_channels_;
  double log_floor_;
};

/// Frozen, differentiable mel inverter: log-mel -> magnitudes via the
/// filterbank pseudo-inverse, zero-phase frame synthesis, overlap-add.
class Vocoder {
 public:
  explicit Vocoder(const AudioConfig& cfg);

  Var forward(Var mel) const;  // [N,T] -> [hop*(T-1)]
  Waveform vocode(const MelSpectrogram& mel) const;
  int sample_rate_hz() const { return cfg_.sample_rate_hz; }
  int64_t output_length(int64_t n_frames) const { return cfg_.hop_length * (n_frames - 1); }
  uint64_t parameter_hash() const;

 private:
  AudioConfig cfg_;
  Var pinv_;       // [n_freq, n_mels], constant
  Var synthesis_;  // [win, n_freq], constant (IDFT + synthesis window)
  Tensor window_;
};

}  // namespace slmvc
