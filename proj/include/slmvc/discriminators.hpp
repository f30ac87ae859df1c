#pragma once

#include <vector>

#include "slmvc/slm.hpp"

namespace slmvc {

/// Speaker-conditional mel critic: conv stack over the mel image with one
/// output channel per training speaker; the score for speaker y is the
/// spatial mean of channel y.
class MelDiscriminator : public Module {
 public:
  MelDiscriminator(const NetworkConfig& cfg, const AudioConfig& audio, int roster_size,
                   std::mt19937_64& rng);

  Var forward_map(Var mel) const;  // [B,N,T] -> [B,R,F',T']
  /// Spatial mean of the labeled channel, one score per sample.
  static Var scores_from_map(Var map, const std::vector<int>& labels);
  Var scores(Var mel, const std::vector<int>& labels) const;
  double score(const MelSpectrogram& mel, SpeakerId y) const;

  int roster_size() const { return roster_size_; }

 private:
  std::vector<Conv2dLayer> convs_;
  Conv2dLayer out_conv_;
  int roster_size_;
  int n_bands_;
  double log_floor_;
};

/// Unconditional critic over projected SLM features of the waveform.
class SlmDiscriminator : public Module {
 public:
  SlmDiscriminator(const NetworkConfig& cfg, std::mt19937_64& rng);

  /// 13 layer maps [B,768,T'] -> per-sample scores [B].
  Var scores_from_layers(const std::vector<Var>& layers) const;
  double score(const SlmBackbone& backbone, const Waveform& wav) const;

  ProjectionHead head_snapshot() const;

 private:
  Var proj_w_, proj_b_;
  std::vector<Conv2dLayer> convs_;
  Conv2dLayer out_conv_;
};

/// Source-speaker classifier over projected SLM features of the waveform.
class SourceClassifier : public Module {
 public:
  SourceClassifier(const NetworkConfig& cfg, int roster_size, std::mt19937_64& rng);

  Var logits_from_layers(const std::vector<Var>& layers) const;  // [B,R]
  std::vector<double> classify(const SlmBackbone& backbone, const Waveform& wav) const;

  int roster_size() const { return roster_size_; }

 private:
  Var proj_w_, proj_b_;
  std::vector<Conv2dLayer> convs_;
  Linear head_;  // consumes conv-pooled features plus the time-averaged projection
  int roster_size_;
};

}  // namespace slmvc
