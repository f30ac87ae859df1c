#pragma once

#include <array>
#include <vector>

#include "slmvc/audio.hpp"
#include "slmvc/networks.hpp"
#include "slmvc/nn.hpp"

namespace slmvc {

inline constexpr int kSlmLayers = 13;       // front-end output + 12 blocks
inline constexpr int kSlmFeatureDim = 768;  // per-layer feature width
inline constexpr int kSlmRateHz = 16000;
inline constexpr int kSlmFrameStride = 320;

/// Per-layer frame features from the frozen speech encoder.
struct SlmFeatureStack {
  std::vector<Tensor> layers;  // 13 maps, each [T', 768]
  int input_rate_hz = kSlmRateHz;
  int frame_stride_samples = kSlmFrameStride;

  int64_t n_frames() const { return layers.empty() ? 0 : layers.front().size(0); }
  void validate() const;
};

/// Linear input head of the feature critics: (13*768) -> 256 per frame.
struct ProjectionHead {
  Tensor weight;  // [13*768, 256]
  Tensor bias;    // [256]
};

struct LayerImportance {
  std::array<double, kSlmLayers> importance{};
};

enum class ImportanceNorm { kFrobenius, kL1 };

/// Frozen surrogate speech encoder: a strided conv front-end at 16 kHz
/// (stride product 320) followed by 12 grouped residual conv blocks, each
/// emitting a 768-dim frame map. Deterministic and differentiable.
class SlmBackbone : public Module {
 public:
  explicit SlmBackbone(uint64_t seed);

  /// wav16 [B, L] at 16 kHz -> 13 layer maps, each [B, 768, T'].
  std::vector<Var> forward(Var wav16) const;

  /// Any input rate; resampled internally. Differentiable path for training.
  std::vector<Var> forward_any_rate(Var wav, int rate_hz) const;

  int64_t frames_for(int64_t n_samples_16k) const { return n_samples_16k / kSlmFrameStride; }

 private:
  Conv1dLayer front_;
  std::vector<Conv1dLayer> blocks_;
};

/// Full 13-layer stack for one waveform (eval path).
SlmFeatureStack extract_slm(const SlmBackbone& backbone, const Waveform& wav);

/// Layers 6..9 concatenated, the linguistic-content slice: [T', 4*768].
Tensor consistency_features(const SlmFeatureStack& stack);
/// Same selection on the differentiable path: [B, 4*768, T'].
Var consistency_concat(const std::vector<Var>& layers);

/// Per-frame affine projection of the concatenated stack: [T', 256].
Tensor project(const SlmFeatureStack& stack, const ProjectionHead& head);
/// Differentiable path: 13 x [B,768,T'] with head Vars -> [B, T', 256].
Var project_concat(const std::vector<Var>& layers, Var weight, Var bias);

/// Normalized per-layer weight magnitude of the projection head.
LayerImportance layer_importance(const ProjectionHead& head,
                                 ImportanceNorm norm = ImportanceNorm::kFrobenius);

}  // namespace slmvc
