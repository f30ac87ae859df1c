#pragma once

#include <memory>
#include <optional>
#include <random>
#include <string>

#include "slmvc/config.hpp"
#include "slmvc/dataset.hpp"
#include "slmvc/discriminators.hpp"
#include "slmvc/losses.hpp"

namespace slmvc {

/// Raised when a step produces a non-finite loss; the message carries the
/// last per-term diagnostic.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainingBatch {
  Tensor x_src;  // [B,N,T] mel segments
  Tensor x_ref;  // [B,N,T] mel segments of speakers y_trg
  std::vector<int> y_src;
  std::vector<int> y_trg;
  std::vector<int> src_utterance_ids;  // train-set indices, for split audits
  std::vector<int> ref_utterance_ids;
};

/// All networks of one run. Frozen surrogates are seeded from the network
/// config, trainable modules from the run seed.
struct ModelSet {
  ModelSet(const RunConfig& cfg, int roster_size);

  Generator generator;
  StyleEncoder style_encoder;
  F0Network f0_network;
  Vocoder vocoder;
  SlmBackbone slm_backbone;
  MelDiscriminator mel_d;
  SlmDiscriminator slm_d;
  SourceClassifier classifier;
  int roster_size;

  struct FrozenHashes {
    uint64_t vocoder = 0, f0_network = 0, slm_backbone = 0;
    bool operator==(const FrozenHashes&) const = default;
  };
  FrozenHashes frozen_hashes() const;

  /// Vocode each mel of the batch and return the 13 feature-stack layers.
  std::vector<Var> slm_layers_for_mels(Var mels) const;  // [B,N,T] -> 13 x [B,768,T']
};

/// One training run: alternating critic/generator steps with the epoch
/// gates, JSONL loss logging and periodic resumable checkpoints.
class Trainer {
 public:
  Trainer(RunConfig cfg, LoadedDataset data);

  TrainingBatch make_batch(std::mt19937_64& rng) const;
  LossReport discriminator_step(const TrainingBatch& batch, int epoch, std::mt19937_64& rng);
  LossReport generator_step(const TrainingBatch& batch, int epoch);

  /// Full run; returns the final checkpoint directory. With resume=true the
  /// latest checkpoint under run_dir is picked up and the log is appended.
  /// stop_after_epoch checkpoints and returns once that epoch completes,
  /// simulating an interruption.
  std::string run(bool resume = false, std::optional<int> stop_after_epoch = std::nullopt);

  void save_checkpoint(const std::string& dir, int epoch_done) const;
  int load_checkpoint(const std::string& dir);
  static std::optional<std::string> find_latest_checkpoint(const std::string& run_dir);

  ModelSet& models() { return *models_; }
  const RunConfig& config() const { return cfg_; }
  const LoadedDataset& dataset() const { return data_; }
  int steps_per_epoch() const;
  std::string loss_log_path() const;

 private:
  struct RealBranch {
    std::vector<Var> layers;  // detached stack of the vocoded real segments
  };
  RealBranch real_branch(const TrainingBatch& batch) const;
  LossReport discriminator_step_impl(const TrainingBatch& batch, int epoch,
                                     std::mt19937_64& rng, const RealBranch& real);
  LossReport generator_step_impl(const TrainingBatch& batch, int epoch, const RealBranch& real);
  void zero_all_grads() const;
  void check_finite(const LossReport& report, int epoch) const;

  RunConfig cfg_;
  LoadedDataset data_;
  std::unique_ptr<ModelSet> models_;
  std::unique_ptr<AdamW> opt_g_, opt_mel_, opt_slm_d_, opt_cls_;
  int64_t segment_samples_ = 0;
};

/// Models plus config restored from a checkpoint directory (for the
/// conversion and analysis commands).
struct CheckpointBundle {
  RunConfig config;
  std::vector<std::string> roster;
  std::unique_ptr<ModelSet> models;
  int epoch_done = 0;
};

CheckpointBundle load_checkpoint_bundle(const std::string& ckpt_dir);

}  // namespace slmvc
