#pragma once

#include <stdexcept>

#include "slmvc/optim.hpp"

namespace slmvc {

/// Epoch-staged activation of the feature critic, bCR and the source
/// classifier, plus batching geometry. Start epochs are 0-based: a module
/// with start epoch 20 is inactive for epochs 0..19 and active from 20 on.
struct TrainSchedule {
  int total_epochs = 90;
  int slm_d_start_epoch = 20;
  int bcr_start_epoch = 20;
  int cls_start_epoch = 35;
  int batch_size = 28;
  double segment_seconds = 2.0;
  int steps_per_epoch = 0;  // 0 = ceil(train utterances / batch_size)
  int checkpoint_every = 5;
  bool mel_ce_after_warmup = false;  // keep the warm-up CE form after slm_d_start_epoch

  void validate() const {
    if (total_epochs < 1) throw std::invalid_argument("TrainSchedule: total_epochs must be >= 1");
    if (slm_d_start_epoch <= 0 || slm_d_start_epoch > total_epochs)
      throw std::invalid_argument("TrainSchedule: need 0 < slm_d_start <= total");
    if (cls_start_epoch <= 0 || cls_start_epoch > total_epochs)
      throw std::invalid_argument("TrainSchedule: need 0 < cls_start <= total");
    if (bcr_start_epoch <= 0 || bcr_start_epoch > total_epochs)
      throw std::invalid_argument("TrainSchedule: need 0 < bcr_start <= total");
    if (batch_size < 1) throw std::invalid_argument("TrainSchedule: batch_size must be >= 1");
    if (segment_seconds <= 0) throw std::invalid_argument("TrainSchedule: segment_seconds must be > 0");
    if (steps_per_epoch < 0 || checkpoint_every < 1)
      throw std::invalid_argument("TrainSchedule: bad steps/checkpoint settings");
  }
};

}  // namespace slmvc
