#pragma once

#include <string>

#include "slmvc/audio.hpp"
#include "slmvc/losses.hpp"
#include "slmvc/networks.hpp"
#include "slmvc/training_types.hpp"

namespace slmvc {

/// Everything one run needs, parsed from a `key = value` text file.
/// Unknown keys fail loudly so typos cannot silently fall back to defaults.
struct RunConfig {
  AudioConfig audio;
  NetworkConfig net;
  LossWeights loss;
  TrainSchedule sched;
  OptimConfig optim;
  uint64_t seed = 1234;
  std::string data_manifest;
  std::string run_dir = "runs/default";

  void validate() const;
};

RunConfig parse_run_config_text(const std::string& text);
RunConfig parse_run_config(const std::string& path);
std::string serialize_run_config(const RunConfig& cfg);
void write_run_config(const std::string& path, const RunConfig& cfg);

}  // namespace slmvc
