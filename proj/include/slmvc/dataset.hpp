#pragma once

#include <string>
#include <vector>

#include "slmvc/audio.hpp"

namespace slmvc {

/// Speaker/utterance roster with split tags. Seen speakers get a 90/10
/// train/val utterance split; unseen speakers contribute nothing to
/// training and exist for zero-shot evaluation.
struct DatasetManifest {
  struct Utterance {
    std::string path;
    bool val = false;
  };
  struct Speaker {
    std::string name;
    bool seen = true;
    std::vector<Utterance> utterances;
  };

  uint64_t seed = 0;
  double unseen_fraction = 0.0;
  int sample_rate_hz = 22050;
  std::vector<Speaker> speakers;

  std::vector<std::string> seen_roster() const;
  int64_t count_train_utterances() const;
};

/// Scans root_dir (one subdirectory per speaker, WAV files inside),
/// validates the audio, and produces a deterministic split.
DatasetManifest ingest(const std::string& root_dir, uint64_t seed, double unseen_fraction);

void write_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::string& path);

/// Manifest materialized in memory: audio loaded and resampled to the
/// configured rate, train/val utterances indexed by seen-roster speaker.
struct LoadedDataset {
  struct Utterance {
    int speaker = 0;  // index into roster
    std::string path;
    std::vector<double> samples;  // at `rate`
  };

  std::vector<std::string> roster;  // seen speakers, index = SpeakerId
  std::vector<Utterance> train;
  std::vector<Utterance> val;
  std::vector<std::vector<int>> train_by_speaker;  // roster index -> train utterance ids
  int rate = 22050;

  static LoadedDataset load(const DatasetManifest& m, int target_rate_hz);
};

}  // namespace slmvc
