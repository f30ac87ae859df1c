#pragma once

#include <string>
#include <vector>

#include "slmvc/training.hpp"

namespace slmvc {

/// Wall-clock conversion speed: processing seconds per second of audio.
struct RtfReport {
  double audio_seconds = 0;
  double processing_seconds = 0;
  double rtf = 0;
  std::string hardware;

  RtfReport(double audio_s, double processing_s, std::string hw);
};

/// Full conversion pipeline: mel analysis, pitch features from the source,
/// style from the reference, generation, vocoding.
Waveform convert_voice(const CheckpointBundle& bundle, const Waveform& src, const Waveform& ref);
void convert_file(const std::string& ckpt_dir, const std::string& src_path,
                  const std::string& ref_path, const std::string& out_path);

/// 13-row CSV (layer_index,importance) from the feature critic's head.
LayerImportance analyze_weights_csv(const std::string& ckpt_dir, const std::string& out_csv,
                                    ImportanceNorm norm = ImportanceNorm::kFrobenius);
void write_importance_csv(const std::string& path, const LayerImportance& li);

RtfReport bench_rtf(const std::string& ckpt_dir, const std::vector<std::string>& wav_paths);

std::string hardware_string();

}  // namespace slmvc
