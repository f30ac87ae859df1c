#include "slmvc/tooling.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

namespace slmvc {

RtfReport::RtfReport(double audio_s, double processing_s, std::string hw)
    : audio_seconds(audio_s), processing_seconds(processing_s), hardware(std::move(hw)) {
  if (audio_seconds <= 0) throw std::invalid_argument("RtfReport: no audio measured");
  if (processing_seconds <= 0) throw std::invalid_argument("RtfReport: no processing time measured");
  rtf = processing_seconds / audio_seconds;
}

Waveform convert_voice(const CheckpointBundle& bundle, const Waveform& src, const Waveform& ref) {
  const AudioConfig& audio = bundle.config.audio;
  const ModelSet& m = *bundle.models;
  Waveform src_r = resample(src, audio.sample_rate_hz);
  Waveform ref_r = resample(ref, audio.sample_rate_hz);
  MelSpectrogram x_src = compute_mel(src_r, audio);
  MelSpectrogram x_ref = compute_mel(ref_r, audio);
  StyleVector style = m.style_encoder.encode(x_ref);
  F0Features f0 = m.f0_network.extract(x_src);
  MelSpectrogram converted = m.generator.generate(x_src, style, f0);
  return m.vocoder.vocode(converted);
}

void convert_file(const std::string& ckpt_dir, const std::string& src_path,
                  const std::string& ref_path, const std::string& out_path) {
  CheckpointBundle bundle = load_checkpoint_bundle(ckpt_dir);
  Waveform out = convert_voice(bundle, read_wav(src_path), read_wav(ref_path));
  write_wav(out_path, out);
}

void write_importance_csv(const std::string& path, const LayerImportance& li) {
  std::ofstream os(path);
  if (!os) throw std::invalid_argument("cannot write " + path);
  os << "layer_index,importance\n";
  os.precision(12);
  for (int l = 0; l < kSlmLayers; ++l) os << l << "," << li.importance[static_cast<size_t>(l)] << "\n";
}

LayerImportance analyze_weights_csv(const std::string& ckpt_dir, const std::string& out_csv,
                                    ImportanceNorm norm) {
  CheckpointBundle bundle = load_checkpoint_bundle(ckpt_dir);
  LayerImportance li = layer_importance(bundle.models->slm_d.head_snapshot(), norm);
  write_importance_csv(out_csv, li);
  return li;
}

RtfReport bench_rtf(const std::string& ckpt_dir, const std::vector<std::string>& wav_paths) {
  if (wav_paths.empty()) throw std::invalid_argument("bench_rtf: need at least one input file");
  CheckpointBundle bundle = load_checkpoint_bundle(ckpt_dir);

  std::vector<Waveform> wavs;
  double audio_seconds = 0;
  for (const auto& p : wav_paths) {
    wavs.push_back(read_wav(p));
    audio_seconds += wavs.back().duration_seconds();
  }
  const Waveform& ref = wavs.front();

  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& w : wavs) convert_voice(bundle, w, ref);
  const auto t1 = std::chrono::steady_clock::now();
  const double processing = std::chrono::duration<double>(t1 - t0).count();
  return RtfReport(audio_seconds, processing, hardware_string());
}

std::string hardware_string() {
  std::ifstream is("/proc/cpuinfo");
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        std::string name = line.substr(colon + 1);
        const auto a = name.find_first_not_of(" \t");
        return "cpu: " + (a == std::string::npos ? name : name.substr(a));
      }
    }
  }
  return "cpu: unknown";
}

}  // namespace slmvc
