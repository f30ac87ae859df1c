#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "slmvc/tensor.hpp"

namespace slmvc {

/// Configuration problems (wrong rates, invalid schedules, bad key files).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mono audio with an explicit sample rate.
struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = 0;

  Waveform() = default;
  Waveform(std::vector<double> s, int rate) : samples(std::move(s)), sample_rate_hz(rate) {
    validate();
  }

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }

  void validate() const;
};

/// Log-amplitude mel spectrogram, values[n_bands, n_frames].
struct MelSpectrogram {
  Tensor values;  // [N, T]

  MelSpectrogram() = default;
  explicit MelSpectrogram(Tensor v) : values(std::move(v)) { validate(); }

  int64_t n_bands() const { return values.size(0); }
  int64_t n_frames() const { return values.size(1); }
  void validate() const;
};

/// Index into the training speaker roster.
struct SpeakerId {
  int index = 0;
};

struct AudioConfig {
  int sample_rate_hz = 22050;
  int n_mel_bands = 80;
  int fft_size = 1024;
  int hop_length = 256;
  int window_length = 1024;
  double log_floor = 1e-5;

  void validate() const;
  int64_t frames_for(int64_t n_samples) const { return n_samples / hop_length + 1; }
};

/// Triangular mel filterbank on the HTK scale, [n_mels, fft/2+1].
Tensor mel_filterbank(const AudioConfig& cfg);
double hz_to_mel(double hz);
double mel_to_hz(double mel);
/// Center frequency in Hz of each mel band.
std::vector<double> mel_band_centers_hz(const AudioConfig& cfg);

/// STFT magnitude -> mel -> natural log with floor clamp. Centered frames,
/// T = floor(len/hop) + 1.
MelSpectrogram compute_mel(const Waveform& wav, const AudioConfig& cfg);

/// Band-limited windowed-sinc resampling; deterministic, exact copy when
/// target equals source.
Waveform resample(const Waveform& wav, int target_rate_hz);

/// L1 norm of frame column t (0-based).
double frame_norm(const MelSpectrogram& mel, int64_t t);

// mono WAV files (PCM16 or float32)
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& wav, bool float32 = false);

}  // namespace slmvc
