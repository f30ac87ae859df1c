#include "slmvc/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "slmvc/dsp.hpp"

namespace slmvc {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void Waveform::validate() const {
  if (sample_rate_hz <= 0) throw std::invalid_argument("Waveform: sample rate must be positive");
  if (samples.empty()) throw std::invalid_argument("Waveform: empty");
  for (double s : samples)
    if (!std::isfinite(s)) throw std::invalid_argument("Waveform: non-finite sample");
}

void MelSpectrogram::validate() const {
  if (values.ndim() != 2 || values.size(0) < 1 || values.size(1) < 1)
    throw std::invalid_argument("MelSpectrogram: want non-empty [N,T]");
  if (!values.all_finite()) throw std::invalid_argument("MelSpectrogram: non-finite entry");
}

void AudioConfig::validate() const {
  if (sample_rate_hz <= 0) throw ConfigError("AudioConfig: sample_rate_hz must be positive");
  if (n_mel_bands < 1) throw ConfigError("AudioConfig: n_mel_bands must be >= 1");
  if (!(hop_length <= window_length && window_length <= fft_size))
    throw ConfigError("AudioConfig: need hop <= window <= fft");
  if (hop_length <= 0) throw ConfigError("AudioConfig: hop_length must be positive");
  if ((fft_size & (fft_size - 1)) != 0) throw ConfigError("AudioConfig: fft_size must be a power of two");
  if (log_floor <= 0) throw ConfigError("AudioConfig: log_floor must be positive");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Tensor mel_filterbank(const AudioConfig& cfg) {
  cfg.validate();
  const int n_freq = cfg.fft_size / 2 + 1;
  const double f_max = cfg.sample_rate_hz / 2.0;
  const double m_max = hz_to_mel(f_max);
  const int N = cfg.n_mel_bands;
  std::vector<double> hz(N + 2);
  for (int i = 0; i < N + 2; ++i) hz[i] = mel_to_hz(m_max * i / (N + 1));
  Tensor fb({N, n_freq});
  for (int n = 0; n < N; ++n) {
    const double lo = hz[n], mid = hz[n + 1], hi = hz[n + 2];
    for (int k = 0; k < n_freq; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate_hz / cfg.fft_size;
      double w = 0;
      if (f > lo && f < hi) w = (f <= mid) ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      fb.at2(n, k) = w;
    }
  }
  for (int n = 0; n < N; ++n) {
    double s = 0;
    for (int k = 0; k < n_freq; ++k) s += fb.at2(n, k);
    if (s == 0)
      throw ConfigError("AudioConfig: mel band " + std::to_string(n) +
                        " has no FFT bins; reduce n_mel_bands or raise fft_size");
  }
  return fb;
}

std::vector<double> mel_band_centers_hz(const AudioConfig& cfg) {
  const double m_max = hz_to_mel(cfg.sample_rate_hz / 2.0);
  std::vector<double> centers(static_cast<size_t>(cfg.n_mel_bands));
  for (int n = 0; n < cfg.n_mel_bands; ++n)
    centers[static_cast<size_t>(n)] = mel_to_hz(m_max * (n + 1) / (cfg.n_mel_bands + 1));
  return centers;
}

namespace {

// FFTW plans keyed by size; results are bit-stable for a given binary.
struct FftCache {
  std::map<int, fftw_plan> plans;
  std::map<int, double*> in;
  std::map<int, fftw_complex*> out;
  std::mutex mu;

  void run(int n, const std::vector<double>& frame, std::vector<double>& mag) {
    std::lock_guard<std::mutex> lock(mu);
    if (!plans.count(n)) {
      double* i = fftw_alloc_real(static_cast<size_t>(n));
      fftw_complex* o = fftw_alloc_complex(static_cast<size_t>(n / 2 + 1));
      plans[n] = fftw_plan_dft_r2c_1d(n, i, o, FFTW_ESTIMATE);
      in[n] = i;
      out[n] = o;
    }
    std::copy(frame.begin(), frame.end(), in[n]);
    fftw_execute(plans[n]);
    mag.resize(static_cast<size_t>(n / 2 + 1));
    for (int k = 0; k <= n / 2; ++k)
      mag[static_cast<size_t>(k)] = std::hypot(out[n][k][0], out[n][k][1]);
  }
};

FftCache& fft_cache() {
  static FftCache c;
  return c;
}

double reflect_sample(const std::vector<double>& x, int64_t idx) {
  const int64_t n = static_cast<int64_t>(x.size());
  if (n == 1) return x[0];
  while (idx < 0 || idx >= n) {
    if (idx < 0) idx = -idx;
    if (idx >= n) idx = 2 * n - 2 - idx;
  }
  return x[static_cast<size_t>(idx)];
}

}  // namespace

MelSpectrogram compute_mel(const Waveform& wav, const AudioConfig& cfg) {
  cfg.validate();
  wav.validate();
  if (wav.sample_rate_hz != cfg.sample_rate_hz)
    throw ConfigError("compute_mel: waveform rate " + std::to_string(wav.sample_rate_hz) +
                      " does not match configured rate " + std::to_string(cfg.sample_rate_hz));

  const int64_t L = static_cast<int64_t>(wav.samples.size());
  const int64_t T = cfg.frames_for(L);
  const int W = cfg.window_length;
  const int nfft = cfg.fft_size;
  std::vector<double> window(static_cast<size_t>(W));
  for (int j = 0; j < W; ++j) window[static_cast<size_t>(j)] = 0.5 - 0.5 * std::cos(2.0 * kPi * j / W);

  const Tensor fb = mel_filterbank(cfg);
  const int n_freq = nfft / 2 + 1;
  Tensor out({cfg.n_mel_bands, T});
  std::vector<double> frame(static_cast<size_t>(nfft), 0.0);
  std::vector<double> mag;
  for (int64_t t = 0; t < T; ++t) {
    const int64_t center = t * cfg.hop_length;
    std::fill(frame.begin(), frame.end(), 0.0);
    for (int j = 0; j < W; ++j)
      frame[static_cast<size_t>(j)] =
          window[static_cast<size_t>(j)] * reflect_sample(wav.samples, center - W / 2 + j);
    fft_cache().run(nfft, frame, mag);
    for (int n = 0; n < cfg.n_mel_bands; ++n) {
      double acc = 0;
      const double* row = fb.data() + static_cast<int64_t>(n) * n_freq;
      for (int k = 0; k < n_freq; ++k) acc += row[k] * mag[static_cast<size_t>(k)];
      out.at2(n, t) = std::log(std::max(acc, cfg.log_floor));
    }
  }
  return MelSpectrogram(std::move(out));
}

Waveform resample(const Waveform& wav, int target_rate_hz) {
  wav.validate();
  if (target_rate_hz <= 0) throw std::invalid_argument("resample: target rate must be positive");
  if (target_rate_hz == wav.sample_rate_hz) return wav;
  std::vector<double> y = dsp::resample_sinc(wav.samples.data(),
                                             static_cast<int64_t>(wav.samples.size()),
                                             wav.sample_rate_hz, target_rate_hz);
  return Waveform(std::move(y), target_rate_hz);
}

double frame_norm(const MelSpectrogram& mel, int64_t t) {
  if (t < 0 || t >= mel.n_frames()) throw std::out_of_range("frame_norm: frame index out of range");
  double acc = 0;
  for (int64_t n = 0; n < mel.n_bands(); ++n) acc += std::abs(mel.values.at2(n, t));
  return acc;
}

}  // namespace slmvc
