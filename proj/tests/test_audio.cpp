#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fftw3.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "slmvc/audio.hpp"

using namespace slmvc;

namespace {

Waveform tone(double freq, double seconds, int rate, double amp = 0.5) {
  std::vector<double> s(static_cast<size_t>(seconds * rate));
  for (size_t i = 0; i < s.size(); ++i)
    s[i] = amp * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / rate);
  return Waveform(std::move(s), rate);
}

// independent FFT peak finder used as the resampling oracle
double dominant_freq(const Waveform& w) {
  int n = 1;
  while (n < static_cast<int>(w.samples.size())) n <<= 1;
  std::vector<double> in(static_cast<size_t>(n), 0.0);
  std::copy(w.samples.begin(), w.samples.end(), in.begin());
  std::vector<double> re(static_cast<size_t>(n / 2 + 1)), im(re.size());
  fftw_complex* out = fftw_alloc_complex(static_cast<size_t>(n / 2 + 1));
  fftw_plan p = fftw_plan_dft_r2c_1d(n, in.data(), out, FFTW_ESTIMATE);
  fftw_execute(p);
  int best = 0;
  double best_mag = -1;
  for (int k = 0; k <= n / 2; ++k) {
    const double m = std::hypot(out[k][0], out[k][1]);
    if (m > best_mag) {
      best_mag = m;
      best = k;
    }
  }
  fftw_destroy_plan(p);
  fftw_free(out);
  return static_cast<double>(best) * w.sample_rate_hz / n;
}

}  // namespace

TEST_CASE("compute_mel: silence hits the log floor") {
  AudioConfig cfg;
  Waveform silence(std::vector<double>(22050, 0.0), 22050);
  MelSpectrogram mel = compute_mel(silence, cfg);
  const double floor_val = std::log(cfg.log_floor);
  for (int64_t i = 0; i < mel.values.numel(); ++i) CHECK(mel.values[i] == floor_val);
}

TEST_CASE("compute_mel: framing arithmetic and band count") {
  AudioConfig cfg;
  Waveform w = tone(330.0, 2.0, 22050);
  REQUIRE(w.samples.size() == 44100);
  MelSpectrogram mel = compute_mel(w, cfg);
  CHECK(mel.n_frames() == 173);  // floor(44100/256) + 1
  CHECK(mel.n_bands() == 80);
}

TEST_CASE("compute_mel: frame count formula over random lengths") {
  AudioConfig cfg;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> len(300, 30000);
  for (int i = 0; i < 50; ++i) {
    const int L = len(rng);
    std::vector<double> s(static_cast<size_t>(L), 0.01);
    MelSpectrogram mel = compute_mel(Waveform(std::move(s), 22050), cfg);
    CHECK(mel.n_frames() == L / cfg.hop_length + 1);
  }
}

TEST_CASE("compute_mel: errors") {
  AudioConfig cfg;
  Waveform w = tone(440.0, 0.5, 16000);
  CHECK_THROWS_AS(compute_mel(w, cfg), ConfigError);
  CHECK_THROWS_AS(Waveform(std::vector<double>{}, 22050), std::invalid_argument);
}

TEST_CASE("resample: exact ratio length and identity") {
  Waveform w = tone(440.0, 2.0, 22050);
  REQUIRE(w.samples.size() == 44100);
  Waveform r = resample(w, 16000);
  CHECK(r.samples.size() == 32000);
  CHECK(r.sample_rate_hz == 16000);

  Waveform same = resample(w, 22050);
  CHECK(same.samples == w.samples);

  CHECK_THROWS_AS(resample(w, 0), std::invalid_argument);
}

TEST_CASE("resample: deterministic and peak-preserving") {
  Waveform w = tone(440.0, 1.0, 22050);
  Waveform a = resample(w, 16000);
  Waveform b = resample(w, 16000);
  CHECK(a.samples == b.samples);

  const double peak = dominant_freq(a);
  const double bin = 16000.0 / 32768.0;  // oracle pads to 32768
  CHECK(std::abs(peak - 440.0) <= bin + 1e-9);
}

TEST_CASE("frame_norm: examples and properties") {
  Tensor v({3, 2});
  v.at2(0, 0) = 0;
  v.at2(1, 0) = 0;
  v.at2(2, 0) = 0;
  v.at2(0, 1) = 1;
  v.at2(1, 1) = -1;
  v.at2(2, 1) = 2;
  MelSpectrogram mel(v);
  CHECK(frame_norm(mel, 0) == 0.0);
  CHECK(frame_norm(mel, 1) == 4.0);
  CHECK_THROWS_AS(frame_norm(mel, 2), std::out_of_range);
  CHECK_THROWS_AS(frame_norm(mel, -1), std::out_of_range);

  std::mt19937_64 rng(17);
  for (int i = 0; i < 20; ++i) {
    Tensor col = Tensor::randn({6, 1}, rng);
    Tensor flipped = col;
    for (int64_t j = 0; j < flipped.numel(); ++j) flipped[j] = -flipped[j];
    MelSpectrogram m1(col), m2(flipped);
    CHECK(frame_norm(m1, 0) >= 0.0);
    CHECK(frame_norm(m1, 0) == doctest::Approx(frame_norm(m2, 0)).epsilon(1e-12));
  }
}

TEST_CASE("wav io roundtrip") {
  Waveform w = tone(220.0, 0.25, 22050, 0.8);
  const std::string p16 = "test_wav_io_16.wav";
  const std::string p32 = "test_wav_io_32.wav";
  write_wav(p16, w);
  write_wav(p32, w, true);
  Waveform r16 = read_wav(p16);
  Waveform r32 = read_wav(p32);
  REQUIRE(r16.samples.size() == w.samples.size());
  REQUIRE(r32.samples.size() == w.samples.size());
  CHECK(r16.sample_rate_hz == 22050);
  double max16 = 0, max32 = 0;
  for (size_t i = 0; i < w.samples.size(); ++i) {
    max16 = std::max(max16, std::abs(r16.samples[i] - w.samples[i]));
    max32 = std::max(max32, std::abs(r32.samples[i] - w.samples[i]));
  }
  CHECK(max16 < 1.0 / 32000.0);
  CHECK(max32 < 1e-7);
  std::remove(p16.c_str());
  std::remove(p32.c_str());
}

TEST_CASE("mel filterbank centers are ordered") {
  AudioConfig cfg;
  auto centers = mel_band_centers_hz(cfg);
  REQUIRE(centers.size() == 80);
  for (size_t i = 1; i < centers.size(); ++i) CHECK(centers[i] > centers[i - 1]);
  CHECK(centers.front() > 0.0);
  CHECK(centers.back() < 11025.0);
}
