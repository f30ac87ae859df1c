#include "slmvc/fixtures.hpp"

#include <cmath>
#include <filesystem>
#include <random>

#include "slmvc/util.hpp"

namespace fs = std::filesystem;

namespace slmvc {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct VoiceProfile {
  double f0_base;
  double formant1, formant2;
  double bandwidth;
};

VoiceProfile profile_for(int speaker) {
  static const VoiceProfile profiles[] = {
      {110.0, 500.0, 1500.0, 220.0},
      {150.0, 700.0, 1800.0, 260.0},
      {200.0, 600.0, 2400.0, 240.0},
      {260.0, 900.0, 1200.0, 300.0},
      {130.0, 800.0, 2000.0, 280.0},
      {175.0, 550.0, 2600.0, 230.0},
      {225.0, 750.0, 1400.0, 270.0},
      {290.0, 650.0, 2200.0, 250.0},
  };
  return profiles[static_cast<size_t>(speaker) % (sizeof(profiles) / sizeof(profiles[0]))];
}

}  // namespace

Waveform synth_speaker_utterance(int speaker, int utterance, double seconds, int sample_rate_hz,
                                 uint64_t seed) {
  const VoiceProfile vp = profile_for(speaker);
  std::mt19937_64 rng(mix_seed(seed, (static_cast<uint64_t>(speaker) << 20) ^
                                         static_cast<uint64_t>(utterance)));
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  const double vibrato_rate = 3.0 + 3.0 * u01(rng);
  const double vibrato_depth = 0.03 + 0.05 * u01(rng);
  const double contour_slope = -0.1 + 0.2 * u01(rng);
  const double gap_start = 0.35 + 0.3 * u01(rng);
  const double gap_len = 0.08 + 0.08 * u01(rng);
  const double phase0 = 2.0 * kPi * u01(rng);

  const int64_t n = static_cast<int64_t>(seconds * sample_rate_hz);
  std::vector<double> s(static_cast<size_t>(n), 0.0);
  double phase = phase0;
  for (int64_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate_hz;
    const double rel = t / seconds;
    const double f0 = vp.f0_base * (1.0 + contour_slope * rel) *
                      (1.0 + vibrato_depth * std::sin(2.0 * kPi * vibrato_rate * t));
    phase += 2.0 * kPi * f0 / sample_rate_hz;

    double env = 1.0;
    const double fade = 0.03;
    if (t < fade) env *= t / fade;
    if (seconds - t < fade) env *= (seconds - t) / fade;
    const double gap_rel = (rel - gap_start) / (gap_len / seconds);
    if (gap_rel >= 0.0 && gap_rel <= 1.0) env *= 0.0;  // hard silence interval

    double v = 0;
    const double nyq = 0.45 * sample_rate_hz;
    for (int h = 1; h * f0 < nyq && h <= 24; ++h) {
      const double fh = h * f0;
      const double a1 = std::exp(-(fh - vp.formant1) * (fh - vp.formant1) /
                                 (2.0 * vp.bandwidth * vp.bandwidth));
      const double a2 = 0.7 * std::exp(-(fh - vp.formant2) * (fh - vp.formant2) /
                                       (2.0 * vp.bandwidth * vp.bandwidth));
      v += (a1 + a2 + 0.05 / h) * std::sin(h * phase);
    }
    s[static_cast<size_t>(i)] = 0.35 * env * v;
  }
  // keep peaks inside [-1,1] for PCM16
  double peak = 0;
  for (double x : s) peak = std::max(peak, std::abs(x));
  if (peak > 0.95)
    for (double& x : s) x *= 0.95 / peak;
  return Waveform(std::move(s), sample_rate_hz);
}

void write_toy_corpus(const std::string& dir, int n_speakers, int utterances_per_speaker,
                      double seconds, int sample_rate_hz, uint64_t seed) {
  if (n_speakers < 1 || utterances_per_speaker < 1)
    throw std::invalid_argument("write_toy_corpus: need at least one speaker and utterance");
  fs::create_directories(dir);
  for (int sp = 0; sp < n_speakers; ++sp) {
    const fs::path spk_dir = fs::path(dir) / ("speaker" + std::to_string(sp));
    fs::create_directories(spk_dir);
    for (int u = 0; u < utterances_per_speaker; ++u) {
      Waveform w = synth_speaker_utterance(sp, u, seconds, sample_rate_hz, seed);
      write_wav((spk_dir / ("utt" + std::to_string(u) + ".wav")).string(), w);
    }
  }
}

}  // namespace slmvc
