#pragma once

#include <string>

#include "slmvc/audio.hpp"

namespace slmvc {

/// Deterministic synthetic voice: a harmonic series under a two-peak
/// spectral envelope with a pitch contour, amplitude envelope and a silence
/// gap, so every loss term has something to bite on.
Waveform synth_speaker_utterance(int speaker, int utterance, double seconds, int sample_rate_hz,
                                 uint64_t seed);

/// Writes a small per-speaker WAV corpus usable by `ingest`.
void write_toy_corpus(const std::string& dir, int n_speakers, int utterances_per_speaker,
                      double seconds, int sample_rate_hz, uint64_t seed);

}  // namespace slmvc
