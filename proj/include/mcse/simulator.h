// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Anechoic multichannel mixtures with known ground truth.

#ifndef MCSE_SIMULATOR_H_
#define MCSE_SIMULATOR_H_

#include <cstdint>
#include <random>
#include <vector>

#include "mcse/stft.h"

namespace mcse {

struct SourceSpec {
  AudioClip dry;               // single channel
  std::vector<double> delays;  // fractional samples, one per microphone
  std::vector<double> gains;   // linear, one per microphone

  int channel_count() const { return static_cast<int>(delays.size()); }
};

struct MixtureTruth {
  AudioClip mixture;
  std::vector<AudioClip> images;  // per source, M channels each
  AudioClip noise;                // scaled noise image
  double snr_db = 0.0;
  double noise_gain = 0.0;
};

// Channel c is the dry signal delayed by delays[c] (frequency-domain phase
// shift on a zero-padded copy, so nothing wraps) and scaled by gains[c].
// Output has the dry signal's length.
AudioClip delay_source(const SourceSpec& spec);

// Scales noise so that 10*log10(P_sources / P_noise) == snr_db on channel 0.
// snr_db = +infinity drops the noise entirely.
MixtureTruth mix(const std::vector<SourceSpec>& sources, const AudioClip& noise, double snr_db);

// Mean power of one channel.
double channel_power(const AudioClip& clip, int channel);

// Synthetic voiced/unvoiced "syllables" with silences between them: a sparse
// time-frequency signal with harmonic structure, normalized to unit power.
std::vector<double> speech_like(std::size_t length, int sample_rate, std::mt19937_64& rng);

// Independent unit-variance Gaussian noise on every channel.
AudioClip white_noise(int channels, std::size_t length, int sample_rate, std::mt19937_64& rng);

// Recipe for the standard test scene: a target near broadside (small delays),
// one interferer off-axis, diffuse white noise.
struct SceneConfig {
  int channels = 6;
  std::size_t length = 32000;
  int sample_rate = 16000;
  double snr_db = 0.0;              // sources vs noise on channel 0
  double interferer_level_db = 0.0; // interferer power relative to target
  double target_max_delay = 0.5;    // |delay| bound for the target, samples
  double interferer_min_delay = 3.0;
  double interferer_max_delay = 6.0;
  bool with_interferer = true;
};

struct Scene {
  MixtureTruth truth;
  std::vector<SourceSpec> sources;  // sources[0] is the target
};

Scene make_scene(const SceneConfig& cfg, std::uint64_t seed);

}  // namespace mcse

#endif  // MCSE_SIMULATOR_H_
