// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mcse/simulator.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "fft.h"

namespace mcse {

AudioClip delay_source(const SourceSpec& spec) {
  spec.dry.validate();
  if (spec.dry.channel_count() != 1) throw std::invalid_argument("dry signal must be single channel");
  const std::size_t len = spec.dry.length();
  if (len == 0) throw std::invalid_argument("dry signal is empty");
  if (spec.gains.size() != spec.delays.size())
    throw std::invalid_argument("delay and gain vectors differ in length");
  if (spec.delays.empty()) throw std::invalid_argument("no microphones in source spec");
  double max_delay = 0.0;
  for (double d : spec.delays) max_delay = std::max(max_delay, std::abs(d));
  if (max_delay >= static_cast<double>(len)) throw std::invalid_argument("delay exceeds signal length");
  for (double g : spec.gains)
    if (!(g > 0.0)) throw std::invalid_argument("source gains must be positive");

  // Zero padding on both sides keeps negative delays and sinc tails off the
  // circular wrap.
  const std::size_t guard = static_cast<std::size_t>(std::ceil(max_delay)) + len / 2 + 64;
  const std::size_t n = detail::fast_fft_size(len + 2 * guard);
  std::vector<double> padded(n, 0.0);
  std::copy(spec.dry.samples[0].begin(), spec.dry.samples[0].end(), padded.begin() + guard);
  std::vector<Complex> bins(n / 2 + 1), shifted(n / 2 + 1);
  detail::real_fft(padded, bins);

  AudioClip image(spec.channel_count(), len, spec.dry.sample_rate);
  std::vector<double> out(n);
  for (int c = 0; c < spec.channel_count(); ++c) {
    const double d = spec.delays[c];
    for (std::size_t k = 0; k < bins.size(); ++k) {
      const double w = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      shifted[k] = bins[k] * std::polar(1.0, -w * d);
    }
    // The Nyquist bin of a real signal must stay real.
    if (n % 2 == 0) shifted.back() = bins.back() * std::cos(std::numbers::pi * d);
    detail::inverse_real_fft(shifted, out);
    for (std::size_t i = 0; i < len; ++i) image.samples[c][i] = spec.gains[c] * out[guard + i];
  }
  return image;
}

double channel_power(const AudioClip& clip, int channel) {
  const auto& x = clip.samples.at(channel);
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

MixtureTruth mix(const std::vector<SourceSpec>& sources, const AudioClip& noise, double snr_db) {
  if (sources.empty()) throw std::invalid_argument("mix needs at least one source");
  noise.validate();
  const int m = sources[0].channel_count();
  const std::size_t len = sources[0].dry.length();

  MixtureTruth truth;
  truth.snr_db = snr_db;
  AudioClip sum(m, len, sources[0].dry.sample_rate);
  for (const auto& s : sources) {
    if (s.channel_count() != m || s.dry.length() != len)
      throw std::invalid_argument("sources differ in channel count or length");
    truth.images.push_back(delay_source(s));
    for (int c = 0; c < m; ++c)
      for (std::size_t i = 0; i < len; ++i) sum.samples[c][i] += truth.images.back().samples[c][i];
  }
  if (noise.channel_count() != m || noise.length() != len)
    throw std::invalid_argument("noise shape does not match sources");

  double gain = 0.0;
  if (!(std::isinf(snr_db) && snr_db > 0)) {
    const double pn = channel_power(noise, 0);
    if (pn <= 0.0) throw std::invalid_argument("zero-power noise cannot reach a finite SNR");
    const double ps = channel_power(sum, 0);
    gain = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
  }
  truth.noise_gain = gain;
  truth.noise = noise;
  for (auto& ch : truth.noise.samples)
    for (double& v : ch) v *= gain;
  truth.mixture = sum;
  for (int c = 0; c < m; ++c)
    for (std::size_t i = 0; i < len; ++i) truth.mixture.samples[c][i] += truth.noise.samples[c][i];
  return truth;
}

std::vector<double> speech_like(std::size_t length, int sample_rate, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double fs = sample_rate;
  const double nyquist = 0.5 * fs;

  std::vector<double> x(length, 0.0);
  std::size_t pos = static_cast<std::size_t>(uniform(0.02, 0.15) * fs);
  while (pos < length) {
    const std::size_t dur = static_cast<std::size_t>(uniform(0.10, 0.30) * fs);
    const std::size_t end = std::min(length, pos + dur);
    const double level = uniform(0.4, 1.0);
    if (u(rng) < 0.8) {
      const double f0_start = uniform(90.0, 220.0);
      const double f0_end = f0_start * uniform(0.8, 1.25);
      const double formants[3] = {uniform(300, 900), uniform(900, 2500), uniform(2500, 3800)};
      const double bandwidths[3] = {uniform(60, 120), uniform(90, 180), uniform(150, 250)};
      const int harmonics = static_cast<int>(0.95 * nyquist / std::min(f0_start, f0_end));
      std::vector<double> phase(harmonics, 0.0);
      for (auto& p : phase) p = uniform(0.0, 2.0 * std::numbers::pi);
      double f0_phase = 0.0;
      for (std::size_t i = pos; i < end; ++i) {
        const double r = static_cast<double>(i - pos) / static_cast<double>(dur);
        const double f0 = f0_start + (f0_end - f0_start) * r;
        const double env = std::sin(std::numbers::pi * r);
        f0_phase += 2.0 * std::numbers::pi * f0 / fs;
        double v = 0.0;
        for (int h = 1; h <= harmonics; ++h) {
          const double f = h * f0;
          if (f >= 0.95 * nyquist) break;
          double amp = 0.0;
          for (int k = 0; k < 3; ++k) {
            const double z = (f - formants[k]) / bandwidths[k];
            amp += 1.0 / (1.0 + z * z);
          }
          amp = (amp + 0.01) / h;  // spectral tilt
          v += amp * std::sin(h * f0_phase + phase[h - 1]);
        }
        x[i] += level * env * env * v;
      }
    } else {
      // Fricative: differenced noise has a rising spectrum.
      double prev = 0.0;
      for (std::size_t i = pos; i < end; ++i) {
        const double r = static_cast<double>(i - pos) / static_cast<double>(dur);
        const double w = gauss(rng);
        x[i] += 0.3 * level * std::sin(std::numbers::pi * r) * (w - prev);
        prev = w;
      }
    }
    pos = end + static_cast<std::size_t>(uniform(0.04, 0.25) * fs);
  }

  double power = 0.0;
  for (double v : x) power += v * v;
  power /= static_cast<double>(std::max<std::size_t>(length, 1));
  if (power > 0.0)
    for (double& v : x) v /= std::sqrt(power);
  return x;
}

AudioClip white_noise(int channels, std::size_t length, int sample_rate, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  AudioClip clip(channels, length, sample_rate);
  for (auto& ch : clip.samples)
    for (double& v : ch) v = gauss(rng);
  return clip;
}

Scene make_scene(const SceneConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  const int m = cfg.channels;

  Scene scene;
  SourceSpec target;
  target.dry.samples = {speech_like(cfg.length, cfg.sample_rate, rng)};
  target.dry.sample_rate = cfg.sample_rate;
  for (int c = 0; c < m; ++c) {
    target.delays.push_back(c == 0 ? 0.0 : uniform(-cfg.target_max_delay, cfg.target_max_delay));
    target.gains.push_back(uniform(0.8, 1.2));
  }
  scene.sources.push_back(std::move(target));

  if (cfg.with_interferer) {
    SourceSpec interferer;
    std::vector<double> dry = speech_like(cfg.length, cfg.sample_rate, rng);
    const double scale = std::pow(10.0, cfg.interferer_level_db / 20.0);
    for (double& v : dry) v *= scale;
    interferer.dry.samples = {std::move(dry)};
    interferer.dry.sample_rate = cfg.sample_rate;
    const double side = u(rng) < 0.5 ? -1.0 : 1.0;
    for (int c = 0; c < m; ++c) {
      interferer.delays.push_back(
          c == 0 ? 0.0 : side * uniform(cfg.interferer_min_delay, cfg.interferer_max_delay));
      interferer.gains.push_back(uniform(0.8, 1.2));
    }
    scene.sources.push_back(std::move(interferer));
  }

  AudioClip noise = white_noise(m, cfg.length, cfg.sample_rate, rng);
  scene.truth = mix(scene.sources, noise, cfg.snr_db);
  return scene;
}

}  // namespace mcse
