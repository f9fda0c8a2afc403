// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <numbers>

#include "doctest.h"
#include "mcse/stft.h"
#include "test_util.h"

using namespace mcse;
using mcse::testing::random_clip;

namespace {

double interior_rel_error(const AudioClip& a, const AudioClip& b, int window) {
  double err = 0.0, peak = 0.0;
  for (int c = 0; c < a.channel_count(); ++c)
    for (std::size_t i = window; i + window < a.length(); ++i) {
      err = std::max(err, std::abs(a.samples[c][i] - b.samples[c][i]));
      peak = std::max(peak, std::abs(a.samples[c][i]));
    }
  return err / peak;
}

}  // namespace

TEST_CASE("config validation") {
  StftConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.freq_count() == 513);
  cfg.hop_size = 2048;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.hop_size = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK(StftConfig::with_window(512).hop_size == 128);
}

TEST_CASE("window 1024 at 16 kHz spans 64 ms") {
  StftConfig cfg = StftConfig::with_window(1024);
  CHECK(1000.0 * cfg.window_size / 16000 == doctest::Approx(64.0));
}

TEST_CASE("analyze rejects empty clips and bad hops") {
  AudioClip empty(1, 0);
  CHECK_THROWS_AS(analyze(empty, StftConfig{}), std::invalid_argument);
  StftConfig bad;
  bad.hop_size = bad.window_size + 1;
  CHECK_THROWS_AS(analyze(random_clip(1, 4000, 1), bad), std::invalid_argument);
  AudioClip ragged(2, 100);
  ragged.samples[1].resize(50);
  CHECK_THROWS_AS(analyze(ragged, StftConfig{}), std::invalid_argument);
}

TEST_CASE("zero signal gives zero spectrogram and zero resynthesis") {
  StftConfig cfg = StftConfig::with_window(256);
  AudioClip zero(2, 3000);
  Spectrogram spec = analyze(zero, cfg);
  CHECK(spec.channel_count() == 2);
  CHECK(spec.freq_count() == 129);
  CHECK(spec[0].cwiseAbs().maxCoeff() == 0.0);
  AudioClip back = synthesize(spec, cfg);
  CHECK(back.length() == 3000);
  for (const auto& ch : back.samples)
    for (double v : ch) CHECK(v == 0.0);
}

TEST_CASE("bin-centred sinusoid concentrates at its bin") {
  StftConfig cfg = StftConfig::with_window(512);
  const int k = 37;
  AudioClip clip(1, 8192);
  for (std::size_t i = 0; i < clip.length(); ++i)
    clip.samples[0][i] = std::cos(2.0 * std::numbers::pi * k * static_cast<double>(i) / cfg.window_size);
  Spectrogram spec = analyze(clip, cfg);
  // Frames fully inside the signal.
  const int first = (cfg.window_size - cfg.hop_size) / cfg.hop_size + 1;
  for (int t = first; t + 4 < spec.frame_count(); ++t) {
    Eigen::Index arg;
    spec[0].col(t).cwiseAbs().maxCoeff(&arg);
    CHECK(arg == k);
    const double total = spec[0].col(t).cwiseAbs2().sum();
    const double near = spec[0].col(t).segment(k - 2, 5).cwiseAbs2().sum();
    CHECK(near / total > 0.99);
  }
}

TEST_CASE("analysis is linear") {
  StftConfig cfg = StftConfig::with_window(256);
  AudioClip a = random_clip(2, 2000, 3), b = random_clip(2, 2000, 4), sum(2, 2000);
  for (int c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 2000; ++i) sum.samples[c][i] = a.samples[c][i] + 2.5 * b.samples[c][i];
  Spectrogram sa = analyze(a, cfg), sb = analyze(b, cfg), ss = analyze(sum, cfg);
  for (int c = 0; c < 2; ++c) CHECK((ss[c] - sa[c] - 2.5 * sb[c]).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("round trip reconstructs white noise and a chirp") {
  for (int n : {256, 512, 1024}) {
    StftConfig cfg = StftConfig::with_window(n);
    AudioClip noise = random_clip(3, 10007, static_cast<std::uint64_t>(n));
    CHECK(interior_rel_error(noise, synthesize(analyze(noise, cfg), cfg), n) < 1e-6);

    AudioClip chirp(1, 16000);
    for (std::size_t i = 0; i < chirp.length(); ++i) {
      const double t = static_cast<double>(i) / 16000.0;
      chirp.samples[0][i] = std::sin(2.0 * std::numbers::pi * (100.0 * t + 1800.0 * t * t)) * (1.0 + 0.5 * std::sin(7.0 * t));
    }
    CHECK(interior_rel_error(chirp, synthesize(analyze(chirp, cfg), cfg), n) < 1e-6);
  }
}

TEST_CASE("round trip also holds for plain Hann at quarter hop") {
  StftConfig cfg = StftConfig::with_window(512);
  cfg.window_kind = WindowKind::kHann;
  AudioClip x = random_clip(1, 5000, 9);
  CHECK(interior_rel_error(x, synthesize(analyze(x, cfg), cfg), 512) < 1e-6);
}

TEST_CASE("synthesize rejects incompatible shapes") {
  StftConfig cfg = StftConfig::with_window(256);
  Spectrogram spec = analyze(random_clip(1, 1000, 2), cfg);
  CHECK_THROWS_AS(synthesize(spec, StftConfig::with_window(512)), std::invalid_argument);
  spec.signal_length = 5000;
  CHECK_THROWS_AS(synthesize(spec, cfg), std::invalid_argument);
}

TEST_CASE("Parseval: windowed frame energy equals spectral energy") {
  StftConfig cfg = StftConfig::with_window(256);
  AudioClip x = random_clip(1, 3000, 11);
  Spectrogram spec = analyze(x, cfg);
  const auto win = cfg.window();
  const long pad = cfg.window_size - cfg.hop_size;
  const int n = cfg.window_size;
  for (int t = 0; t < spec.frame_count(); ++t) {
    double time_energy = 0.0;
    for (int i = 0; i < n; ++i) {
      const long idx = static_cast<long>(t) * cfg.hop_size - pad + i;
      if (idx >= 0 && idx < static_cast<long>(x.length())) time_energy += std::pow(x.samples[0][idx] * win[i], 2);
    }
    double freq_energy = std::norm(spec[0](0, t)) + std::norm(spec[0](n / 2, t));
    for (int k = 1; k < n / 2; ++k) freq_energy += 2.0 * std::norm(spec[0](k, t));
    freq_energy /= n;
    CHECK(std::abs(freq_energy - time_energy) <= 1e-6 * std::max(time_energy, 1e-300));
  }
}

TEST_CASE("features: constant magnitude standardizes to zero") {
  Spectrogram spec;
  spec.planes.push_back(Eigen::MatrixXcd::Constant(9, 20, Complex(3.0, 4.0)));
  spec.window_size = 16;
  spec.hop_size = 4;
  FeatureMatrix f = to_features(spec, 0);
  CHECK(f.values.cwiseAbs().maxCoeff() == 0.0);
  CHECK(f.stats.std.minCoeff() == 1.0);
}

TEST_CASE("features: 10x magnitude is +20 dB before standardization") {
  Spectrogram spec;
  spec.planes.push_back(Eigen::MatrixXcd::Constant(5, 4, Complex(1.0, 0.0)));
  spec.planes[0](2, 1) = 10.0;
  Eigen::MatrixXd db = log_magnitude_db(spec, 0);
  CHECK(db(2, 1) - db(2, 0) == doctest::Approx(20.0).epsilon(1e-8));
}

TEST_CASE("features: self stats give zero mean unit variance rows") {
  Spectrogram spec = analyze(random_clip(1, 8000, 5), StftConfig::with_window(256));
  FeatureMatrix f = to_features(spec, 0);
  for (int k = 0; k < f.values.rows(); ++k) {
    const double mean = f.values.row(k).mean();
    const double var = (f.values.row(k).array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-9);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("features: external stats are applied, not recomputed") {
  const StftConfig cfg = StftConfig::with_window(256);
  Spectrogram a = analyze(random_clip(1, 8000, 5), cfg);
  AudioClip loud = random_clip(1, 8000, 6);
  for (double& v : loud.samples[0]) v *= 10.0;
  Spectrogram b = analyze(loud, cfg);
  NormStats stats = to_features(a, 0).stats;
  FeatureMatrix fb = to_features(b, 0, stats);
  CHECK(fb.stats.mean == stats.mean);
  CHECK(fb.values.rowwise().mean().mean() > 1.0);
}

TEST_CASE("features are monotone in magnitude per bin") {
  Spectrogram spec;
  Eigen::MatrixXcd plane(3, 6);
  for (int t = 0; t < 6; ++t)
    for (int k = 0; k < 3; ++k) plane(k, t) = Complex(0.1 + t * (k + 1), 0.0);
  spec.planes.push_back(plane);
  Eigen::MatrixXd db = log_magnitude_db(spec, 0);
  for (int k = 0; k < 3; ++k)
    for (int t = 1; t < 6; ++t) CHECK(db(k, t) > db(k, t - 1));
}

TEST_CASE("corpus accumulator matches pooled statistics") {
  const StftConfig cfg = StftConfig::with_window(128);
  Spectrogram a = analyze(random_clip(1, 3000, 7), cfg), b = analyze(random_clip(1, 2000, 8), cfg);
  NormAccumulator acc;
  acc.add(log_magnitude_db(a, 0));
  acc.add(log_magnitude_db(b, 0));
  NormStats s = acc.finish();
  Eigen::MatrixXd both(a.freq_count(), a.frame_count() + b.frame_count());
  both << log_magnitude_db(a, 0), log_magnitude_db(b, 0);
  Eigen::VectorXd mean = both.rowwise().mean();
  CHECK((s.mean - mean).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(acc.frames() == both.cols());
}
