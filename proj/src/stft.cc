// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mcse/stft.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "fft.h"

namespace mcse {

AudioClip::AudioClip(int channels, std::size_t length, int rate)
    : samples(static_cast<std::size_t>(channels), std::vector<double>(length, 0.0)),
      sample_rate(rate) {}

void AudioClip::validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("sample rate must be positive");
  if (samples.empty()) throw std::invalid_argument("clip has no channels");
  for (const auto& ch : samples)
    if (ch.size() != samples[0].size())
      throw std::invalid_argument("clip channels have unequal lengths");
}

AudioClip AudioClip::channel(int c) const {
  if (c < 0 || c >= channel_count()) throw std::out_of_range("channel index out of range");
  AudioClip out;
  out.samples = {samples[c]};
  out.sample_rate = sample_rate;
  return out;
}

void StftConfig::validate() const {
  if (window_size < 2 || window_size % 2 != 0)
    throw std::invalid_argument("window size must be even and >= 2");
  if (hop_size <= 0) throw std::invalid_argument("hop size must be positive");
  if (hop_size > window_size) throw std::invalid_argument("hop size exceeds window size");
}

std::vector<double> StftConfig::window() const {
  std::vector<double> w(window_size, 1.0);
  if (window_kind == WindowKind::kRectangular) return w;
  // Periodic Hann sums to a constant at any hop dividing N/2.
  for (int n = 0; n < window_size; ++n) {
    double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / window_size);
    w[n] = window_kind == WindowKind::kSqrtHann ? std::sqrt(hann) : hann;
  }
  return w;
}

StftConfig StftConfig::with_window(int window_size) {
  StftConfig cfg;
  cfg.window_size = window_size;
  cfg.hop_size = window_size / 4;
  cfg.window_kind = WindowKind::kSqrtHann;
  return cfg;
}

Eigen::VectorXcd Spectrogram::observation(int freq, int frame) const {
  Eigen::VectorXcd y(channel_count());
  for (int c = 0; c < channel_count(); ++c) y(c) = planes[c](freq, frame);
  return y;
}

Spectrogram Spectrogram::channel(int c) const {
  if (c < 0 || c >= channel_count()) throw std::out_of_range("channel index out of range");
  return with_plane(planes[c]);
}

Spectrogram Spectrogram::with_plane(Eigen::MatrixXcd plane) const {
  Spectrogram out;
  out.planes.push_back(std::move(plane));
  out.sample_rate = sample_rate;
  out.signal_length = signal_length;
  out.window_size = window_size;
  out.hop_size = hop_size;
  return out;
}

// The signal is front-padded by (window - hop) zeros so every input sample is
// covered by the full set of overlapping frames.
int frame_count_for(std::size_t length, const StftConfig& cfg) {
  const std::size_t pad = cfg.window_size - cfg.hop_size;
  return static_cast<int>((length + pad - 1) / cfg.hop_size + 1);
}

Spectrogram analyze(const AudioClip& clip, const StftConfig& cfg) {
  cfg.validate();
  clip.validate();
  if (clip.length() == 0) throw std::invalid_argument("cannot analyze an empty clip");

  const int n = cfg.window_size;
  const int frames = frame_count_for(clip.length(), cfg);
  const long pad = n - cfg.hop_size;
  const std::vector<double> win = cfg.window();

  Spectrogram spec;
  spec.sample_rate = clip.sample_rate;
  spec.signal_length = clip.length();
  spec.window_size = n;
  spec.hop_size = cfg.hop_size;

  std::vector<double> frame(n);
  std::vector<Complex> bins(cfg.freq_count());
  const long len = static_cast<long>(clip.length());
  for (const auto& x : clip.samples) {
    Eigen::MatrixXcd plane(cfg.freq_count(), frames);
    for (int t = 0; t < frames; ++t) {
      const long start = static_cast<long>(t) * cfg.hop_size - pad;
      for (int i = 0; i < n; ++i) {
        const long idx = start + i;
        frame[i] = (idx >= 0 && idx < len) ? x[idx] * win[i] : 0.0;
      }
      detail::real_fft(frame, bins);
      for (int k = 0; k < cfg.freq_count(); ++k) plane(k, t) = bins[k];
    }
    spec.planes.push_back(std::move(plane));
  }
  return spec;
}

AudioClip synthesize(const Spectrogram& spec, const StftConfig& cfg) {
  cfg.validate();
  if (spec.planes.empty()) throw std::invalid_argument("empty spectrogram");
  if (spec.freq_count() != cfg.freq_count())
    throw std::invalid_argument("spectrogram frequency count does not match window");
  if (spec.frame_count() != frame_count_for(spec.signal_length, cfg))
    throw std::invalid_argument("spectrogram frame count does not match hop/length");

  const int n = cfg.window_size;
  const long pad = n - cfg.hop_size;
  const int frames = spec.frame_count();
  const std::vector<double> win = cfg.window();
  const std::size_t padded = static_cast<std::size_t>(frames - 1) * cfg.hop_size + n;

  // Weighted overlap-add with per-sample normalization by sum of w^2.
  std::vector<double> norm(padded, 0.0);
  for (int t = 0; t < frames; ++t)
    for (int i = 0; i < n; ++i) norm[static_cast<std::size_t>(t) * cfg.hop_size + i] += win[i] * win[i];

  AudioClip clip(spec.channel_count(), spec.signal_length, spec.sample_rate);
  std::vector<Complex> bins(cfg.freq_count());
  std::vector<double> frame(n);
  std::vector<double> acc(padded);
  for (int c = 0; c < spec.channel_count(); ++c) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int t = 0; t < frames; ++t) {
      for (int k = 0; k < cfg.freq_count(); ++k) bins[k] = spec.planes[c](k, t);
      detail::inverse_real_fft(bins, frame);
      const std::size_t start = static_cast<std::size_t>(t) * cfg.hop_size;
      for (int i = 0; i < n; ++i) acc[start + i] += frame[i] * win[i];
    }
    for (std::size_t s = 0; s < spec.signal_length; ++s) {
      const double w = norm[s + pad];
      clip.samples[c][s] = w > 1e-12 ? acc[s + pad] / w : 0.0;
    }
  }
  return clip;
}

void NormAccumulator::add(const Eigen::MatrixXd& db) {
  if (frames_ == 0) {
    sum_ = Eigen::VectorXd::Zero(db.rows());
    sum_sq_ = Eigen::VectorXd::Zero(db.rows());
  } else if (db.rows() != sum_.size()) {
    throw std::invalid_argument("normalization rows differ between utterances");
  }
  sum_ += db.rowwise().sum();
  sum_sq_ += db.array().square().matrix().rowwise().sum();
  frames_ += db.cols();
}

NormStats NormAccumulator::finish() const {
  if (frames_ == 0) throw std::logic_error("no frames accumulated");
  NormStats stats;
  stats.mean = sum_ / static_cast<double>(frames_);
  Eigen::ArrayXd var = sum_sq_.array() / static_cast<double>(frames_) - stats.mean.array().square();
  stats.std = var.max(0.0).sqrt().matrix();
  // Zero-variance rows standardize to zero rather than dividing by zero.
  for (Eigen::Index k = 0; k < stats.std.size(); ++k)
    if (stats.std(k) < 1e-6 * std::max(1.0, std::abs(stats.mean(k)))) stats.std(k) = 1.0;
  return stats;
}

Eigen::MatrixXd log_magnitude_db(const Spectrogram& spec, int channel) {
  if (channel < 0 || channel >= spec.channel_count())
    throw std::out_of_range("channel index out of range");
  const Eigen::MatrixXd mag = spec.planes[channel].cwiseAbs();
  const double peak = mag.size() ? mag.maxCoeff() : 0.0;
  const double eps = peak > 0.0 ? 1e-10 * peak : 1e-300;
  return (20.0 * (mag.array() + eps).log10()).matrix();
}

FeatureMatrix to_features(const Spectrogram& spec, int channel,
                          const std::optional<NormStats>& stats) {
  FeatureMatrix out;
  Eigen::MatrixXd db = log_magnitude_db(spec, channel);
  if (stats) {
    if (stats->mean.size() != db.rows())
      throw std::invalid_argument("normalization stats do not match frequency count");
    out.stats = *stats;
  } else {
    // Two-pass, and constant rows take their value as the mean so they come
    // out exactly zero.
    out.stats.mean = db.rowwise().mean();
    for (Eigen::Index k = 0; k < db.rows(); ++k)
      if (db.cols() > 0 && db.row(k).minCoeff() == db.row(k).maxCoeff()) out.stats.mean(k) = db(k, 0);
    const Eigen::MatrixXd centered = db.colwise() - out.stats.mean;
    out.stats.std = (centered.array().square().rowwise().sum() / static_cast<double>(db.cols()))
                        .sqrt()
                        .matrix();
    for (Eigen::Index k = 0; k < out.stats.std.size(); ++k)
      if (out.stats.std(k) < 1e-6 * std::max(1.0, std::abs(out.stats.mean(k)))) out.stats.std(k) = 1.0;
  }
  out.values = ((db.colwise() - out.stats.mean).array().colwise() / out.stats.std.array()).matrix();
  return out;
}

}  // namespace mcse
