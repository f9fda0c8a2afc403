// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mcse/beamformer.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mcse/spatial_clustering.h"

namespace mcse {

SpatialCovariance estimate_covariance(const Spectrogram& spec, const Mask& mask, CovarianceKind kind) {
  if (mask.rows() != spec.freq_count() || mask.cols() != spec.frame_count())
    throw std::invalid_argument("mask shape does not match spectrogram");
  const int m = spec.channel_count();
  SpatialCovariance cov;
  cov.matrices.assign(spec.freq_count(), Eigen::MatrixXcd::Zero(m, m));
  cov.weight = Eigen::VectorXd::Zero(spec.freq_count());
  cov.degenerate.assign(spec.freq_count(), false);
  Eigen::VectorXcd y(m);
  for (int f = 0; f < spec.freq_count(); ++f) {
    Eigen::MatrixXcd& phi = cov.matrices[f];
    double total = 0.0;
    for (int t = 0; t < spec.frame_count(); ++t) {
      const double a = kind == CovarianceKind::kSpeech ? mask(f, t) : 1.0 - mask(f, t);
      if (a == 0.0) continue;
      for (int c = 0; c < m; ++c) y(c) = spec[c](f, t);
      phi.noalias() += a * (y * y.adjoint());
      total += a;
    }
    cov.weight(f) = total;
    if (total > 0.0) {
      phi /= total;
      phi = 0.5 * (phi + phi.adjoint()).eval();
    } else {
      cov.degenerate[f] = true;
    }
  }
  return cov;
}

Eigen::VectorXcd mvdr_vector(const Eigen::MatrixXcd& noise, const Eigen::MatrixXcd& speech, int reference,
                             const MvdrOptions& opts, bool* degenerate) {
  const int m = static_cast<int>(noise.rows());
  if (reference < 0 || reference >= m) throw std::out_of_range("reference channel out of range");
  if (noise.cols() != m || speech.rows() != m || speech.cols() != m)
    throw std::invalid_argument("covariance shapes disagree");
  Eigen::VectorXcd e_ref = Eigen::VectorXcd::Zero(m);
  e_ref(reference) = 1.0;
  auto fallback = [&]() {
    if (degenerate) *degenerate = true;
    return e_ref;
  };
  if (degenerate) *degenerate = false;

  const double trace = noise.trace().real();
  if (!(trace > 0.0) || !std::isfinite(trace)) return fallback();
  Eigen::MatrixXcd loaded = noise;
  loaded.diagonal().array() += opts.diagonal_loading * trace / m;

  Eigen::MatrixXcd g_minus_i;
  Eigen::LLT<Eigen::MatrixXcd> llt(loaded);
  if (llt.info() == Eigen::Success) {
    g_minus_i = llt.solve(speech);
  } else {
    g_minus_i = loaded.fullPivLu().solve(speech);
  }
  const Complex lambda = g_minus_i.trace();
  if (!(std::abs(lambda) >= opts.lambda_threshold) || !g_minus_i.allFinite()) return fallback();
  return g_minus_i.col(reference) / lambda;
}

int BeamformerWeights::degenerate_count() const {
  return static_cast<int>(std::count(degenerate.begin(), degenerate.end(), true));
}

BeamformerWeights mvdr_weights(const SpatialCovariance& noise, const SpatialCovariance& speech, int reference,
                               const MvdrOptions& opts) {
  if (noise.freq_count() != speech.freq_count() || noise.freq_count() == 0)
    throw std::invalid_argument("covariance sets differ in frequency count");
  const int m = static_cast<int>(noise.matrices[0].rows());
  if (reference < 0 || reference >= m) throw std::out_of_range("reference channel out of range");
  BeamformerWeights w;
  w.reference = reference;
  w.h.resize(m, noise.freq_count());
  w.degenerate.assign(noise.freq_count(), false);
  for (int f = 0; f < noise.freq_count(); ++f) {
    bool bad = false;
    if (noise.degenerate[f] || speech.degenerate[f]) {
      w.h.col(f).setZero();
      w.h(reference, f) = 1.0;
      bad = true;
    } else {
      w.h.col(f) = mvdr_vector(noise.matrices[f], speech.matrices[f], reference, opts, &bad);
    }
    w.degenerate[f] = bad;
  }
  return w;
}

Spectrogram apply_beamformer(const Spectrogram& spec, const BeamformerWeights& weights, const Mask& post_mask) {
  if (weights.h.rows() != spec.channel_count() || weights.h.cols() != spec.freq_count())
    throw std::invalid_argument("beamformer weights do not match spectrogram");
  if (post_mask.rows() != spec.freq_count() || post_mask.cols() != spec.frame_count())
    throw std::invalid_argument("post-filter mask shape does not match spectrogram");
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(spec.freq_count(), spec.frame_count());
  for (int c = 0; c < spec.channel_count(); ++c)
    out += (weights.h.row(c).adjoint().asDiagonal() * spec[c]).eval();
  out.array() *= post_mask.array().cast<Complex>();
  return spec.with_plane(std::move(out));
}

Spectrogram delay_and_sum(const Spectrogram& spec, const std::vector<double>& tdoas,
                          const std::vector<double>& weights) {
  const int m = spec.channel_count();
  if (static_cast<int>(tdoas.size()) != m || static_cast<int>(weights.size()) != m)
    throw std::invalid_argument("delay-and-sum needs one delay and weight per channel");
  double total = 0.0;
  for (double w : weights) total += w;
  if (total == 0.0) throw std::invalid_argument("delay-and-sum weights sum to zero");
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(spec.freq_count(), spec.frame_count());
  for (int c = 0; c < m; ++c) {
    if (weights[c] == 0.0) continue;
    Eigen::VectorXcd steer(spec.freq_count());
    for (int f = 0; f < spec.freq_count(); ++f)
      steer(f) = weights[c] * std::polar(1.0, 2.0 * std::numbers::pi * f / spec.window_size * tdoas[c]);
    out += (steer.asDiagonal() * spec[c]).eval();
  }
  out /= total;
  return spec.with_plane(std::move(out));
}

std::vector<double> gcc_phat_delays(const Spectrogram& spec, int reference, double max_lag, double step) {
  const int m = spec.channel_count();
  if (reference < 0 || reference >= m) throw std::out_of_range("reference channel out of range");
  std::vector<double> delays(m, 0.0);
  const std::vector<double> grid = TdoaGrid{max_lag, step}.points();
  for (int c = 0; c < m; ++c) {
    if (c == reference) continue;
    const IpdObservations obs = make_observations(spec, {{reference, c}});
    const std::vector<double> r = phat_correlation(obs, 0, grid);
    const auto best = std::max_element(r.begin(), r.end()) - r.begin();
    double tau = grid[best];
    if (best > 0 && best + 1 < static_cast<long>(r.size())) {
      const double denom = r[best - 1] - 2.0 * r[best] + r[best + 1];
      if (denom < 0.0) tau += std::clamp(0.5 * (r[best - 1] - r[best + 1]) / denom, -0.5, 0.5) * step;
    }
    // Pair delay is d_ref - d_c; alignment needs d_c - d_ref.
    delays[c] = -tau;
  }
  return delays;
}

}  // namespace mcse
