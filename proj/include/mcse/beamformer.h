// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Mask-driven MVDR beamforming with a post-filter, and a delay-and-sum
// baseline steered by GCC-PHAT delays.

#ifndef MCSE_BEAMFORMER_H_
#define MCSE_BEAMFORMER_H_

#include <vector>

#include <Eigen/Dense>

#include "mcse/mask.h"
#include "mcse/stft.h"

namespace mcse {

enum class CovarianceKind {
  kSpeech,  // weights m(w,t)
  kNoise,   // weights 1 - m(w,t)
};

struct SpatialCovariance {
  std::vector<Eigen::MatrixXcd> matrices;  // one M x M per frequency
  Eigen::VectorXd weight;                  // accumulated mask weight
  std::vector<bool> degenerate;            // zero total weight

  int freq_count() const { return static_cast<int>(matrices.size()); }
};

// Phi(w) = sum_t a(w,t) y y^H / sum_t a(w,t), a = m or 1 - m by kind.
SpatialCovariance estimate_covariance(const Spectrogram& spec, const Mask& mask, CovarianceKind kind);

struct MvdrOptions {
  double diagonal_loading = 1e-6;  // times Tr(Phi_n)/M
  double lambda_threshold = 1e-8;
};

struct BeamformerWeights {
  Eigen::MatrixXcd h;  // M x F; output is sum_i conj(h_i) y_i
  int reference = 0;
  std::vector<bool> degenerate;

  int degenerate_count() const;
};

// h = (G - I) e_ref / (Tr(G) - M), G = Phi_n^{-1} (Phi_n + Phi_s), evaluated
// as Phi_n^{-1} Phi_s to avoid cancelling against I. Falls back to e_ref when
// |lambda| is below threshold or the inputs are unusable.
Eigen::VectorXcd mvdr_vector(const Eigen::MatrixXcd& noise, const Eigen::MatrixXcd& speech, int reference,
                             const MvdrOptions& opts = {}, bool* degenerate = nullptr);

BeamformerWeights mvdr_weights(const SpatialCovariance& noise, const SpatialCovariance& speech, int reference,
                               const MvdrOptions& opts = {});

// x(w,t) = m_p(w,t) * sum_i conj(h_i(w)) y_i(w,t).
Spectrogram apply_beamformer(const Spectrogram& spec, const BeamformerWeights& weights, const Mask& post_mask);

// (1 / sum w) * sum_i w_i e^{+j w tau_i} y_i(w,t).
Spectrogram delay_and_sum(const Spectrogram& spec, const std::vector<double>& tdoas,
                          const std::vector<double>& weights);

// Per-channel delay of each channel relative to the reference (0 for the
// reference itself), from GCC-PHAT peaks within +-max_lag samples.
std::vector<double> gcc_phat_delays(const Spectrogram& spec, int reference, double max_lag, double step = 0.5);

}  // namespace mcse

#endif  // MCSE_BEAMFORMER_H_
