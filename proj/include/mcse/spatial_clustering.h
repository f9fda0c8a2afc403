// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// EM clustering of interchannel phase differences into per-source masks.
//
// Each source k owns, for every microphone pair p, a delay tau_kp and a
// per-frequency variance var_kp(w). At bin (w,t) the observed IPD phi_p is
// scored with a Gaussian on the wrapped residual wrap(phi_p + w * tau_kp);
// pairs combine by summing log-likelihoods and a global prior weights the
// sources. Only phase is modelled (no level differences, no garbage source).

#ifndef MCSE_SPATIAL_CLUSTERING_H_
#define MCSE_SPATIAL_CLUSTERING_H_

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mcse/mask.h"
#include "mcse/stft.h"

namespace mcse {

using ChannelPair = std::pair<int, int>;

// Wraps into (-pi, pi].
double wrap_phase(double x);

// angle(y_a * conj(y_b)) per (frequency, frame).
Eigen::MatrixXd observed_ipd(const Spectrogram& spec, ChannelPair pair);

struct TdoaGrid {
  double half_width = 64.0;  // samples
  double step = 0.5;

  std::vector<double> points() const;
  // +-(window/8) samples at half-sample steps.
  static TdoaGrid for_window(int window_size);
};

// IPDs and their unit phasors, computed once per utterance.
struct IpdObservations {
  std::vector<ChannelPair> pairs;
  std::vector<Eigen::MatrixXd> ipd;      // per pair, freq x frame
  std::vector<Eigen::MatrixXcd> phasor;  // exp(j * ipd)
  int window_size = 0;

  int freq_count() const { return ipd.empty() ? 0 : static_cast<int>(ipd[0].rows()); }
  int frame_count() const { return ipd.empty() ? 0 : static_cast<int>(ipd[0].cols()); }
  // Radian frequency of bin k, per sample.
  double omega(int k) const;
};

IpdObservations make_observations(const Spectrogram& spec, const std::vector<ChannelPair>& pairs);

// (0,1) alone, or every unordered pair.
std::vector<ChannelPair> default_pairs(int channel_count, bool pool_all_pairs);

struct ClusterParams {
  // Indexed [source][pair].
  std::vector<std::vector<double>> tdoa;
  std::vector<std::vector<Eigen::VectorXd>> variance;
  Eigen::VectorXd prior;

  int source_count() const { return static_cast<int>(tdoa.size()); }
  void validate() const;
};

struct PosteriorMasks {
  std::vector<Mask> masks;  // one per source, sum to one at every bin
};

struct EmTrace {
  std::vector<double> log_likelihood;
  int iterations = 0;
};

struct EmConfig {
  int n_sources = 2;
  int n_iters = 20;
  bool pool_all_pairs = false;
  std::optional<TdoaGrid> grid;   // default: TdoaGrid::for_window
  double variance_floor = 1e-3;
  std::optional<int> target_override;
};

// Phase-transform cross-correlation of a pair over the grid, optionally
// weighted per bin (e.g. by posteriors).
std::vector<double> phat_correlation(const IpdObservations& obs, int pair,
                                     const std::vector<double>& grid,
                                     const Mask* weights = nullptr);

// TDOAs at the n_sources strongest correlation peaks of the first pair;
// further pairs are fitted from the first pair's initial posteriors.
ClusterParams init_params(const IpdObservations& obs, int n_sources, const TdoaGrid& grid);

std::pair<PosteriorMasks, double> e_step(const IpdObservations& obs, const ClusterParams& params,
                                         double variance_floor = 1e-3);

// Generalized M-step: priors and variances are exact maximizers; each delay
// is chosen from the weighted-correlation peaks (quadratically refined) and
// the previous value by the expected complete-data log-likelihood, so the
// likelihood never decreases.
ClusterParams m_step(const IpdObservations& obs, const PosteriorMasks& posteriors,
                     const ClusterParams& previous, const TdoaGrid& grid,
                     double variance_floor = 1e-3);

struct EmResult {
  PosteriorMasks posteriors;
  ClusterParams params;
  EmTrace trace;
  int target = 0;

  const Mask& target_mask() const { return posteriors.masks[target]; }
};

// Source whose mean |tdoa| across pairs is smallest.
int nearest_zero_source(const ClusterParams& params);

EmResult run_em(const Spectrogram& spec, const EmConfig& cfg);
EmResult run_em(const IpdObservations& obs, const EmConfig& cfg);
// Starts from the given parameters instead of init_params.
EmResult run_em(const IpdObservations& obs, const EmConfig& cfg, ClusterParams start);

}  // namespace mcse

#endif  // MCSE_SPATIAL_CLUSTERING_H_
