// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mcse/spatial_clustering.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace mcse {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Grid indices of local maxima, strongest first.
std::vector<int> peak_indices(const std::vector<double>& r) {
  std::vector<int> peaks;
  const int n = static_cast<int>(r.size());
  for (int i = 0; i < n; ++i) {
    const double left = i > 0 ? r[i - 1] : -std::numeric_limits<double>::infinity();
    const double right = i + 1 < n ? r[i + 1] : -std::numeric_limits<double>::infinity();
    if (r[i] > left && r[i] >= right) peaks.push_back(i);
  }
  std::stable_sort(peaks.begin(), peaks.end(), [&](int a, int b) { return r[a] > r[b]; });
  return peaks;
}

double refine_peak(const std::vector<double>& r, const std::vector<double>& grid, int i) {
  if (i <= 0 || i + 1 >= static_cast<int>(r.size())) return grid[i];
  const double denom = r[i - 1] - 2.0 * r[i] + r[i + 1];
  if (denom >= 0.0) return grid[i];
  double offset = 0.5 * (r[i - 1] - r[i + 1]) / denom;
  offset = std::clamp(offset, -0.5, 0.5);
  return grid[i] + offset * (grid[i + 1] - grid[i]);
}

// Expected complete-data log-likelihood of one (source, pair) delay with the
// variances re-estimated for that delay. Constants are dropped.
struct DelayFit {
  double score = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd variance;
};

DelayFit fit_delay(const IpdObservations& obs, int pair, const Mask& weights, double tau,
                   const Eigen::VectorXd& fallback_variance, double floor) {
  const Eigen::MatrixXd& ipd = obs.ipd[pair];
  const int frames = obs.frame_count();
  DelayFit fit;
  fit.score = 0.0;
  fit.variance = fallback_variance;
  for (int k = 0; k < obs.freq_count(); ++k) {
    const double shift = obs.omega(k) * tau;
    double w_sum = 0.0, s_sum = 0.0;
    for (int t = 0; t < frames; ++t) {
      const double g = weights(k, t);
      const double r = wrap_phase(ipd(k, t) + shift);
      w_sum += g;
      s_sum += g * r * r;
    }
    if (w_sum <= 0.0) continue;
    const double var = std::max(s_sum / w_sum, floor);
    fit.variance(k) = var;
    fit.score += -0.5 * (w_sum * std::log(var) + s_sum / var);
  }
  return fit;
}

}  // namespace

double wrap_phase(double x) {
  double r = x - kTwoPi * std::round(x / kTwoPi);
  if (r <= -std::numbers::pi) r += kTwoPi;
  if (r > std::numbers::pi) r -= kTwoPi;
  return r;
}

Eigen::MatrixXd observed_ipd(const Spectrogram& spec, ChannelPair pair) {
  const auto [a, b] = pair;
  if (a == b) throw std::invalid_argument("IPD needs two distinct channels");
  if (a < 0 || b < 0 || a >= spec.channel_count() || b >= spec.channel_count())
    throw std::out_of_range("IPD channel index out of range");
  Eigen::MatrixXd out(spec.freq_count(), spec.frame_count());
  for (int t = 0; t < spec.frame_count(); ++t)
    for (int k = 0; k < spec.freq_count(); ++k)
      out(k, t) = std::arg(spec[a](k, t) * std::conj(spec[b](k, t)));
  // arg() returns [-pi, pi]; fold -pi onto +pi.
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (out.data()[i] <= -std::numbers::pi) out.data()[i] = std::numbers::pi;
  return out;
}

std::vector<double> TdoaGrid::points() const {
  if (!(step > 0.0) || half_width < 0.0) throw std::invalid_argument("bad TDOA grid");
  std::vector<double> pts;
  const int n = static_cast<int>(std::floor(half_width / step + 1e-9));
  for (int i = -n; i <= n; ++i) pts.push_back(i * step);
  return pts;
}

TdoaGrid TdoaGrid::for_window(int window_size) {
  return TdoaGrid{window_size / 8.0, 0.5};
}

double IpdObservations::omega(int k) const { return kTwoPi * k / window_size; }

IpdObservations make_observations(const Spectrogram& spec, const std::vector<ChannelPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("no channel pairs");
  IpdObservations obs;
  obs.pairs = pairs;
  obs.window_size = spec.window_size;
  for (const auto& p : pairs) {
    obs.ipd.push_back(observed_ipd(spec, p));
    obs.phasor.push_back(obs.ipd.back().unaryExpr([](double x) { return std::polar(1.0, x); }));
  }
  return obs;
}

std::vector<ChannelPair> default_pairs(int channel_count, bool pool_all_pairs) {
  if (channel_count < 2) throw std::invalid_argument("spatial clustering needs >= 2 channels");
  if (!pool_all_pairs) return {{0, 1}};
  std::vector<ChannelPair> pairs;
  for (int a = 0; a < channel_count; ++a)
    for (int b = a + 1; b < channel_count; ++b) pairs.emplace_back(a, b);
  return pairs;
}

void ClusterParams::validate() const {
  const int k = source_count();
  if (k < 1) throw std::invalid_argument("no sources");
  if (prior.size() != k || variance.size() != tdoa.size())
    throw std::invalid_argument("cluster parameter shapes disagree");
  if (std::abs(prior.sum() - 1.0) > 1e-9) throw std::invalid_argument("priors must sum to 1");
  for (const auto& per_pair : variance)
    for (const auto& v : per_pair)
      if ((v.array() <= 0.0).any()) throw std::invalid_argument("variances must be positive");
}

std::vector<double> phat_correlation(const IpdObservations& obs, int pair,
                                     const std::vector<double>& grid, const Mask* weights) {
  const Eigen::MatrixXcd& ph = obs.phasor[pair];
  // Sum over frames first, then evaluate each delay across frequencies.
  Eigen::VectorXcd per_freq = weights ? Eigen::VectorXcd((ph.array() * weights->array()).rowwise().sum())
                                      : Eigen::VectorXcd(ph.rowwise().sum());
  std::vector<double> r(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (int k = 1; k < obs.freq_count(); ++k) {
      const double phase = obs.omega(k) * grid[g];
      acc += per_freq(k).real() * std::cos(phase) - per_freq(k).imag() * std::sin(phase);
    }
    r[g] = acc;
  }
  return r;
}

ClusterParams init_params(const IpdObservations& obs, int n_sources, const TdoaGrid& grid) {
  if (n_sources < 1) throw std::invalid_argument("n_sources must be >= 1");
  const std::vector<double> pts = grid.points();
  if (pts.empty()) throw std::invalid_argument("empty TDOA grid");
  const int pairs = static_cast<int>(obs.pairs.size());
  const int freqs = obs.freq_count();

  ClusterParams params;
  params.prior = Eigen::VectorXd::Constant(n_sources, 1.0 / n_sources);
  params.tdoa.assign(n_sources, std::vector<double>(pairs, 0.0));
  params.variance.assign(n_sources, std::vector<Eigen::VectorXd>(pairs, Eigen::VectorXd::Ones(freqs)));

  const std::vector<double> r = phat_correlation(obs, 0, pts);
  std::vector<double> chosen;
  for (int i : peak_indices(r)) {
    if (static_cast<int>(chosen.size()) == n_sources) break;
    const double tau = refine_peak(r, pts, i);
    bool close = false;
    for (double c : chosen) close |= std::abs(c - tau) < 1.0;
    if (!close) chosen.push_back(tau);
  }
  // Too few peaks: evenly spaced grid points fill the remaining sources.
  for (std::size_t i = 0; i < pts.size() && static_cast<int>(chosen.size()) < n_sources; ++i) {
    const std::size_t slot = (i * (pts.size() - 1) / static_cast<std::size_t>(n_sources + 1) +
                              (pts.size() - 1) / static_cast<std::size_t>(n_sources + 1)) % pts.size();
    bool taken = false;
    for (double c : chosen) taken |= std::abs(c - pts[slot]) < 1.0;
    if (!taken) chosen.push_back(pts[slot]);
  }
  for (std::size_t i = 0; static_cast<int>(chosen.size()) < n_sources; ++i)
    chosen.push_back(pts[i % pts.size()]);
  for (int k = 0; k < n_sources; ++k) params.tdoa[k][0] = chosen[k];

  if (pairs > 1) {
    // Fit the remaining pairs to posteriors of a first-pair-only model so the
    // source identities agree across pairs.
    IpdObservations first = obs;
    first.pairs.resize(1);
    first.ipd.resize(1);
    first.phasor.resize(1);
    ClusterParams first_params = params;
    for (int k = 0; k < n_sources; ++k) {
      first_params.tdoa[k].resize(1);
      first_params.variance[k].resize(1);
    }
    const PosteriorMasks post = e_step(first, first_params).first;
    for (int p = 1; p < pairs; ++p) {
      for (int k = 0; k < n_sources; ++k) {
        const std::vector<double> rk = phat_correlation(obs, p, pts, &post.masks[k]);
        const std::vector<int> peaks = peak_indices(rk);
        params.tdoa[k][p] = peaks.empty() ? 0.0 : refine_peak(rk, pts, peaks.front());
      }
    }
  }
  return params;
}

std::pair<PosteriorMasks, double> e_step(const IpdObservations& obs, const ClusterParams& params,
                                         double variance_floor) {
  const int n_src = params.source_count();
  const int pairs = static_cast<int>(obs.pairs.size());
  const int freqs = obs.freq_count();
  const int frames = obs.frame_count();

  PosteriorMasks post;
  post.masks.assign(n_src, Mask(freqs, frames));
  std::vector<double> log_prior(n_src);
  for (int k = 0; k < n_src; ++k)
    log_prior[k] = params.prior(k) > 0.0 ? std::log(params.prior(k)) : -std::numeric_limits<double>::infinity();

  std::vector<double> inv_var(static_cast<std::size_t>(n_src) * pairs), log_norm(inv_var.size());
  std::vector<double> shift(inv_var.size());
  std::vector<double> logp(n_src);
  double total = 0.0;
  for (int f = 0; f < freqs; ++f) {
    for (int k = 0; k < n_src; ++k)
      for (int p = 0; p < pairs; ++p) {
        const double var = std::max(params.variance[k][p](f), variance_floor);
        inv_var[k * pairs + p] = 1.0 / var;
        log_norm[k * pairs + p] = -0.5 * std::log(2.0 * std::numbers::pi * var);
        shift[k * pairs + p] = obs.omega(f) * params.tdoa[k][p];
      }
    for (int t = 0; t < frames; ++t) {
      double best = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < n_src; ++k) {
        double lp = log_prior[k];
        for (int p = 0; p < pairs; ++p) {
          const int i = k * pairs + p;
          const double r = wrap_phase(obs.ipd[p](f, t) + shift[i]);
          lp += log_norm[i] - 0.5 * r * r * inv_var[i];
        }
        logp[k] = lp;
        best = std::max(best, lp);
      }
      double z = 0.0;
      for (int k = 0; k < n_src; ++k) z += std::exp(logp[k] - best);
      for (int k = 0; k < n_src; ++k) post.masks[k](f, t) = std::exp(logp[k] - best) / z;
      total += best + std::log(z);
    }
  }
  return {std::move(post), total};
}

ClusterParams m_step(const IpdObservations& obs, const PosteriorMasks& posteriors,
                     const ClusterParams& previous, const TdoaGrid& grid, double variance_floor) {
  const int n_src = previous.source_count();
  if (static_cast<int>(posteriors.masks.size()) != n_src)
    throw std::invalid_argument("posterior count does not match sources");
  const int pairs = static_cast<int>(obs.pairs.size());
  const std::vector<double> pts = grid.points();

  ClusterParams next = previous;
  Eigen::VectorXd mass(n_src);
  for (int k = 0; k < n_src; ++k) mass(k) = posteriors.masks[k].sum();
  const double total = mass.sum();
  if (!(total > 0.0)) throw std::invalid_argument("posteriors carry no mass");
  next.prior = mass / total;

  std::vector<int> starved;
  for (int k = 0; k < n_src; ++k) {
    if (mass(k) <= 1e-9 * total) {
      starved.push_back(k);
      continue;
    }
    for (int p = 0; p < pairs; ++p) {
      const Mask& w = posteriors.masks[k];
      const Eigen::VectorXd& old_var = previous.variance[k][p];
      std::vector<double> candidates{previous.tdoa[k][p]};
      const std::vector<double> r = phat_correlation(obs, p, pts, &w);
      const std::vector<int> peaks = peak_indices(r);
      for (std::size_t i = 0; i < peaks.size() && i < 3; ++i) candidates.push_back(refine_peak(r, pts, peaks[i]));

      double best_tau = candidates[0];
      DelayFit best = fit_delay(obs, p, w, best_tau, old_var, variance_floor);
      for (std::size_t c = 1; c < candidates.size(); ++c) {
        DelayFit fit = fit_delay(obs, p, w, candidates[c], old_var, variance_floor);
        if (fit.score > best.score) {
          best = std::move(fit);
          best_tau = candidates[c];
        }
      }
      // Golden-section polish of the winner within one grid step.
      const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
      double lo = best_tau - grid.step, hi = best_tau + grid.step;
      double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
      DelayFit f1 = fit_delay(obs, p, w, x1, old_var, variance_floor);
      DelayFit f2 = fit_delay(obs, p, w, x2, old_var, variance_floor);
      for (int it = 0; it < 20; ++it) {
        if (f1.score > f2.score) {
          hi = x2;
          x2 = x1;
          f2 = std::move(f1);
          x1 = hi - gr * (hi - lo);
          f1 = fit_delay(obs, p, w, x1, old_var, variance_floor);
        } else {
          lo = x1;
          x1 = x2;
          f1 = std::move(f2);
          x2 = lo + gr * (hi - lo);
          f2 = fit_delay(obs, p, w, x2, old_var, variance_floor);
        }
      }
      if (f1.score > best.score) {
        best = std::move(f1);
        best_tau = x1;
      }
      if (f2.score > best.score) {
        best = std::move(f2);
        best_tau = x2;
      }
      next.tdoa[k][p] = best_tau;
      next.variance[k][p] = best.variance;
    }
  }

  // A source with no posterior mass keeps its zero prior but moves to the
  // strongest correlation peak not already claimed by another source.
  for (int k : starved) {
    for (int p = 0; p < pairs; ++p) {
      const std::vector<double> r = phat_correlation(obs, p, pts);
      double tau = next.tdoa[k][p];
      for (int i : peak_indices(r)) {
        const double cand = refine_peak(r, pts, i);
        bool claimed = false;
        for (int j = 0; j < n_src; ++j)
          if (j != k && std::abs(next.tdoa[j][p] - cand) < 1.0) claimed = true;
        if (!claimed) {
          tau = cand;
          break;
        }
      }
      next.tdoa[k][p] = tau;
      next.variance[k][p].setOnes();
    }
  }
  return next;
}

int nearest_zero_source(const ClusterParams& params) {
  int best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (int k = 0; k < params.source_count(); ++k) {
    double s = 0.0;
    for (double tau : params.tdoa[k]) s += std::abs(tau);
    s /= static_cast<double>(params.tdoa[k].size());
    if (s < best_score) {
      best_score = s;
      best = k;
    }
  }
  return best;
}

EmResult run_em(const Spectrogram& spec, const EmConfig& cfg) {
  return run_em(make_observations(spec, default_pairs(spec.channel_count(), cfg.pool_all_pairs)), cfg);
}

EmResult run_em(const IpdObservations& obs, const EmConfig& cfg) {
  const TdoaGrid grid = cfg.grid.value_or(TdoaGrid::for_window(obs.window_size));
  return run_em(obs, cfg, init_params(obs, cfg.n_sources, grid));
}

EmResult run_em(const IpdObservations& obs, const EmConfig& cfg, ClusterParams start) {
  if (cfg.n_iters < 1) throw std::invalid_argument("n_iters must be >= 1");
  const TdoaGrid grid = cfg.grid.value_or(TdoaGrid::for_window(obs.window_size));
  EmResult res;
  res.params = std::move(start);
  res.params.validate();
  for (int it = 0; it < cfg.n_iters; ++it) {
    auto [post, ll] = e_step(obs, res.params, cfg.variance_floor);
    res.trace.log_likelihood.push_back(ll);
    res.params = m_step(obs, post, res.params, grid, cfg.variance_floor);
    ++res.trace.iterations;
  }
  auto [post, ll] = e_step(obs, res.params, cfg.variance_floor);
  res.trace.log_likelihood.push_back(ll);
  res.posteriors = std::move(post);
  if (cfg.target_override) {
    if (*cfg.target_override < 0 || *cfg.target_override >= res.params.source_count())
      throw std::out_of_range("target override is not a source index");
    res.target = *cfg.target_override;
  } else {
    res.target = nearest_zero_source(res.params);
  }
  return res;
}

}  // namespace mcse
