// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mcse/reference.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace mcse {

VadMask percentile_vad(const Spectrogram& close_spec, double percentile) {
  if (!(percentile > 0.0 && percentile < 100.0)) throw std::invalid_argument("percentile must be in (0,100)");
  if (close_spec.channel_count() < 1) throw std::invalid_argument("close-mic spectrogram is empty");
  const int frames = close_spec.frame_count();
  if (frames < 2) throw std::invalid_argument("percentile VAD needs at least two frames");

  VadMask vad;
  vad.percentile = percentile;
  vad.active = Mask::Zero(close_spec.freq_count(), frames);
  // Nearest rank: the ceil(p/100 * N)-th smallest value.
  const std::size_t rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * frames));
  std::vector<double> energy(frames), sorted(frames);
  for (int f = 0; f < close_spec.freq_count(); ++f) {
    for (int t = 0; t < frames; ++t) energy[t] = std::norm(close_spec[0](f, t));
    sorted = energy;
    std::nth_element(sorted.begin(), sorted.begin() + (rank - 1), sorted.end());
    const double threshold = sorted[rank - 1];
    for (int t = 0; t < frames; ++t) vad.active(f, t) = energy[t] > threshold ? 1.0 : 0.0;
  }
  return vad;
}

Mask smooth_frames(const Mask& mask, int width) {
  if (width < 1) throw std::invalid_argument("smoothing width must be >= 1");
  const int half = width / 2;
  const int frames = static_cast<int>(mask.cols());
  Mask out(mask.rows(), mask.cols());
  for (int t = 0; t < frames; ++t) {
    const int lo = std::max(0, t - half), hi = std::min(frames - 1, t + half);
    out.col(t) = mask.middleCols(lo, hi - lo + 1).rowwise().mean();
  }
  return out;
}

ReferenceResult build_reference(const Spectrogram& array_spec, const Spectrogram& close_spec,
                                const StftConfig& stft, const ReferenceConfig& cfg) {
  if (close_spec.freq_count() != array_spec.freq_count() || close_spec.frame_count() != array_spec.frame_count())
    throw std::invalid_argument("close-mic and array spectrograms are not time aligned");

  const VadMask adapt = percentile_vad(close_spec, cfg.adapt_percentile);
  const VadMask post = percentile_vad(close_spec, cfg.post_percentile);

  // Speech statistics where the close mic is loud, noise from the rest.
  const SpatialCovariance speech = estimate_covariance(array_spec, adapt.active, CovarianceKind::kSpeech);
  const SpatialCovariance noise = estimate_covariance(array_spec, adapt.active, CovarianceKind::kNoise);

  ReferenceResult res;
  res.weights = mvdr_weights(noise, speech, cfg.reference_channel, cfg.mvdr);
  const double floor = std::pow(10.0, -cfg.max_suppression_db / 20.0);
  res.post_gain = smooth_frames(post.active, cfg.smoothing_frames).cwiseMax(floor);
  res.spec = apply_beamformer(array_spec, res.weights, res.post_gain);
  res.clip = synthesize(res.spec, stft);
  return res;
}

}  // namespace mcse
