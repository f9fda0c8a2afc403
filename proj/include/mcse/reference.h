// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Clean reference from a close-talking microphone plus the array. The close
// microphone only gates the array beamformer; its samples never reach the
// output.

#ifndef MCSE_REFERENCE_H_
#define MCSE_REFERENCE_H_

#include "mcse/beamformer.h"
#include "mcse/mask.h"
#include "mcse/stft.h"

namespace mcse {

struct VadMask {
  Mask active;  // values in {0,1}
  double percentile = 0.0;
};

// Bin active iff |y|^2 exceeds that band's nearest-rank percentile over the
// utterance. Uses channel 0 of close_spec.
VadMask percentile_vad(const Spectrogram& close_spec, double percentile);

struct ReferenceConfig {
  double adapt_percentile = 85.0;
  double post_percentile = 75.0;
  double max_suppression_db = 15.0;
  int smoothing_frames = 3;
  int reference_channel = 0;
  MvdrOptions mvdr;
};

struct ReferenceResult {
  AudioClip clip;
  Spectrogram spec;
  BeamformerWeights weights;
  Mask post_gain;  // applied gain, >= 10^(-max_suppression_db/20)
};

// Centered moving average along frames; edges average what is available.
Mask smooth_frames(const Mask& mask, int width);

ReferenceResult build_reference(const Spectrogram& array_spec, const Spectrogram& close_spec,
                                const StftConfig& stft, const ReferenceConfig& cfg = {});

}  // namespace mcse

#endif  // MCSE_REFERENCE_H_
