// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Conservative fusion of per-channel cleaned masks and the spatial mask.

#ifndef MCSE_FUSION_H_
#define MCSE_FUSION_H_

#include <optional>
#include <vector>

#include "mcse/mask.h"

namespace mcse {

enum class FusionMode {
  kLstmOnly,    // cleaned masks only
  kMesslLstm,   // cleaned masks plus the spatial mask
};

struct MaskSet {
  std::vector<Mask> cleaned;
  std::optional<Mask> spatial;

  // Masks that take part in fusion under the given mode.
  std::vector<const Mask*> members(FusionMode mode) const;
  // Drops cleaned masks of the listed channels.
  MaskSet without_channels(const std::vector<int>& excluded) const;
  void validate() const;
};

// Pointwise minimum: speech only where every mask agrees.
Mask fuse_speech(const MaskSet& set, FusionMode mode);
// Pointwise maximum; its complement marks bins that are surely noise.
Mask fuse_noise(const MaskSet& set, FusionMode mode);
// Pointwise mean of the participating masks.
Mask fuse_post(const MaskSet& set, FusionMode mode);

struct FusedMasks {
  Mask speech;
  Mask noise;
  Mask post;
};

FusedMasks fuse(const MaskSet& set, FusionMode mode);

}  // namespace mcse

#endif  // MCSE_FUSION_H_
