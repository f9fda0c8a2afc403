// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mcse/fusion.h"

#include <algorithm>
#include <stdexcept>

namespace mcse {

std::vector<const Mask*> MaskSet::members(FusionMode mode) const {
  std::vector<const Mask*> out;
  for (const auto& m : cleaned) out.push_back(&m);
  if (mode == FusionMode::kMesslLstm) {
    if (!spatial) throw std::invalid_argument("MESSL+LSTM fusion needs the spatial mask");
    out.push_back(&*spatial);
  }
  if (out.empty()) throw std::invalid_argument("mask set is empty");
  return out;
}

MaskSet MaskSet::without_channels(const std::vector<int>& excluded) const {
  MaskSet out;
  out.spatial = spatial;
  for (int c = 0; c < static_cast<int>(cleaned.size()); ++c)
    if (std::find(excluded.begin(), excluded.end(), c) == excluded.end()) out.cleaned.push_back(cleaned[c]);
  return out;
}

void MaskSet::validate() const {
  const Mask* first = !cleaned.empty() ? &cleaned[0] : (spatial ? &*spatial : nullptr);
  if (!first) throw std::invalid_argument("mask set is empty");
  auto check = [&](const Mask& m) {
    if (m.rows() != first->rows() || m.cols() != first->cols())
      throw std::invalid_argument("masks in a set must share one shape");
    if (!is_valid_mask(m)) throw std::invalid_argument("mask values must lie in [0,1]");
  };
  for (const auto& m : cleaned) check(m);
  if (spatial) check(*spatial);
}

Mask fuse_speech(const MaskSet& set, FusionMode mode) {
  set.validate();
  const auto ms = set.members(mode);
  Mask out = *ms[0];
  for (std::size_t i = 1; i < ms.size(); ++i) out = out.cwiseMin(*ms[i]);
  return out;
}

Mask fuse_noise(const MaskSet& set, FusionMode mode) {
  set.validate();
  const auto ms = set.members(mode);
  Mask out = *ms[0];
  for (std::size_t i = 1; i < ms.size(); ++i) out = out.cwiseMax(*ms[i]);
  return out;
}

Mask fuse_post(const MaskSet& set, FusionMode mode) {
  set.validate();
  const auto ms = set.members(mode);
  Mask out = *ms[0];
  for (std::size_t i = 1; i < ms.size(); ++i) out += *ms[i];
  out /= static_cast<double>(ms.size());
  // Rounding can push an average of equal values a hair outside the min/max.
  return out.cwiseMax(fuse_speech(set, mode)).cwiseMin(fuse_noise(set, mode));
}

FusedMasks fuse(const MaskSet& set, FusionMode mode) {
  return {fuse_speech(set, mode), fuse_noise(set, mode), fuse_post(set, mode)};
}

}  // namespace mcse
