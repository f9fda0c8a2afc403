// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Time-frequency masks and their on-disk format.
//
// A mask file is one ASCII header line
//
//   MCSEMASK 1 <freq_count> <frame_count> <window_size> <hop_size>\n
//
// followed by freq_count * frame_count little-endian IEEE-754 binary64
// values, frequency-major (all frames of bin 0, then bin 1, ...).

#ifndef MCSE_MASK_H_
#define MCSE_MASK_H_

#include <string>

#include <Eigen/Dense>

namespace mcse {

// Real gains in [0,1], frequency x frame.
using Mask = Eigen::MatrixXd;

struct MaskFile {
  Mask mask;
  int window_size = 0;
  int hop_size = 0;
};

void write_mask(const std::string& path, const MaskFile& file);
MaskFile read_mask(const std::string& path);

// True when every value lies in [0,1] and is finite.
bool is_valid_mask(const Mask& mask);

}  // namespace mcse

#endif  // MCSE_MASK_H_
