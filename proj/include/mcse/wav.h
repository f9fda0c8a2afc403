// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Multichannel RIFF WAV reading and writing.

#ifndef MCSE_WAV_H_
#define MCSE_WAV_H_

#include <string>

#include "mcse/stft.h"

namespace mcse {

enum class WavFormat { kPcm16, kFloat32 };

// Reads 16-bit PCM or 32-bit IEEE float (plain or WAVE_FORMAT_EXTENSIBLE).
// PCM samples are scaled to [-1, 1).
AudioClip read_wav(const std::string& path);

// 16-bit output is clipped to the representable range.
void write_wav(const std::string& path, const AudioClip& clip,
               WavFormat format = WavFormat::kFloat32);

}  // namespace mcse

#endif  // MCSE_WAV_H_
