// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Short-time Fourier analysis/synthesis and log-magnitude features.

#ifndef MCSE_STFT_H_
#define MCSE_STFT_H_

#include <complex>
#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace mcse {

using Complex = std::complex<double>;

// Multichannel time-domain signal. All channels share one length.
struct AudioClip {
  std::vector<std::vector<double>> samples;  // [channel][sample]
  int sample_rate = 16000;

  AudioClip() = default;
  AudioClip(int channels, std::size_t length, int rate = 16000);

  int channel_count() const { return static_cast<int>(samples.size()); }
  std::size_t length() const { return samples.empty() ? 0 : samples[0].size(); }

  // Throws std::invalid_argument when channels are ragged or the rate is not
  // positive.
  void validate() const;

  AudioClip channel(int c) const;
};

enum class WindowKind { kSqrtHann, kHann, kRectangular };

struct StftConfig {
  int window_size = 1024;
  int hop_size = 256;
  WindowKind window_kind = WindowKind::kSqrtHann;

  int freq_count() const { return window_size / 2 + 1; }
  void validate() const;
  std::vector<double> window() const;

  // Hop = window/4 with a sqrt-Hann pair, perfect reconstruction.
  static StftConfig with_window(int window_size);
};

// Complex spectrogram, one (frequency x frame) plane per channel.
struct Spectrogram {
  std::vector<Eigen::MatrixXcd> planes;
  int sample_rate = 16000;
  std::size_t signal_length = 0;  // samples of the analysed clip
  int window_size = 0;
  int hop_size = 0;

  int channel_count() const { return static_cast<int>(planes.size()); }
  int freq_count() const { return planes.empty() ? 0 : static_cast<int>(planes[0].rows()); }
  int frame_count() const { return planes.empty() ? 0 : static_cast<int>(planes[0].cols()); }

  const Eigen::MatrixXcd& operator[](int c) const { return planes[c]; }
  Eigen::MatrixXcd& operator[](int c) { return planes[c]; }

  // Observation vector y(w,t) across channels.
  Eigen::VectorXcd observation(int freq, int frame) const;

  Spectrogram channel(int c) const;
  Spectrogram with_plane(Eigen::MatrixXcd plane) const;
};

// Frame count produced by analyze() for a signal of the given length.
int frame_count_for(std::size_t length, const StftConfig& cfg);

Spectrogram analyze(const AudioClip& clip, const StftConfig& cfg);
AudioClip synthesize(const Spectrogram& spec, const StftConfig& cfg);

// Per-frequency standardization statistics over log magnitudes (dB).
struct NormStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  bool empty() const { return mean.size() == 0; }
};

// Running accumulator for corpus-wide statistics.
class NormAccumulator {
 public:
  void add(const Eigen::MatrixXd& log_magnitude_db);
  NormStats finish() const;
  long frames() const { return frames_; }

 private:
  Eigen::VectorXd sum_;
  Eigen::VectorXd sum_sq_;
  long frames_ = 0;
};

struct FeatureMatrix {
  Eigen::MatrixXd values;  // frequency x frame
  NormStats stats;
};

// 20*log10(|y| + eps), eps = 1e-10 times the channel's peak magnitude.
Eigen::MatrixXd log_magnitude_db(const Spectrogram& spec, int channel);

// Standardized log magnitude. Self-computed stats when none are supplied.
FeatureMatrix to_features(const Spectrogram& spec, int channel,
                          const std::optional<NormStats>& stats = std::nullopt);

}  // namespace mcse

#endif  // MCSE_STFT_H_
