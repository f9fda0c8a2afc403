// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// End-to-end enhancement systems and the run configuration shared by the
// command-line tool.

#ifndef MCSE_PIPELINE_H_
#define MCSE_PIPELINE_H_

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mcse/beamformer.h"
#include "mcse/fusion.h"
#include "mcse/mask.h"
#include "mcse/refiner.h"
#include "mcse/spatial_clustering.h"
#include "mcse/stft.h"

namespace mcse {

// The five systems: noisy reference channel, spatial-mask MVDR,
// delay-and-sum, cleaned-mask MVDR, cleaned+spatial MVDR.
enum class SystemMode { kNoisy, kMessl, kDas, kLstm, kMesslLstm };

SystemMode parse_mode(const std::string& name);
std::string mode_name(SystemMode mode);
std::vector<SystemMode> all_modes();

enum class NormScope { kCorpus, kUtterance };

struct RunConfig {
  StftConfig stft;
  EmConfig em;
  MvdrOptions mvdr;
  SystemMode mode = SystemMode::kMesslLstm;
  std::string model_path;
  int reference_channel = 4;  // fifth microphone
  std::vector<int> exclude_channels;
  std::uint64_t seed = 1;
  std::string cache_dir;
  NormScope norm = NormScope::kCorpus;

  RefinerConfig refiner;  // freq_count is filled from the STFT at train time
  TrainConfig train;
  double valid_fraction = 0.2;

  RunConfig();

  // key=value; '#' starts a comment. Unknown keys are errors.
  void set(const std::string& key, const std::string& value);
  void load_file(const std::string& path);
  std::map<std::string, std::string> describe() const;
  // Stable text used for cache keys and run logs.
  std::string fingerprint() const;
  void validate() const;
};

// Timings and diagnostics for one utterance.
class RunLog {
 public:
  void stage(const std::string& name, double seconds);
  void note(const std::string& line);
  const std::vector<std::string>& lines() const { return lines_; }
  void write(std::ostream& out) const;

 private:
  std::vector<std::string> lines_;
};

struct EnhanceResult {
  AudioClip output;  // single channel
  Spectrogram spec;
  std::optional<Mask> spatial_mask;
  std::vector<Mask> cleaned_masks;
  int degenerate_bins = 0;
};

// Target-source mask from EM, read from / written to the cache when
// cfg.cache_dir is set.
Mask spatial_mask(const AudioClip& mixture, const Spectrogram& spec, const RunConfig& cfg, RunLog* log = nullptr);

// Per-channel refiner outputs; every channel is an independent sequence.
std::vector<Mask> refine_channels(const Spectrogram& spec, const Mask& spatial, const RefinerParams& model,
                                  NormScope norm);

struct MaskedBeamformResult {
  Spectrogram spec;
  BeamformerWeights weights;
};

// Fusion -> covariances -> MVDR -> post-filter.
MaskedBeamformResult beamform_with_masks(const Spectrogram& spec, const MaskSet& masks, FusionMode mode,
                                         int reference_channel, const MvdrOptions& mvdr = {});

// Runs the configured system. Refiner modes need a model.
EnhanceResult enhance(const AudioClip& mixture, const RunConfig& cfg, const RefinerParams* model = nullptr,
                      RunLog* log = nullptr);

// One training sequence: channel features, logit spatial mask, IA target.
TrainingBatch make_training_batch(const Spectrogram& noisy, const Spectrogram& clean, int channel,
                                  const Mask& spatial, const NormStats& stats, double logit_eps);

struct TrainingUtterance {
  AudioClip noisy;
  AudioClip clean;  // target image, same channel count as noisy
};

struct TrainingData {
  std::vector<TrainingBatch> train;
  std::vector<TrainingBatch> valid;
  NormStats norm;  // empty under per-utterance normalization
  std::vector<int> valid_utterances;
};

// Splits utterances into training / validation by a seeded shuffle, runs EM on
// every mixture and emits one sequence per channel.
TrainingData prepare_training_data(const std::vector<TrainingUtterance>& utterances, const RunConfig& cfg,
                                   RunLog* log = nullptr);

struct ManifestRecord {
  std::string path;
  std::string clean_path;  // optional
  std::string group;       // optional
  int line = 0;
};

// Tab-separated: path [clean_path [group]]. Blank lines and '#' comments are
// skipped. Errors carry the line number; missing files are named.
std::vector<ManifestRecord> read_manifest(const std::string& path, bool require_clean = false,
                                          bool check_files = true);

std::string file_stem(const std::string& path);

}  // namespace mcse

#endif  // MCSE_PIPELINE_H_
