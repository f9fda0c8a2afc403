// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Objective quality scores and report tables.

#ifndef MCSE_METRICS_H_
#define MCSE_METRICS_H_

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mcse/mask.h"

namespace mcse {

constexpr double kSiSdrCapDb = 60.0;

// Scale-invariant SDR in dB, capped at +60.
double si_sdr(std::span<const double> estimate, std::span<const double> reference);

// Mean over non-overlapping frames (the last may be partial) of the per-frame
// SNR, each clamped to [-10, 35] dB.
double segmental_snr(std::span<const double> estimate, std::span<const double> reference, std::size_t frame_len);

struct MaskScores {
  double bce = 0.0;
  double hit_rate = 0.0;  // agreement after thresholding both at 0.5
};

MaskScores mask_scores(const Mask& pred, const Mask& target);

struct EvalRow {
  std::string name;   // utterance stem
  std::string group;  // e.g. environment / real-vs-simulated tag
  double si_sdr_db = 0.0;
  double seg_snr_db = 0.0;
};

struct GroupSummary {
  std::string group;
  std::string metric;
  double mean = 0.0;
  int count = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  // One row per (group, metric); "all" aggregates every utterance.
  std::vector<GroupSummary> summarize() const;
  void write_table(std::ostream& out) const;
  void write_csv(std::ostream& out) const;
  void write_summary_csv(std::ostream& out) const;
};

}  // namespace mcse

#endif  // MCSE_METRICS_H_
