// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mcse/metrics.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <stdexcept>

namespace mcse {

double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size()) throw std::invalid_argument("si_sdr: length mismatch");
  double ref_energy = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    ref_energy += reference[i] * reference[i];
    dot += estimate[i] * reference[i];
  }
  if (ref_energy <= 0.0) throw std::invalid_argument("si_sdr: zero reference");
  const double alpha = dot / ref_energy;
  double target = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = alpha * reference[i];
    const double e = estimate[i] - s;
    target += s * s;
    residual += e * e;
  }
  if (residual <= 0.0) return kSiSdrCapDb;
  if (target <= 0.0) return -kSiSdrCapDb;
  return std::min(kSiSdrCapDb, 10.0 * std::log10(target / residual));
}

double segmental_snr(std::span<const double> estimate, std::span<const double> reference, std::size_t frame_len) {
  if (estimate.size() != reference.size()) throw std::invalid_argument("segmental_snr: length mismatch");
  if (frame_len == 0) throw std::invalid_argument("segmental_snr: zero frame length");
  if (reference.empty()) throw std::invalid_argument("segmental_snr: empty signal");
  double acc = 0.0;
  int frames = 0;
  for (std::size_t start = 0; start < reference.size(); start += frame_len) {
    const std::size_t end = std::min(reference.size(), start + frame_len);
    double sig = 0.0, err = 0.0;
    for (std::size_t i = start; i < end; ++i) {
      sig += reference[i] * reference[i];
      const double e = reference[i] - estimate[i];
      err += e * e;
    }
    double snr;
    if (err <= 0.0)
      snr = 35.0;
    else if (sig <= 0.0)
      snr = -10.0;
    else
      snr = std::clamp(10.0 * std::log10(sig / err), -10.0, 35.0);
    acc += snr;
    ++frames;
  }
  return acc / frames;
}

MaskScores mask_scores(const Mask& pred, const Mask& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw std::invalid_argument("mask_scores: shape mismatch");
  MaskScores s;
  if (pred.size() == 0) return s;
  constexpr double kClamp = 1e-12;
  double bce = 0.0;
  long hits = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred.data()[i], kClamp, 1.0 - kClamp);
    const double y = target.data()[i];
    bce -= y * std::log(p) + (1.0 - y) * std::log1p(-p);
    hits += (pred.data()[i] >= 0.5) == (y >= 0.5);
  }
  s.bce = bce / static_cast<double>(pred.size());
  s.hit_rate = static_cast<double>(hits) / static_cast<double>(pred.size());
  return s;
}

std::vector<GroupSummary> EvalReport::summarize() const {
  std::map<std::string, std::pair<double, double>> sums;  // group -> (si_sdr, seg_snr)
  std::map<std::string, int> counts;
  std::vector<std::string> order;
  auto add = [&](const std::string& g, const EvalRow& r) {
    if (!counts.count(g)) order.push_back(g);
    sums[g].first += r.si_sdr_db;
    sums[g].second += r.seg_snr_db;
    ++counts[g];
  };
  for (const auto& r : rows) {
    if (!r.group.empty()) add(r.group, r);
  }
  std::sort(order.begin(), order.end());
  for (const auto& r : rows) add("all", r);
  if (!rows.empty() && (order.empty() || order.back() != "all")) order.push_back("all");

  std::vector<GroupSummary> out;
  for (const auto& g : order) {
    const int n = counts[g];
    out.push_back({g, "si_sdr_db", sums[g].first / n, n});
    out.push_back({g, "seg_snr_db", sums[g].second / n, n});
  }
  return out;
}

void EvalReport::write_table(std::ostream& out) const {
  std::size_t name_w = 9, group_w = 5;
  for (const auto& r : rows) {
    name_w = std::max(name_w, r.name.size());
    group_w = std::max(group_w, r.group.size());
  }
  out << std::left << std::setw(static_cast<int>(name_w)) << "utterance" << "  " << std::setw(static_cast<int>(group_w))
      << "group" << "  " << std::right << std::setw(10) << "SI-SDR" << "  " << std::setw(10) << "SegSNR" << '\n';
  out << std::fixed << std::setprecision(2);
  for (const auto& r : rows)
    out << std::left << std::setw(static_cast<int>(name_w)) << r.name << "  " << std::setw(static_cast<int>(group_w))
        << r.group << "  " << std::right << std::setw(10) << r.si_sdr_db << "  " << std::setw(10) << r.seg_snr_db
        << '\n';
  out << '\n' << std::left << std::setw(static_cast<int>(std::max(group_w, std::size_t{5}))) << "group" << "  "
      << std::setw(10) << "metric" << "  " << std::right << std::setw(10) << "mean" << "  " << std::setw(5) << "n"
      << '\n';
  for (const auto& s : summarize())
    out << std::left << std::setw(static_cast<int>(std::max(group_w, std::size_t{5}))) << s.group << "  "
        << std::setw(10) << s.metric << "  " << std::right << std::setw(10) << s.mean << "  " << std::setw(5)
        << s.count << '\n';
  out.unsetf(std::ios::floatfield);
}

void EvalReport::write_csv(std::ostream& out) const {
  out << "utterance,group,si_sdr_db,seg_snr_db\n" << std::setprecision(10);
  for (const auto& r : rows) out << r.name << ',' << r.group << ',' << r.si_sdr_db << ',' << r.seg_snr_db << '\n';
}

void EvalReport::write_summary_csv(std::ostream& out) const {
  out << "group,metric,mean,count\n" << std::setprecision(10);
  for (const auto& s : summarize()) out << s.group << ',' << s.metric << ',' << s.mean << ',' << s.count << '\n';
}

}  // namespace mcse
