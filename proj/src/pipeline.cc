// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mcse/pipeline.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <random>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace mcse {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::invalid_argument("not a boolean: " + v);
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  std::istringstream in(v);
  for (std::string tok; std::getline(in, tok, ',');) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

std::string join(const std::vector<int>& v) {
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
  return out.str();
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// FNV-1a over raw bytes.
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

SystemMode parse_mode(const std::string& name) {
  if (name == "noisy") return SystemMode::kNoisy;
  if (name == "messl") return SystemMode::kMessl;
  if (name == "das") return SystemMode::kDas;
  if (name == "lstm") return SystemMode::kLstm;
  if (name == "messl+lstm") return SystemMode::kMesslLstm;
  throw std::invalid_argument("unknown mode '" + name + "' (noisy, messl, das, lstm, messl+lstm)");
}

std::string mode_name(SystemMode mode) {
  switch (mode) {
    case SystemMode::kNoisy: return "noisy";
    case SystemMode::kMessl: return "messl";
    case SystemMode::kDas: return "das";
    case SystemMode::kLstm: return "lstm";
    case SystemMode::kMesslLstm: return "messl+lstm";
  }
  return "?";
}

std::vector<SystemMode> all_modes() {
  return {SystemMode::kNoisy, SystemMode::kMessl, SystemMode::kDas, SystemMode::kLstm, SystemMode::kMesslLstm};
}

RunConfig::RunConfig() {
  stft = StftConfig::with_window(1024);
  refiner.hidden_sizes = {64, 64};
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "window_size") {
    // Hop follows the window; set hop_size afterwards to override.
    stft = StftConfig::with_window(std::stoi(v));
  } else if (key == "hop_size") {
    stft.hop_size = std::stoi(v);
  } else if (key == "em.sources") {
    em.n_sources = std::stoi(v);
  } else if (key == "em.iterations") {
    em.n_iters = std::stoi(v);
  } else if (key == "em.pool_all_pairs") {
    em.pool_all_pairs = parse_bool(v);
  } else if (key == "em.grid_half_width") {
    if (v == "auto") {
      em.grid.reset();
    } else {
      TdoaGrid g = em.grid.value_or(TdoaGrid{});
      g.half_width = std::stod(v);
      em.grid = g;
    }
  } else if (key == "em.grid_step") {
    TdoaGrid g = em.grid.value_or(TdoaGrid::for_window(stft.window_size));
    g.step = std::stod(v);
    em.grid = g;
  } else if (key == "em.variance_floor") {
    em.variance_floor = std::stod(v);
  } else if (key == "em.target") {
    if (v == "auto") em.target_override.reset();
    else em.target_override = std::stoi(v);
  } else if (key == "mvdr.diagonal_loading") {
    mvdr.diagonal_loading = std::stod(v);
  } else if (key == "mvdr.lambda_threshold") {
    mvdr.lambda_threshold = std::stod(v);
  } else if (key == "mode") {
    mode = parse_mode(v);
  } else if (key == "model") {
    model_path = v;
  } else if (key == "reference_channel") {
    reference_channel = std::stoi(v);
  } else if (key == "exclude_channels") {
    exclude_channels = parse_int_list(v);
  } else if (key == "seed") {
    seed = std::stoull(v);
  } else if (key == "cache_dir") {
    cache_dir = v;
  } else if (key == "norm") {
    if (v == "corpus") norm = NormScope::kCorpus;
    else if (v == "utterance") norm = NormScope::kUtterance;
    else throw std::invalid_argument("norm must be corpus or utterance");
  } else if (key == "refiner.hidden_sizes") {
    refiner.hidden_sizes = parse_int_list(v);
  } else if (key == "refiner.dropout") {
    refiner.dropout_rate = std::stod(v);
  } else if (key == "refiner.l2") {
    refiner.l2_coefficient = std::stod(v);
  } else if (key == "refiner.logit_epsilon") {
    refiner.logit_epsilon = std::stod(v);
  } else if (key == "train.max_epochs") {
    train.max_epochs = std::stoi(v);
  } else if (key == "train.patience") {
    train.patience = std::stoi(v);
  } else if (key == "train.batch_size") {
    train.batch_size = std::stoi(v);
  } else if (key == "train.learning_rate") {
    train.learning_rate = std::stod(v);
  } else if (key == "train.valid_fraction") {
    valid_fraction = std::stod(v);
  } else {
    throw std::invalid_argument("unknown configuration key: " + key);
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key=value");
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::map<std::string, std::string> RunConfig::describe() const {
  const TdoaGrid grid = em.grid.value_or(TdoaGrid::for_window(stft.window_size));
  std::map<std::string, std::string> d;
  d["window_size"] = std::to_string(stft.window_size);
  d["hop_size"] = std::to_string(stft.hop_size);
  d["em.sources"] = std::to_string(em.n_sources);
  d["em.iterations"] = std::to_string(em.n_iters);
  d["em.pool_all_pairs"] = em.pool_all_pairs ? "true" : "false";
  d["em.grid_half_width"] = em.grid ? num(grid.half_width) : "auto";
  d["em.grid_step"] = num(grid.step);
  d["em.variance_floor"] = num(em.variance_floor);
  d["em.target"] = em.target_override ? std::to_string(*em.target_override) : "auto";
  d["mvdr.diagonal_loading"] = num(mvdr.diagonal_loading);
  d["mvdr.lambda_threshold"] = num(mvdr.lambda_threshold);
  d["mode"] = mode_name(mode);
  d["model"] = model_path;
  d["reference_channel"] = std::to_string(reference_channel);
  d["exclude_channels"] = join(exclude_channels);
  d["seed"] = std::to_string(seed);
  d["cache_dir"] = cache_dir;
  d["norm"] = norm == NormScope::kCorpus ? "corpus" : "utterance";
  d["refiner.hidden_sizes"] = join(refiner.hidden_sizes);
  d["refiner.dropout"] = num(refiner.dropout_rate);
  d["refiner.l2"] = num(refiner.l2_coefficient);
  d["refiner.logit_epsilon"] = num(refiner.logit_epsilon);
  d["train.max_epochs"] = std::to_string(train.max_epochs);
  d["train.patience"] = std::to_string(train.patience);
  d["train.batch_size"] = std::to_string(train.batch_size);
  d["train.learning_rate"] = num(train.learning_rate);
  d["train.valid_fraction"] = num(valid_fraction);
  return d;
}

std::string RunConfig::fingerprint() const {
  std::ostringstream out;
  for (const auto& [k, v] : describe()) out << k << '=' << v << ';';
  return out.str();
}

void RunConfig::validate() const {
  stft.validate();
  if (reference_channel < 0) throw std::invalid_argument("reference channel must be >= 0");
  if (em.n_sources < 1 || em.n_iters < 1) throw std::invalid_argument("EM needs >= 1 source and iteration");
  if (valid_fraction <= 0.0 || valid_fraction >= 1.0) throw std::invalid_argument("valid_fraction must be in (0,1)");
}

void RunLog::stage(const std::string& name, double seconds) {
  std::ostringstream out;
  out << "stage " << name << ' ' << std::fixed << std::setprecision(4) << seconds << "s";
  lines_.push_back(out.str());
}

void RunLog::note(const std::string& line) { lines_.push_back(line); }

void RunLog::write(std::ostream& out) const {
  for (const auto& l : lines_) out << l << '\n';
}

Mask spatial_mask(const AudioClip& mixture, const Spectrogram& spec, const RunConfig& cfg, RunLog* log) {
  // Only the settings that affect EM enter the key.
  std::ostringstream key_text;
  const auto d = cfg.describe();
  for (const char* k : {"window_size", "hop_size", "em.sources", "em.iterations", "em.pool_all_pairs",
                        "em.grid_half_width", "em.grid_step", "em.variance_floor", "em.target"})
    key_text << k << '=' << d.at(k) << ';';

  std::filesystem::path cache_file;
  if (!cfg.cache_dir.empty()) {
    std::uint64_t h = fnv1a(key_text.str().data(), key_text.str().size());
    for (const auto& ch : mixture.samples) h = fnv1a(ch.data(), ch.size() * sizeof(double), h);
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    cache_file = std::filesystem::path(cfg.cache_dir) / (std::string(hex) + ".mask");
    if (std::filesystem::exists(cache_file)) {
      MaskFile cached = read_mask(cache_file.string());
      if (cached.mask.rows() == spec.freq_count() && cached.mask.cols() == spec.frame_count()) {
        if (log) log->note("spatial mask loaded from cache " + cache_file.string());
        return cached.mask;
      }
    }
  }

  const auto start = Clock::now();
  EmResult em = run_em(spec, cfg.em);
  if (log) {
    log->stage("em", seconds_since(start));
    std::ostringstream note;
    note << "em target source " << em.target << ", tdoa " << em.params.tdoa[em.target][0] << ", final loglik "
         << std::setprecision(12) << em.trace.log_likelihood.back();
    log->note(note.str());
  }
  Mask mask = em.target_mask();
  if (!cache_file.empty()) {
    std::filesystem::create_directories(cache_file.parent_path());
    write_mask(cache_file.string(), {mask, spec.window_size, spec.hop_size});
  }
  return mask;
}

std::vector<Mask> refine_channels(const Spectrogram& spec, const Mask& spatial, const RefinerParams& model,
                                  NormScope norm) {
  if (model.config.freq_count != spec.freq_count())
    throw std::invalid_argument("refiner model frequency count does not match the STFT");
  const Eigen::MatrixXd logit = logit_transform(spatial, model.config.logit_epsilon);
  std::optional<NormStats> stats;
  if (norm == NormScope::kCorpus && !model.norm.empty()) stats = model.norm;
  std::vector<Mask> out;
  for (int c = 0; c < spec.channel_count(); ++c) {
    const FeatureMatrix feats = to_features(spec, c, stats);
    out.push_back(forward({feats.values, logit}, model, Mode::kInfer));
  }
  return out;
}

MaskedBeamformResult beamform_with_masks(const Spectrogram& spec, const MaskSet& masks, FusionMode mode,
                                         int reference_channel, const MvdrOptions& mvdr) {
  const FusedMasks fused = fuse(masks, mode);
  const SpatialCovariance speech = estimate_covariance(spec, fused.speech, CovarianceKind::kSpeech);
  const SpatialCovariance noise = estimate_covariance(spec, fused.noise, CovarianceKind::kNoise);
  MaskedBeamformResult res;
  res.weights = mvdr_weights(noise, speech, reference_channel, mvdr);
  res.spec = apply_beamformer(spec, res.weights, fused.post);
  return res;
}

EnhanceResult enhance(const AudioClip& mixture, const RunConfig& cfg, const RefinerParams* model, RunLog* log) {
  cfg.validate();
  mixture.validate();
  const int m = mixture.channel_count();
  if (cfg.reference_channel >= m)
    throw std::invalid_argument("reference channel " + std::to_string(cfg.reference_channel) +
                                " does not exist in a " + std::to_string(m) + "-channel input");
  for (int c : cfg.exclude_channels)
    if (c < 0 || c >= m) throw std::invalid_argument("excluded channel " + std::to_string(c) + " does not exist");
  const bool needs_model = cfg.mode == SystemMode::kLstm || cfg.mode == SystemMode::kMesslLstm;
  if (needs_model && !model) throw std::invalid_argument("mode " + mode_name(cfg.mode) + " needs a refiner model");

  EnhanceResult res;
  if (log) log->note("mode " + mode_name(cfg.mode) + ", " + std::to_string(m) + " channels, reference " +
                     std::to_string(cfg.reference_channel));
  if (cfg.mode == SystemMode::kNoisy) {
    const auto begin = Clock::now();
    res.output = mixture.channel(cfg.reference_channel);
    res.spec = analyze(res.output, cfg.stft);
    if (log) log->stage("passthrough", seconds_since(begin));
    return res;
  }

  auto start = Clock::now();
  const Spectrogram spec = analyze(mixture, cfg.stft);
  if (log) log->stage("stft", seconds_since(start));

  if (cfg.mode == SystemMode::kDas) {
    const TdoaGrid grid = cfg.em.grid.value_or(TdoaGrid::for_window(cfg.stft.window_size));
    start = Clock::now();
    const std::vector<double> delays = gcc_phat_delays(spec, cfg.reference_channel, grid.half_width, grid.step);
    std::vector<double> weights(m, 1.0);
    for (int c : cfg.exclude_channels) weights[c] = 0.0;
    res.spec = delay_and_sum(spec, delays, weights);
    if (log) log->stage("delay_and_sum", seconds_since(start));
  } else {
    const Mask spatial = spatial_mask(mixture, spec, cfg, log);
    res.spatial_mask = spatial;
    MaskSet set;
    set.spatial = spatial;
    FusionMode fusion = FusionMode::kMesslLstm;
    if (needs_model) {
      start = Clock::now();
      res.cleaned_masks = refine_channels(spec, spatial, *model, cfg.norm);
      if (log) log->stage("refiner", seconds_since(start));
      set.cleaned = res.cleaned_masks;
      set = set.without_channels(cfg.exclude_channels);
      if (cfg.mode == SystemMode::kLstm) {
        set.spatial.reset();
        fusion = FusionMode::kLstmOnly;
      }
    }
    start = Clock::now();
    MaskedBeamformResult bf = beamform_with_masks(spec, set, fusion, cfg.reference_channel, cfg.mvdr);
    res.spec = std::move(bf.spec);
    res.degenerate_bins = bf.weights.degenerate_count();
    if (log) {
      log->stage("mvdr", seconds_since(start));
      log->note("degenerate bins " + std::to_string(res.degenerate_bins));
    }
  }
  start = Clock::now();
  res.output = synthesize(res.spec, cfg.stft);
  if (log) log->stage("istft", seconds_since(start));
  return res;
}

TrainingBatch make_training_batch(const Spectrogram& noisy, const Spectrogram& clean, int channel,
                                  const Mask& spatial, const NormStats& stats, double logit_eps) {
  if (noisy.freq_count() != clean.freq_count() || noisy.frame_count() != clean.frame_count())
    throw std::invalid_argument("noisy and clean spectrograms differ in shape");
  TrainingBatch b;
  b.features = to_features(noisy, channel, stats.empty() ? std::nullopt : std::optional<NormStats>(stats)).values;
  b.logit_mask = logit_transform(spatial, logit_eps);
  b.target = ideal_amplitude_mask(clean[channel], noisy[channel]);
  return b;
}

TrainingData prepare_training_data(const std::vector<TrainingUtterance>& utterances, const RunConfig& cfg,
                                   RunLog* log) {
  cfg.validate();
  if (utterances.size() < 2) throw std::invalid_argument("training needs at least two utterances");
  const int n = static_cast<int>(utterances.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_valid = std::clamp(static_cast<int>(std::ceil(cfg.valid_fraction * n)), 1, n - 1);
  std::vector<bool> is_valid(n, false);
  for (int i = 0; i < n_valid; ++i) is_valid[order[i]] = true;

  struct Prepared {
    Spectrogram noisy, clean;
    Mask spatial;
  };
  std::vector<Prepared> prepared;
  NormAccumulator acc;
  for (int u = 0; u < n; ++u) {
    const auto& utt = utterances[u];
    if (utt.noisy.channel_count() != utt.clean.channel_count() || utt.noisy.length() != utt.clean.length())
      throw std::invalid_argument("utterance " + std::to_string(u) + ": noisy and clean audio differ in shape");
    Prepared p;
    p.noisy = analyze(utt.noisy, cfg.stft);
    p.clean = analyze(utt.clean, cfg.stft);
    p.spatial = spatial_mask(utt.noisy, p.noisy, cfg, nullptr);
    if (!is_valid[u] && cfg.norm == NormScope::kCorpus)
      for (int c = 0; c < p.noisy.channel_count(); ++c) acc.add(log_magnitude_db(p.noisy, c));
    prepared.push_back(std::move(p));
  }

  TrainingData data;
  if (cfg.norm == NormScope::kCorpus) data.norm = acc.finish();
  for (int u = 0; u < n; ++u) {
    const auto& p = prepared[u];
    auto& dest = is_valid[u] ? data.valid : data.train;
    for (int c = 0; c < p.noisy.channel_count(); ++c)
      dest.push_back(make_training_batch(p.noisy, p.clean, c, p.spatial, data.norm, cfg.refiner.logit_epsilon));
    if (is_valid[u]) data.valid_utterances.push_back(u);
  }
  if (log)
    log->note("training sequences " + std::to_string(data.train.size()) + ", validation sequences " +
              std::to_string(data.valid.size()));
  return data;
}

std::vector<ManifestRecord> read_manifest(const std::string& path, bool require_clean, bool check_files) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return (fp.is_relative() && !base.empty() ? base / fp : fp).string();
  };
  std::vector<ManifestRecord> out;
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    for (std::string f; std::getline(ls, f, '\t');) fields.push_back(trim(f));
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    if (fields.empty() || fields[0].empty()) throw std::runtime_error(where + "missing audio path");
    if (fields.size() > 3) throw std::runtime_error(where + "too many fields (expected path, clean path, group)");
    ManifestRecord r;
    r.line = line_no;
    r.path = resolve(fields[0]);
    if (fields.size() > 1 && !fields[1].empty()) r.clean_path = resolve(fields[1]);
    if (fields.size() > 2) r.group = fields[2];
    if (require_clean && r.clean_path.empty()) throw std::runtime_error(where + "missing clean path");
    if (check_files) {
      if (!std::filesystem::exists(r.path)) throw std::runtime_error(where + "file not found: " + r.path);
      if (!r.clean_path.empty() && !std::filesystem::exists(r.clean_path))
        throw std::runtime_error(where + "file not found: " + r.clean_path);
    }
    out.push_back(std::move(r));
  }
  if (out.empty()) throw std::runtime_error("manifest has no records: " + path);
  return out;
}

std::string file_stem(const std::string& path) { return std::filesystem::path(path).stem().string(); }

}  // namespace mcse
