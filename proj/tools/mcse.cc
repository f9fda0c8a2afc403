// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// mcse: command-line front end for the enhancement toolkit.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "mcse/metrics.h"
#include "mcse/pipeline.h"
#include "mcse/reference.h"
#include "mcse/refiner.h"
#include "mcse/simulator.h"
#include "mcse/wav.h"

namespace fs = std::filesystem;
using namespace mcse;

namespace {

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string mode;
  std::string model;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("-c,--config", opts.config_file, "key=value configuration file");
  cmd->add_option("-s,--set", opts.overrides, "override one setting, key=value (repeatable)");
  cmd->add_option("--mode", opts.mode, "noisy | messl | das | lstm | messl+lstm");
  cmd->add_option("--model", opts.model, "refiner model file");
}

RunConfig build_config(const CommonOptions& opts) {
  RunConfig cfg;
  if (!opts.config_file.empty()) cfg.load_file(opts.config_file);
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!opts.mode.empty()) cfg.set("mode", opts.mode);
  if (!opts.model.empty()) cfg.set("model", opts.model);
  cfg.train.seed = cfg.seed;
  cfg.refiner.freq_count = cfg.stft.freq_count();
  cfg.validate();
  return cfg;
}

WavFormat parse_format(const std::string& name) {
  if (name == "float") return WavFormat::kFloat32;
  if (name == "pcm16") return WavFormat::kPcm16;
  throw std::invalid_argument("unknown WAV format '" + name + "' (float, pcm16)");
}

std::string fixed(double v, int digits = 3) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

// ---------------------------------------------------------------- describe

int cmd_describe(const CommonOptions& opts) {
  const RunConfig cfg = build_config(opts);
  for (const auto& [k, v] : cfg.describe()) std::cout << k << " = " << v << '\n';
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
  std::string out_dir;
  int count = 20;
  std::uint64_t seed = 1;
  int channels = 6;
  std::size_t length = 32000;
  int sample_rate = 16000;
  double snr_min = 0.0;
  double snr_max = 10.0;
  double interferer_db = 0.0;
  bool no_interferer = false;
  std::string format = "float";
  std::string prefix = "utt";
};

int cmd_simulate(const SimulateOptions& o) {
  if (o.count < 1) throw std::invalid_argument("--count must be positive");
  if (o.snr_max < o.snr_min) throw std::invalid_argument("--snr-max is below --snr-min");
  const WavFormat format = parse_format(o.format);
  const fs::path root(o.out_dir);
  for (const char* sub : {"mix", "clean", "ref", "interf", "noise"}) fs::create_directories(root / sub);

  std::ofstream manifest(root / "manifest.txt");
  std::ofstream tsv(root / "train.tsv");
  manifest << "# stem\tsnr_db\tsource\tdelays\tgains\n";
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> snr_dist(o.snr_min, o.snr_max);

  for (int i = 0; i < o.count; ++i) {
    SceneConfig sc;
    sc.channels = o.channels;
    sc.length = o.length;
    sc.sample_rate = o.sample_rate;
    sc.snr_db = o.snr_max > o.snr_min ? snr_dist(rng) : o.snr_min;
    sc.interferer_level_db = o.interferer_db;
    sc.with_interferer = !o.no_interferer;
    const Scene scene = make_scene(sc, o.seed * 1000003ULL + static_cast<std::uint64_t>(i));

    char stem_buf[64];
    std::snprintf(stem_buf, sizeof stem_buf, "%s%04d", o.prefix.c_str(), i);
    const std::string stem = stem_buf;
    const std::string file = stem + ".wav";
    const int bucket = static_cast<int>(std::floor(sc.snr_db / 5.0)) * 5;
    const std::string group = "snr" + std::to_string(bucket);

    write_wav((root / "mix" / file).string(), scene.truth.mixture, format);
    write_wav((root / "clean" / file).string(), scene.truth.images[0], format);
    write_wav((root / "noise" / file).string(), scene.truth.noise, format);
    if (scene.truth.images.size() > 1) write_wav((root / "interf" / file).string(), scene.truth.images[1], format);
    // Single-channel evaluation reference at the default reference channel.
    RunConfig defaults;
    const int ref = std::min(defaults.reference_channel, o.channels - 1);
    write_wav((root / "ref" / file).string(), scene.truth.images[0].channel(ref), format);

    for (std::size_t s = 0; s < scene.sources.size(); ++s) {
      manifest << stem << '\t' << fixed(scene.truth.snr_db, 4) << '\t' << (s == 0 ? "target" : "interferer") << '\t';
      const auto& src = scene.sources[s];
      for (std::size_t c = 0; c < src.delays.size(); ++c) manifest << (c ? "," : "") << fixed(src.delays[c], 6);
      manifest << '\t';
      for (std::size_t c = 0; c < src.gains.size(); ++c) manifest << (c ? "," : "") << fixed(src.gains[c], 6);
      manifest << '\n';
    }
    tsv << "mix/" << file << "\tclean/" << file << '\t' << group << '\n';
  }
  std::cout << "wrote " << o.count << " mixtures to " << root.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- enhance

struct EnhanceOptions {
  std::vector<std::string> inputs;
  std::string manifest;
  std::string out_dir = ".";
  std::string log_file;
  std::string format = "float";
  int jobs = 1;
};

int cmd_enhance(const CommonOptions& common, const EnhanceOptions& o) {
  const RunConfig cfg = build_config(common);
  const WavFormat format = parse_format(o.format);
  std::vector<std::string> inputs = o.inputs;
  if (!o.manifest.empty())
    for (const auto& r : read_manifest(o.manifest)) inputs.push_back(r.path);
  if (inputs.empty()) throw std::invalid_argument("no input files (positional or --manifest)");

  std::optional<RefinerParams> model;
  if (cfg.mode == SystemMode::kLstm || cfg.mode == SystemMode::kMesslLstm) {
    if (cfg.model_path.empty()) throw std::invalid_argument("mode " + mode_name(cfg.mode) + " needs --model");
    if (!fs::exists(cfg.model_path)) throw std::runtime_error("model file not found: " + cfg.model_path);
    model = load_refiner(cfg.model_path);
  }
  fs::create_directories(o.out_dir);

  std::vector<std::string> logs(inputs.size());
  std::vector<std::string> errors(inputs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < inputs.size(); i = next++) {
      try {
        RunLog log;
        log.note("input " + inputs[i]);
        const AudioClip mixture = read_wav(inputs[i]);
        const EnhanceResult res = enhance(mixture, cfg, model ? &*model : nullptr, &log);
        const fs::path out = fs::path(o.out_dir) / (file_stem(inputs[i]) + ".wav");
        write_wav(out.string(), res.output, format);
        log.note("output " + out.string());
        std::ostringstream text;
        log.write(text);
        logs[i] = text.str();
      } catch (const std::exception& e) {
        errors[i] = inputs[i] + ": " + e.what();
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(o.jobs, static_cast<int>(inputs.size())));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::ofstream log_out;
  if (!o.log_file.empty()) {
    log_out.open(o.log_file);
    log_out << "# config " << cfg.fingerprint() << '\n';
  }
  int failures = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!errors[i].empty()) {
      std::cerr << "error: " << errors[i] << '\n';
      ++failures;
      continue;
    }
    (log_out.is_open() ? static_cast<std::ostream&>(log_out) : std::cerr) << logs[i];
  }
  std::cout << "enhanced " << inputs.size() - failures << " of " << inputs.size() << " files with mode "
            << mode_name(cfg.mode) << '\n';
  return failures == 0 ? 0 : 1;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
  std::string manifest;
  std::string model_out = "model.mcse";
  std::string checkpoint;
  std::string curve;
  bool resume = false;
};

int cmd_train(const CommonOptions& common, const TrainOptions& o) {
  const RunConfig cfg = build_config(common);
  const auto records = read_manifest(o.manifest, /*require_clean=*/true);
  std::vector<TrainingUtterance> utts;
  for (const auto& r : records) utts.push_back({read_wav(r.path), read_wav(r.clean_path)});
  std::cerr << "preparing " << utts.size() << " utterances\n";
  RunLog log;
  const TrainingData data = prepare_training_data(utts, cfg, &log);
  log.write(std::cerr);

  TrainingState state;
  if (o.resume && !o.checkpoint.empty() && fs::exists(o.checkpoint)) {
    state = load_checkpoint(o.checkpoint);
    if (state.params.config.freq_count != cfg.stft.freq_count())
      throw std::runtime_error("checkpoint does not match the STFT configuration");
    std::cerr << "resuming from epoch " << state.epoch << '\n';
  } else {
    RefinerParams init = RefinerParams::initialize(cfg.refiner, cfg.seed);
    init.norm = data.norm;
    state = start_training(init, data.valid, cfg.train);
  }
  auto report = [&](const TrainingState& s) {
    const EpochRecord& r = s.history.back();
    std::cerr << "epoch " << r.epoch << " train_loss " << fixed(r.train_loss, 5) << " valid_bce "
              << fixed(r.valid_bce, 5) << (s.bad_epochs == 0 ? " *" : "") << '\n';
    if (!o.checkpoint.empty()) save_checkpoint(o.checkpoint, s);
  };
  if (state.history.size() == 1) std::cerr << "epoch 0 valid_bce " << fixed(state.history[0].valid_bce, 5) << '\n';
  train(state, data.train, data.valid, cfg.train, report);

  RefinerParams best = state.best;
  best.norm = data.norm;
  save_refiner(o.model_out, best);
  if (!o.curve.empty()) {
    std::ofstream curve(o.curve);
    curve << "epoch,train_loss,valid_bce\n" << std::setprecision(10);
    for (const auto& r : state.history) curve << r.epoch << ',' << r.train_loss << ',' << r.valid_bce << '\n';
  }
  std::cout << "initial valid_bce " << fixed(state.history.front().valid_bce, 5) << ", best " << fixed(state.best_valid, 5)
            << " after " << state.epoch << " epochs; model written to " << o.model_out << '\n';
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
  std::string enhanced_dir;
  std::string reference_dir;
  std::string manifest;
  std::string table;
  std::string csv;
  std::string summary;
  std::size_t seg_frame = 512;
};

std::map<std::string, fs::path> wav_stems(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") out[e.path().stem().string()] = e.path();
  return out;
}

int cmd_eval(const EvalOptions& o) {
  const auto enhanced = wav_stems(o.enhanced_dir);
  const auto reference = wav_stems(o.reference_dir);
  std::map<std::string, std::string> groups;
  if (!o.manifest.empty())
    for (const auto& r : read_manifest(o.manifest, false, false)) groups[file_stem(r.path)] = r.group;

  std::vector<std::string> unpaired;
  for (const auto& [stem, p] : enhanced)
    if (!reference.count(stem)) unpaired.push_back(p.string() + " (no reference)");
  for (const auto& [stem, p] : reference)
    if (!enhanced.count(stem)) unpaired.push_back(p.string() + " (no enhanced file)");
  for (const auto& u : unpaired) std::cerr << "unpaired: " << u << '\n';

  EvalReport report;
  for (const auto& [stem, path] : enhanced) {
    const auto ref_it = reference.find(stem);
    if (ref_it == reference.end()) continue;
    const AudioClip est = read_wav(path.string());
    const AudioClip ref = read_wav(ref_it->second.string());
    if (est.channel_count() != 1 || ref.channel_count() != 1)
      throw std::runtime_error(stem + ": evaluation needs single-channel files");
    if (est.length() != ref.length())
      throw std::runtime_error(stem + ": enhanced and reference lengths differ (" + std::to_string(est.length()) +
                               " vs " + std::to_string(ref.length()) + ")");
    EvalRow row;
    row.name = stem;
    row.group = groups.count(stem) ? groups[stem] : "";
    row.si_sdr_db = si_sdr(est.samples[0], ref.samples[0]);
    row.seg_snr_db = segmental_snr(est.samples[0], ref.samples[0], o.seg_frame);
    report.rows.push_back(row);
  }
  if (report.rows.empty()) throw std::runtime_error("no file stems in common between the two directories");

  report.write_table(std::cout);
  auto write_to = [](const std::string& path, auto&& fn) {
    if (path.empty()) return;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    fn(out);
  };
  write_to(o.table, [&](std::ostream& out) { report.write_table(out); });
  write_to(o.csv, [&](std::ostream& out) { report.write_csv(out); });
  write_to(o.summary, [&](std::ostream& out) { report.write_summary_csv(out); });
  return unpaired.empty() ? 0 : 2;
}

// ---------------------------------------------------------------- make-reference

struct ReferenceOptions {
  std::string array_wav;
  std::string close_wav;
  std::string out;
  int close_channel = 0;
  int reference_channel = 0;
  std::string format = "float";
};

int cmd_make_reference(const CommonOptions& common, const ReferenceOptions& o) {
  const RunConfig cfg = build_config(common);
  const AudioClip array = read_wav(o.array_wav);
  const AudioClip close_all = read_wav(o.close_wav);
  if (o.close_channel < 0 || o.close_channel >= close_all.channel_count())
    throw std::invalid_argument("close-mic channel out of range");
  const AudioClip close = close_all.channel(o.close_channel);
  if (close.length() != array.length()) throw std::invalid_argument("close-mic and array recordings differ in length");
  ReferenceConfig rc;
  rc.reference_channel = o.reference_channel;
  rc.mvdr = cfg.mvdr;
  const ReferenceResult res = build_reference(analyze(array, cfg.stft), analyze(close, cfg.stft), cfg.stft, rc);
  write_wav(o.out, res.clip, parse_format(o.format));
  std::cout << "reference written to " << o.out << " (degenerate bins " << res.weights.degenerate_count() << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mcse: multichannel mask-based speech enhancement"};
  app.require_subcommand(1);

  CommonOptions common;

  auto* describe = app.add_subcommand("describe", "print every setting with its current value");
  add_common(describe, common);

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "write synthetic mixtures with ground truth");
  simulate->add_option("-o,--out", sim.out_dir, "output directory")->required();
  simulate->add_option("-n,--count", sim.count, "number of mixtures");
  simulate->add_option("--seed", sim.seed, "random seed");
  simulate->add_option("--channels", sim.channels, "microphones");
  simulate->add_option("--length", sim.length, "samples per mixture");
  simulate->add_option("--sample-rate", sim.sample_rate, "Hz");
  simulate->add_option("--snr-min", sim.snr_min, "dB");
  simulate->add_option("--snr-max", sim.snr_max, "dB");
  simulate->add_option("--interferer-db", sim.interferer_db, "interferer level relative to the target, dB");
  simulate->add_flag("--no-interferer", sim.no_interferer, "target and noise only");
  simulate->add_option("--format", sim.format, "float | pcm16");
  simulate->add_option("--prefix", sim.prefix, "file stem prefix");

  EnhanceOptions enh;
  auto* enhance_cmd = app.add_subcommand("enhance", "run an enhancement system on multichannel WAV files");
  add_common(enhance_cmd, common);
  enhance_cmd->add_option("inputs", enh.inputs, "input WAV files");
  enhance_cmd->add_option("-m,--manifest", enh.manifest, "manifest of inputs");
  enhance_cmd->add_option("-o,--out-dir", enh.out_dir, "output directory");
  enhance_cmd->add_option("--log", enh.log_file, "run log file (default stderr)");
  enhance_cmd->add_option("--format", enh.format, "float | pcm16");
  enhance_cmd->add_option("-j,--jobs", enh.jobs, "parallel utterances");

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "train the mask refiner");
  add_common(train_cmd, common);
  train_cmd->add_option("-m,--manifest", tr.manifest, "manifest of noisy/clean pairs")->required();
  train_cmd->add_option("-o,--out", tr.model_out, "model file to write");
  train_cmd->add_option("--checkpoint", tr.checkpoint, "checkpoint file, rewritten after every epoch");
  train_cmd->add_flag("--resume", tr.resume, "continue from --checkpoint if it exists");
  train_cmd->add_option("--curve", tr.curve, "loss curve CSV");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "score enhanced files against references");
  eval_cmd->add_option("enhanced", ev.enhanced_dir, "directory of enhanced WAV files")->required();
  eval_cmd->add_option("reference", ev.reference_dir, "directory of reference WAV files")->required();
  eval_cmd->add_option("-m,--manifest", ev.manifest, "manifest providing group tags by stem");
  eval_cmd->add_option("--table", ev.table, "aligned text table");
  eval_cmd->add_option("--csv", ev.csv, "per-utterance CSV");
  eval_cmd->add_option("--summary", ev.summary, "per-group CSV");
  eval_cmd->add_option("--seg-frame", ev.seg_frame, "segmental SNR frame length");

  ReferenceOptions ro;
  auto* ref_cmd = app.add_subcommand("make-reference", "build a reference signal from a close mic and the array");
  add_common(ref_cmd, common);
  ref_cmd->add_option("--array", ro.array_wav, "array recording")->required();
  ref_cmd->add_option("--close", ro.close_wav, "close-talking recording")->required();
  ref_cmd->add_option("-o,--out", ro.out, "reference WAV")->required();
  ref_cmd->add_option("--close-channel", ro.close_channel, "channel of the close-mic file");
  ref_cmd->add_option("--reference-channel", ro.reference_channel, "array channel the reference is aligned to");
  ref_cmd->add_option("--format", ro.format, "float | pcm16");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*describe) return cmd_describe(common);
    if (*simulate) return cmd_simulate(sim);
    if (*enhance_cmd) return cmd_enhance(common, enh);
    if (*train_cmd) return cmd_train(common, tr);
    if (*eval_cmd) return cmd_eval(ev);
    if (*ref_cmd) return cmd_make_reference(common, ro);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
