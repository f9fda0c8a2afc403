// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mcse/pipeline.h"
#include "mcse/simulator.h"
#include "mcse/wav.h"
#include "test_util.h"

using namespace mcse;
namespace fs = std::filesystem;

namespace {

RunConfig fast_config() {
  RunConfig cfg;
  cfg.set("window_size", "256");
  cfg.set("em.iterations", "4");
  return cfg;
}

Scene small_scene(std::uint64_t seed) {
  SceneConfig sc;
  sc.length = 8000;
  sc.snr_db = 5.0;
  return make_scene(sc, seed);
}

}  // namespace

TEST_CASE("config: set, describe, unknown keys") {
  RunConfig cfg;
  CHECK(cfg.reference_channel == 4);
  CHECK(cfg.stft.window_size == 1024);
  cfg.set("window_size", "512");
  CHECK(cfg.stft.window_size == 512);
  CHECK(cfg.stft.hop_size == 128);
  cfg.set("mode", "das");
  CHECK(cfg.mode == SystemMode::kDas);
  cfg.set("exclude_channels", "1, 2");
  CHECK(cfg.exclude_channels == std::vector<int>{1, 2});
  cfg.set("refiner.hidden_sizes", "16,8");
  CHECK(cfg.refiner.hidden_sizes == std::vector<int>{16, 8});
  auto d = cfg.describe();
  CHECK(d.at("mode") == "das");
  CHECK(d.at("window_size") == "512");
  CHECK_THROWS_AS(cfg.set("no_such_key", "1"), std::invalid_argument);
  CHECK_THROWS(cfg.set("window_size", "abc"));
  CHECK_THROWS(cfg.set("mode", "magic"));
  for (SystemMode m : all_modes()) CHECK(parse_mode(mode_name(m)) == m);
}

TEST_CASE("config: file loading reports the failing line") {
  auto dir = testing::scratch_dir("pipeline_cfg");
  const std::string path = (dir / "run.cfg").string();
  std::ofstream(path) << "# comment\nwindow_size = 256\n\nmode = messl  # trailing\n";
  RunConfig cfg;
  cfg.load_file(path);
  CHECK(cfg.stft.window_size == 256);
  CHECK(cfg.mode == SystemMode::kMessl);
  std::ofstream(path) << "window_size = 256\nbogus = 3\n";
  CHECK_THROWS_WITH(cfg.load_file(path), doctest::Contains("run.cfg:2"));
  CHECK_THROWS(cfg.load_file((dir / "missing.cfg").string()));
}

TEST_CASE("fingerprint changes with relevant settings") {
  RunConfig a, b;
  CHECK(a.fingerprint() == b.fingerprint());
  b.set("em.iterations", "7");
  CHECK(a.fingerprint() != b.fingerprint());
}

TEST_CASE("manifest parsing") {
  auto dir = testing::scratch_dir("pipeline_manifest");
  AudioClip c(1, 10);
  write_wav((dir / "a.wav").string(), c);
  write_wav((dir / "b.wav").string(), c);
  const std::string path = (dir / "list.tsv").string();
  std::ofstream(path) << "# header\na.wav\tb.wav\tsnr0\n\n" << (dir / "b.wav").string() << "\n";
  auto recs = read_manifest(path);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].path == (dir / "a.wav").string());
  CHECK(recs[0].clean_path == (dir / "b.wav").string());
  CHECK(recs[0].group == "snr0");
  CHECK(recs[0].line == 2);
  CHECK(recs[1].clean_path.empty());
  CHECK_THROWS_WITH(read_manifest(path, true), doctest::Contains("list.tsv:4"));

  std::ofstream(path) << "a.wav\tb.wav\n" << "gone.wav\tb.wav\n";
  CHECK_THROWS_WITH(read_manifest(path), doctest::Contains("gone.wav"));
  CHECK_THROWS_WITH(read_manifest(path), doctest::Contains(":2:"));
  CHECK_NOTHROW(read_manifest(path, false, false));
  std::ofstream(path) << "a.wav\tb.wav\tg\textra\n";
  CHECK_THROWS_WITH(read_manifest(path), doctest::Contains(":1:"));
  std::ofstream(path) << "# nothing\n";
  CHECK_THROWS(read_manifest(path));
  CHECK(file_stem("/x/y/utt_01.wav") == "utt_01");
}

TEST_CASE("noisy mode passes the reference channel through") {
  Scene s = small_scene(1);
  RunConfig cfg = fast_config();
  cfg.mode = SystemMode::kNoisy;
  for (int ref : {0, 4}) {
    cfg.reference_channel = ref;
    EnhanceResult r = enhance(s.truth.mixture, cfg);
    REQUIRE(r.output.channel_count() == 1);
    CHECK(r.output.samples[0] == s.truth.mixture.samples[ref]);
  }
}

TEST_CASE("enhance validates its configuration") {
  Scene s = small_scene(2);
  RunConfig cfg = fast_config();
  cfg.mode = SystemMode::kLstm;
  CHECK_THROWS(enhance(s.truth.mixture, cfg));
  cfg.mode = SystemMode::kMessl;
  cfg.reference_channel = 6;
  CHECK_THROWS(enhance(s.truth.mixture, cfg));
  cfg.reference_channel = 0;
  cfg.exclude_channels = {7};
  CHECK_THROWS(enhance(s.truth.mixture, cfg));
  RefinerConfig rc;
  rc.freq_count = 65;
  rc.hidden_sizes = {4};
  RefinerParams wrong = RefinerParams::initialize(rc, 1);
  cfg = fast_config();
  cfg.mode = SystemMode::kMesslLstm;
  CHECK_THROWS(enhance(s.truth.mixture, cfg, &wrong));
}

TEST_CASE("every mode runs and is deterministic") {
  Scene s = small_scene(3);
  RunConfig cfg = fast_config();
  RefinerConfig rc;
  rc.freq_count = cfg.stft.freq_count();
  rc.hidden_sizes = {4};
  RefinerParams model = RefinerParams::initialize(rc, 3);
  for (SystemMode m : all_modes()) {
    cfg.mode = m;
    RunLog log;
    EnhanceResult a = enhance(s.truth.mixture, cfg, &model, &log);
    EnhanceResult b = enhance(s.truth.mixture, cfg, &model);
    CHECK(a.output.samples == b.output.samples);
    CHECK(a.output.length() == s.truth.mixture.length());
    bool has_stage = false;
    for (const auto& l : log.lines()) has_stage = has_stage || l.rfind("stage ", 0) == 0;
    CHECK(has_stage);
    if (m == SystemMode::kLstm || m == SystemMode::kMesslLstm) CHECK(a.cleaned_masks.size() == 6);
  }
}

TEST_CASE("spatial mask cache returns the same mask") {
  auto dir = testing::scratch_dir("pipeline_cache");
  Scene s = small_scene(4);
  RunConfig cfg = fast_config();
  cfg.cache_dir = dir.string();
  Spectrogram spec = analyze(s.truth.mixture, cfg.stft);
  Mask a = spatial_mask(s.truth.mixture, spec, cfg);
  int files = 0;
  for (const auto& e : fs::directory_iterator(dir)) files += e.path().extension() == ".mask";
  CHECK(files == 1);
  Mask b = spatial_mask(s.truth.mixture, spec, cfg);
  CHECK(a == b);
  cfg.cache_dir.clear();
  CHECK(spatial_mask(s.truth.mixture, spec, cfg) == a);
  CHECK(is_valid_mask(a));
}

TEST_CASE("training data: split by utterance, one sequence per channel") {
  RunConfig cfg = fast_config();
  std::vector<TrainingUtterance> utts;
  for (std::uint64_t i = 0; i < 5; ++i) {
    Scene s = small_scene(10 + i);
    utts.push_back({s.truth.mixture, s.truth.images[0]});
  }
  TrainingData d = prepare_training_data(utts, cfg);
  CHECK(d.valid_utterances.size() == 1);
  CHECK(d.valid.size() == 6);
  CHECK(d.train.size() == 24);
  CHECK(d.norm.mean.size() == cfg.stft.freq_count());
  for (const auto& b : d.train) {
    CHECK(b.features.rows() == cfg.stft.freq_count());
    CHECK(b.target.cols() == b.features.cols());
    CHECK(is_valid_mask(b.target));
  }
  CHECK_THROWS(prepare_training_data({utts[0]}, cfg));
}
