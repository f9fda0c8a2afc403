// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Pass criterion numbers to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mcse/beamformer.h"
#include "mcse/fusion.h"
#include "mcse/metrics.h"
#include "mcse/pipeline.h"
#include "mcse/reference.h"
#include "mcse/refiner.h"
#include "mcse/simulator.h"
#include "mcse/spatial_clustering.h"
#include "mcse/stft.h"

using namespace mcse;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::vector<double> gaussian_signal(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(n);
  for (double& v : x) v = g(rng);
  return x;
}

Eigen::VectorXcd random_complex(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXcd v(n);
  for (int i = 0; i < n; ++i) v(i) = {g(rng), g(rng)};
  return v;
}

Eigen::MatrixXcd random_hermitian_pd(int m, std::mt19937_64& rng) {
  Eigen::MatrixXcd a(m, m);
  for (int j = 0; j < m; ++j) a.col(j) = random_complex(m, rng);
  return a * a.adjoint() + 0.1 * Eigen::MatrixXcd::Identity(m, m);
}

// 1. STFT round trip.
Outcome stft_round_trip() {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> len(4000, 20000);
  const int sizes[] = {256, 512, 1024};
  double worst = 0.0;
  const auto start = Clock::now();
  for (int i = 0; i < 100; ++i) {
    const StftConfig cfg = StftConfig::with_window(sizes[i % 3]);
    AudioClip x(1, static_cast<std::size_t>(len(rng)));
    x.samples[0] = gaussian_signal(x.length(), rng);
    const AudioClip y = synthesize(analyze(x, cfg), cfg);
    double err = 0.0, peak = 0.0;
    for (std::size_t n = cfg.window_size; n + cfg.window_size < x.length(); ++n) {
      err = std::max(err, std::abs(x.samples[0][n] - y.samples[0][n]));
      peak = std::max(peak, std::abs(x.samples[0][n]));
    }
    worst = std::max(worst, err / peak);
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  return {worst < 1e-6 && secs < 1.0,
          "max interior rel. error " + fmt("%.2e", worst) + " over 100 signals, " + fmt("%.3f", secs) + " s"};
}

// 2. EM monotonicity and TDOA recovery.
Outcome em_monotone() {
  const StftConfig stft = StftConfig::with_window(1024);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> snr(0.0, 10.0);
  double worst_drop = 0.0;
  for (int i = 0; i < 20; ++i) {
    SceneConfig sc;
    sc.length = 16000;
    sc.snr_db = snr(rng);
    const Scene scene = make_scene(sc, 200 + i);
    EmConfig cfg;
    const EmResult res = run_em(analyze(scene.truth.mixture, stft), cfg);
    const auto& ll = res.trace.log_likelihood;
    for (std::size_t k = 1; k < ll.size(); ++k) worst_drop = std::max(worst_drop, ll[k - 1] - ll[k]);
  }
  double worst_tdoa = 0.0;
  std::uniform_real_distribution<double> delay(-6.0, 6.0);
  for (int i = 0; i < 10; ++i) {
    SourceSpec src;
    src.dry = AudioClip(1, 16000);
    src.dry.samples[0] = speech_like(16000, 16000, rng);
    const double d = delay(rng);
    src.delays = {0.0, d};
    src.gains = {1.0, 1.0};
    EmConfig cfg;
    cfg.n_sources = 1;
    const EmResult res = run_em(analyze(delay_source(src), stft), cfg);
    // Pair (0,1) delay is d_0 - d_1.
    worst_tdoa = std::max(worst_tdoa, std::abs(res.params.tdoa[0][0] - (0.0 - d)));
  }
  return {worst_drop <= 1e-8 && worst_tdoa < 0.1,
          "largest log-likelihood drop " + fmt("%.2e", std::max(worst_drop, 0.0)) + " over 20 mixtures; worst TDOA error " +
              fmt("%.4f", worst_tdoa) + " samples over 10 noiseless sources"};
}

// 3. MVDR closed form.
Outcome mvdr_closed_form() {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int m = 2 + i % 7;
    const int ref = i % m;
    const Eigen::VectorXcd d = random_complex(m, rng);
    const Eigen::VectorXcd h =
        mvdr_vector(Eigen::MatrixXcd::Identity(m, m), 2.3 * d * d.adjoint(), ref);
    const Eigen::VectorXcd expect = d * std::conj(d(ref)) / d.squaredNorm();
    worst = std::max(worst, (h - expect).cwiseAbs().maxCoeff());
  }
  Eigen::MatrixXcd n(1, 1), s(1, 1);
  n << 0.7;
  s << 3.1;
  const Eigen::VectorXcd h1 = mvdr_vector(n, s, 0);
  const bool identity = h1(0) == Complex(1.0, 0.0);
  return {worst < 1e-10 && identity,
          "max |h - d conj(d_ref)/|d|^2| " + fmt("%.2e", worst) + " over 100 draws; M=1 filter " +
              (identity ? "exactly 1" : "not 1")};
}

// 4. Distortionless response.
Outcome distortionless() {
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int m = 2 + i % 7;
    const int ref = (3 * i) % m;
    const Eigen::VectorXcd d = random_complex(m, rng);
    const Eigen::MatrixXcd noise = random_hermitian_pd(m, rng);
    const Eigen::VectorXcd h = mvdr_vector(noise, 0.8 * d * d.adjoint(), ref, MvdrOptions{0.0, 1e-8});
    const Complex resp = h.adjoint() * d;
    worst = std::max(worst, std::abs(resp - d(ref)));
  }
  return {worst < 1e-8, "max |h^H d - d_ref| " + fmt("%.2e", worst) + " over 100 draws"};
}

// 5. Oracle-mask MVDR.
Outcome oracle_mask() {
  const auto start = Clock::now();
  const StftConfig stft = StftConfig::with_window(1024);
  const int ref = 4;
  double gain_sum = 0.0;
  for (int i = 0; i < 20; ++i) {
    SceneConfig sc;
    sc.length = 32000;
    sc.snr_db = 0.0;
    const Scene scene = make_scene(sc, 500 + i);
    const AudioClip& target = scene.truth.images[0];
    const Spectrogram y = analyze(scene.truth.mixture, stft);
    const Spectrogram s = analyze(target, stft);
    const Mask ia = ideal_amplitude_mask(s[ref], y[ref]);
    const BeamformerWeights w = mvdr_weights(estimate_covariance(y, ia, CovarianceKind::kNoise),
                                             estimate_covariance(y, ia, CovarianceKind::kSpeech), ref);
    const AudioClip out = synthesize(apply_beamformer(y, w, ia), stft);
    double best_input = -1e300;
    for (int c = 0; c < y.channel_count(); ++c)
      best_input = std::max(best_input, si_sdr(scene.truth.mixture.samples[c], target.samples[c]));
    gain_sum += si_sdr(out.samples[0], target.samples[ref]) - best_input;
  }
  const double mean_gain = gain_sum / 20.0;
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  return {mean_gain >= 10.0 && secs < 60.0,
          "mean SI-SDR gain over best input channel " + fmt("%.2f", mean_gain) + " dB on 20 mixtures, " +
              fmt("%.1f", secs) + " s"};
}

// 6. Gradient check.
Outcome gradient_check() {
  const auto start = Clock::now();
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  RefinerConfig rc;
  rc.freq_count = 3;
  rc.hidden_sizes = {4};
  rc.dropout_rate = 0.5;
  rc.l2_coefficient = 1e-3;
  double worst = 0.0;
  long checked = 0;
  for (int draw = 0; draw < 100; ++draw) {
    RefinerParams p = RefinerParams::initialize(rc, 1000 + draw);
    for (auto* t : p.tensors())
      for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] = 0.5 * g(rng);
    TrainingBatch b;
    b.features = Eigen::MatrixXd::NullaryExpr(3, 6, [&]() { return g(rng); });
    b.logit_mask = Eigen::MatrixXd::NullaryExpr(3, 6, [&]() { return 2.0 * g(rng); });
    b.target = Eigen::MatrixXd::NullaryExpr(3, 6, [&]() { return std::uniform_real_distribution<double>(0, 1)(rng); });
    const std::uint64_t seed = 77 + draw;
    const GradientResult res = gradients(b, p, seed);
    auto params = p.tensors();
    const auto grads = res.grads.tensors();
    const double step = 1e-5;
    for (std::size_t k = 0; k < params.size(); ++k) {
      for (Eigen::Index i = 0; i < params[k]->size(); ++i) {
        double& x = params[k]->data()[i];
        const double orig = x;
        x = orig + step;
        const double up = training_loss(b, p, seed);
        x = orig - step;
        const double down = training_loss(b, p, seed);
        x = orig;
        const double num = (up - down) / (2.0 * step);
        const double ana = grads[k]->data()[i];
        worst = std::max(worst, std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-6}));
        ++checked;
      }
    }
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  return {worst < 1e-4 && secs < 120.0,
          "max relative error " + fmt("%.2e", worst) + " over " + std::to_string(checked) +
              " parameter checks in 100 draws, " + fmt("%.1f", secs) + " s"};
}

// Shared by 7 and 8.
struct DeskSetup {
  RunConfig cfg;
  RefinerParams model;
  bool trained = false;
  double initial_bce = 0.0;
  double final_bce = 0.0;
  double em_hit = 0.0;
  double refined_hit = 0.0;
  int epochs = 0;
  double seconds = 0.0;
};

RunConfig desk_config() {
  RunConfig cfg;
  cfg.set("window_size", "512");
  cfg.set("refiner.hidden_sizes", "32");
  cfg.set("refiner.dropout", "0.2");
  cfg.set("train.max_epochs", "30");
  cfg.set("train.patience", "4");
  cfg.set("train.batch_size", "8");
  cfg.set("train.learning_rate", "0.005");
  cfg.set("seed", "7");
  cfg.refiner.freq_count = cfg.stft.freq_count();
  cfg.train.seed = cfg.seed;
  return cfg;
}

Scene desk_scene(std::uint64_t seed, std::mt19937_64& rng) {
  SceneConfig sc;
  sc.length = 24000;
  sc.snr_db = std::uniform_real_distribution<double>(0.0, 10.0)(rng);
  return make_scene(sc, seed);
}

double hit_rate(const std::vector<TrainingBatch>& set, const std::function<Mask(const TrainingBatch&)>& predict) {
  double hits = 0.0, bins = 0.0;
  for (const auto& b : set) {
    const MaskScores s = mask_scores(predict(b), b.target);
    hits += s.hit_rate * b.target.size();
    bins += b.target.size();
  }
  return hits / bins;
}

DeskSetup& desk() {
  static DeskSetup setup;
  if (setup.trained) return setup;
  const auto start = Clock::now();
  setup.cfg = desk_config();
  std::mt19937_64 rng(70);
  std::vector<TrainingUtterance> utts;
  for (int i = 0; i < 50; ++i) {
    const Scene s = desk_scene(7000 + i, rng);
    utts.push_back({s.truth.mixture, s.truth.images[0]});
  }
  const TrainingData data = prepare_training_data(utts, setup.cfg);
  RefinerParams init = RefinerParams::initialize(setup.cfg.refiner, setup.cfg.seed);
  init.norm = data.norm;
  TrainResult r = train(data.train, data.valid, init, setup.cfg.train);
  setup.model = r.params;
  setup.model.norm = data.norm;
  setup.initial_bce = r.history.front().valid_bce;
  setup.final_bce = validation_bce(data.valid, setup.model);
  setup.epochs = r.history.back().epoch;
  const double eps = setup.cfg.refiner.logit_epsilon;
  setup.em_hit = hit_rate(data.valid, [&](const TrainingBatch& b) { return sigmoid(b.logit_mask); });
  (void)eps;
  setup.refined_hit =
      hit_rate(data.valid, [&](const TrainingBatch& b) { return forward(b.input(), setup.model, Mode::kInfer); });
  setup.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  setup.trained = true;
  return setup;
}

// 7. Desk-scale training.
Outcome desk_training() {
  const DeskSetup& s = desk();
  const double reduction = 1.0 - s.final_bce / s.initial_bce;
  std::ostringstream d;
  d << "held-out BCE " << fmt("%.4f", s.initial_bce) << " -> " << fmt("%.4f", s.final_bce) << " ("
    << fmt("%.1f", 100.0 * reduction) << "% lower, " << s.epochs << " epochs); hit rate EM " << fmt("%.3f", s.em_hit)
    << " vs refined " << fmt("%.3f", s.refined_hit) << "; " << fmt("%.0f", s.seconds) << " s";
  return {reduction >= 0.2 && s.refined_hit > s.em_hit && s.seconds < 900.0, d.str()};
}

// 8. System ordering.
Outcome system_ordering() {
  const DeskSetup& s = desk();
  const std::vector<SystemMode> order = {SystemMode::kMesslLstm, SystemMode::kLstm, SystemMode::kMessl,
                                         SystemMode::kDas, SystemMode::kNoisy};
  std::vector<double> mean(order.size(), 0.0);
  std::mt19937_64 rng(80);
  const int n = 20;
  for (int i = 0; i < n; ++i) {
    const Scene scene = desk_scene(8000 + i, rng);
    const std::vector<double>& ref = scene.truth.images[0].samples[s.cfg.reference_channel];
    for (std::size_t k = 0; k < order.size(); ++k) {
      RunConfig cfg = s.cfg;
      cfg.mode = order[k];
      const EnhanceResult r = enhance(scene.truth.mixture, cfg, &s.model);
      mean[k] += si_sdr(r.output.samples[0], ref) / n;
    }
  }
  int inversions = 0;
  std::ostringstream d;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k) {
      const bool ok = mean[k - 1] >= mean[k];
      inversions += !ok;
      d << (ok ? " >= " : " < ");
    }
    d << mode_name(order[k]) << ' ' << fmt("%.2f", mean[k]);
  }
  d << " dB; " << inversions << " inversion" << (inversions == 1 ? "" : "s");
  return {inversions <= 1, d.str()};
}

// 9. Fusion algebra.
Outcome fusion_algebra() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> count(1, 8);
  long violations = 0;
  for (int i = 0; i < 10000; ++i) {
    MaskSet set;
    const int m = count(rng);
    for (int c = 0; c < m; ++c) set.cleaned.push_back(Mask::NullaryExpr(2, 3, [&]() { return u(rng); }));
    set.spatial = Mask::NullaryExpr(2, 3, [&]() { return u(rng); });
    for (FusionMode mode : {FusionMode::kLstmOnly, FusionMode::kMesslLstm}) {
      const FusedMasks f = fuse(set, mode);
      if (!((f.speech.array() <= f.post.array()).all() && (f.post.array() <= f.noise.array()).all())) ++violations;
      MaskSet perm = set;
      std::shuffle(perm.cleaned.begin(), perm.cleaned.end(), rng);
      const FusedMasks g = fuse(perm, mode);
      if (g.speech != f.speech || g.noise != f.noise || (g.post - f.post).cwiseAbs().maxCoeff() > 1e-15) ++violations;
      MaskSet same;
      same.cleaned.assign(m, set.cleaned[0]);
      same.spatial = set.cleaned[0];
      const FusedMasks h = fuse(same, mode);
      if (h.speech != set.cleaned[0] || h.noise != set.cleaned[0] ||
          (h.post - set.cleaned[0]).cwiseAbs().maxCoeff() > 1e-15)
        ++violations;
    }
  }
  return {violations == 0, std::to_string(violations) + " violations over 10000 random tuples in both modes"};
}

// 10. Reference builder floor and close-mic exclusion.
Outcome reference_floor() {
  std::mt19937_64 rng(10);
  SourceSpec src;
  src.dry = AudioClip(1, 32000);
  src.dry.samples[0] = speech_like(32000, 16000, rng);
  src.delays = {0.0, 1.0, -0.5, 2.0, 0.25, -1.5};
  src.gains = {1.0, 0.9, 1.1, 0.8, 1.0, 1.2};
  AudioClip array = delay_source(src);
  const AudioClip noise = white_noise(6, 32000, 16000, rng);
  for (int c = 0; c < 6; ++c)
    for (std::size_t i = 0; i < 32000; ++i) array.samples[c][i] += 0.05 * noise.samples[c][i];
  // Array silent in a stretch; the close mic has a loud click inside it.
  for (auto& ch : array.samples)
    for (std::size_t i = 16000; i < 20000; ++i) ch[i] = 0.0;
  AudioClip close = array.channel(0);
  for (std::size_t i = 18000; i < 18010; ++i) close.samples[0][i] = 50.0;

  const StftConfig stft = StftConfig::with_window(512);
  const Spectrogram a = analyze(array, stft), c = analyze(close, stft);
  const ReferenceResult r = build_reference(a, c, stft);
  const double floor = std::pow(10.0, -15.0 / 20.0);
  const double floor_err = std::abs(r.post_gain.minCoeff() - floor);
  double click = 0.0;
  for (std::size_t i = 17000; i < 19000; ++i) click = std::max(click, std::abs(r.clip.samples[0][i]));
  // Exact linear combination of array channels under the stored gains.
  const Spectrogram again = apply_beamformer(a, r.weights, r.post_gain);
  const double recombine = (again[0] - r.spec[0]).cwiseAbs().maxCoeff();
  return {floor_err <= 1e-12 && click < 1e-9 && recombine == 0.0,
          "min gain " + fmt("%.15f", r.post_gain.minCoeff()) + " (floor error " + fmt("%.1e", floor_err) +
              "); peak output at the click " + fmt("%.1e", click)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"stft-round-trip", stft_round_trip},   {"em-monotone", em_monotone},
      {"mvdr-closed-form", mvdr_closed_form}, {"distortionless", distortionless},
      {"oracle-mask-mvdr", oracle_mask},      {"gradient-check", gradient_check},
      {"desk-training", desk_training},       {"system-ordering", system_ordering},
      {"fusion-algebra", fusion_algebra},     {"reference-floor", reference_floor},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
