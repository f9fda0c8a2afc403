// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "mcse/refiner.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "mcse/tensor_io.h"

namespace mcse {
namespace {

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(1 + e^x) without overflow.
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

struct DirectionCache {
  Eigen::MatrixXd gates;  // activated i, f, g, o
  Eigen::MatrixXd cell;
  Eigen::MatrixXd tanh_cell;
  Eigen::MatrixXd hidden;
  bool reverse = false;
};

struct LayerCache {
  Eigen::MatrixXd input;
  DirectionCache fwd, bwd;
  Eigen::MatrixXd output;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Eigen::MatrixXd dropout_scale;  // empty when no dropout was applied
  Eigen::MatrixXd dropped;
  Eigen::MatrixXd logits;
};

DirectionCache run_direction(const LstmWeights& w, const Eigen::MatrixXd& x, bool reverse) {
  const int h = w.hidden();
  const int steps = static_cast<int>(x.cols());
  Eigen::MatrixXd pre = w.input * x;
  pre.colwise() += w.bias.col(0);

  DirectionCache cache;
  cache.reverse = reverse;
  cache.gates.resize(4 * h, steps);
  cache.cell.resize(h, steps);
  cache.tanh_cell.resize(h, steps);
  cache.hidden.resize(h, steps);
  Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(h), c_prev = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd a(4 * h);
  for (int s = 0; s < steps; ++s) {
    const int t = reverse ? steps - 1 - s : s;
    a.noalias() = pre.col(t) + w.recurrent * h_prev;
    for (int j = 0; j < h; ++j) {
      const double i = sigm(a(j)), f = sigm(a(h + j)), g = std::tanh(a(2 * h + j)), o = sigm(a(3 * h + j));
      cache.gates(j, t) = i;
      cache.gates(h + j, t) = f;
      cache.gates(2 * h + j, t) = g;
      cache.gates(3 * h + j, t) = o;
      const double c = f * c_prev(j) + i * g;
      const double tc = std::tanh(c);
      cache.cell(j, t) = c;
      cache.tanh_cell(j, t) = tc;
      cache.hidden(j, t) = o * tc;
    }
    h_prev = cache.hidden.col(t);
    c_prev = cache.cell.col(t);
  }
  return cache;
}

// Accumulates weight gradients into grad and returns d(loss)/d(input).
Eigen::MatrixXd backprop_direction(const LstmWeights& w, const DirectionCache& cache,
                                   const Eigen::MatrixXd& x, const Eigen::MatrixXd& d_hidden,
                                   LstmWeights& grad) {
  const int h = w.hidden();
  const int steps = static_cast<int>(x.cols());
  Eigen::MatrixXd d_pre(4 * h, steps);
  Eigen::MatrixXd h_prev_all = Eigen::MatrixXd::Zero(h, steps);
  Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(h), dc_next = Eigen::VectorXd::Zero(h);
  for (int s = steps - 1; s >= 0; --s) {
    const int t = cache.reverse ? steps - 1 - s : s;
    const int tp = cache.reverse ? t + 1 : t - 1;
    const bool has_prev = s > 0;
    if (has_prev) h_prev_all.col(t) = cache.hidden.col(tp);
    for (int j = 0; j < h; ++j) {
      const double i = cache.gates(j, t), f = cache.gates(h + j, t);
      const double g = cache.gates(2 * h + j, t), o = cache.gates(3 * h + j, t);
      const double tc = cache.tanh_cell(j, t);
      const double c_prev = has_prev ? cache.cell(j, tp) : 0.0;
      const double dh = d_hidden(j, t) + dh_next(j);
      const double dc = dh * o * (1.0 - tc * tc) + dc_next(j);
      d_pre(j, t) = dc * g * i * (1.0 - i);
      d_pre(h + j, t) = dc * c_prev * f * (1.0 - f);
      d_pre(2 * h + j, t) = dc * i * (1.0 - g * g);
      d_pre(3 * h + j, t) = dh * tc * o * (1.0 - o);
      dc_next(j) = dc * f;
    }
    dh_next.noalias() = w.recurrent.transpose() * d_pre.col(t);
  }
  grad.input.noalias() += d_pre * x.transpose();
  grad.recurrent.noalias() += d_pre * h_prev_all.transpose();
  grad.bias.col(0) += d_pre.rowwise().sum();
  return w.input.transpose() * d_pre;
}

Eigen::MatrixXd stack_input(const RefinerInput& in, const RefinerParams& params) {
  const int f = params.config.freq_count;
  if (in.features.rows() != f || in.logit_mask.rows() != f || in.features.cols() != in.logit_mask.cols())
    throw std::invalid_argument("refiner input shape does not match the model");
  Eigen::MatrixXd x(2 * f, in.features.cols());
  x << in.features, in.logit_mask;
  return x;
}

ForwardCache run_forward(const RefinerInput& in, const RefinerParams& params, Mode mode,
                         std::optional<std::uint64_t> seed) {
  ForwardCache cache;
  Eigen::MatrixXd x = stack_input(in, params);
  for (const auto& layer : params.layers) {
    LayerCache lc;
    lc.input = std::move(x);
    lc.fwd = run_direction(layer.forward, lc.input, false);
    lc.bwd = run_direction(layer.backward, lc.input, true);
    lc.output = 0.5 * (lc.fwd.hidden + lc.bwd.hidden);
    x = lc.output;
    cache.layers.push_back(std::move(lc));
  }
  const double rate = params.config.dropout_rate;
  if (mode == Mode::kTrain && rate > 0.0) {
    if (!seed) throw std::invalid_argument("train-mode forward needs a dropout seed");
    std::mt19937_64 rng(*seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep = 1.0 - rate;
    cache.dropout_scale.resize(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < cache.dropout_scale.size(); ++i)
      cache.dropout_scale.data()[i] = u(rng) < keep ? 1.0 / keep : 0.0;
    cache.dropped = x.cwiseProduct(cache.dropout_scale);
  } else {
    cache.dropped = x;
  }
  cache.logits = params.dense_weight * cache.dropped;
  cache.logits.colwise() += params.dense_bias.col(0);
  return cache;
}

LstmWeights make_lstm(int in, int h, std::mt19937_64& rng) {
  LstmWeights w;
  const double limit = std::sqrt(6.0 / (in + 4 * h));
  std::uniform_real_distribution<double> u(-limit, limit);
  w.input = Eigen::MatrixXd::NullaryExpr(4 * h, in, [&]() { return u(rng); });
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(4 * h, h, [&]() { return gauss(rng); });
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(4 * h, h);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(h).triangularView<Eigen::Upper>();
  for (int j = 0; j < h; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  w.recurrent = q;
  w.bias = Eigen::MatrixXd::Zero(4 * h, 1);
  w.bias.block(h, 0, h, 1).setOnes();
  return w;
}

LstmWeights zeros_lstm(const LstmWeights& w) {
  return {Eigen::MatrixXd::Zero(w.input.rows(), w.input.cols()),
          Eigen::MatrixXd::Zero(w.recurrent.rows(), w.recurrent.cols()),
          Eigen::MatrixXd::Zero(w.bias.rows(), w.bias.cols())};
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_config(const RefinerConfig& cfg, std::map<std::string, std::string>& manifest) {
  std::ostringstream hidden;
  for (std::size_t i = 0; i < cfg.hidden_sizes.size(); ++i) hidden << (i ? "," : "") << cfg.hidden_sizes[i];
  manifest["freq_count"] = std::to_string(cfg.freq_count);
  manifest["hidden_sizes"] = hidden.str();
  manifest["dropout_rate"] = format_double(cfg.dropout_rate);
  manifest["l2_coefficient"] = format_double(cfg.l2_coefficient);
  manifest["logit_epsilon"] = format_double(cfg.logit_epsilon);
  manifest["input_layout"] = "features;logit_mask";
  manifest["merge_rule"] = "average";
}

RefinerConfig read_config(const TensorFile& file, const std::string& path) {
  auto get = [&](const std::string& key) {
    auto it = file.manifest.find(key);
    if (it == file.manifest.end()) throw std::runtime_error("model manifest missing '" + key + "': " + path);
    return it->second;
  };
  RefinerConfig cfg;
  cfg.freq_count = std::stoi(get("freq_count"));
  cfg.hidden_sizes.clear();
  std::istringstream hs(get("hidden_sizes"));
  for (std::string tok; std::getline(hs, tok, ',');) cfg.hidden_sizes.push_back(std::stoi(tok));
  cfg.dropout_rate = std::stod(get("dropout_rate"));
  cfg.l2_coefficient = std::stod(get("l2_coefficient"));
  cfg.logit_epsilon = std::stod(get("logit_epsilon"));
  return cfg;
}

void append_params(TensorFile& file, const RefinerParams& params, const std::string& prefix) {
  const auto names = params.tensor_names();
  const auto tensors = params.tensors();
  for (std::size_t i = 0; i < names.size(); ++i) file.tensors.push_back({prefix + names[i], *tensors[i]});
}

RefinerParams extract_params(const TensorFile& file, const RefinerConfig& cfg, const std::string& prefix) {
  RefinerParams params = RefinerParams::initialize(cfg, 0);
  const auto names = params.tensor_names();
  auto tensors = params.tensors();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const Eigen::MatrixXd& t = file.at(prefix + names[i]);
    if (t.rows() != tensors[i]->rows() || t.cols() != tensors[i]->cols())
      throw std::runtime_error("tensor shape mismatch for " + prefix + names[i]);
    *tensors[i] = t;
  }
  if (file.contains("norm.mean")) {
    params.norm.mean = file.at("norm.mean").col(0);
    params.norm.std = file.at("norm.std").col(0);
  }
  return params;
}

void append_norm(TensorFile& file, const NormStats& norm) {
  if (norm.empty()) return;
  file.tensors.push_back({"norm.mean", norm.mean});
  file.tensors.push_back({"norm.std", norm.std});
}

}  // namespace

void RefinerConfig::validate() const {
  if (freq_count <= 0) throw std::invalid_argument("refiner freq_count must be positive");
  if (hidden_sizes.empty()) throw std::invalid_argument("refiner needs at least one recurrent layer");
  for (int h : hidden_sizes)
    if (h <= 0) throw std::invalid_argument("hidden sizes must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0,1)");
  if (l2_coefficient < 0.0) throw std::invalid_argument("l2 coefficient must be nonnegative");
}

RefinerParams RefinerParams::initialize(const RefinerConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  RefinerParams p;
  p.config = config;
  int in = config.input_size();
  for (int h : config.hidden_sizes) {
    BiLstmLayer layer;
    layer.forward = make_lstm(in, h, rng);
    layer.backward = make_lstm(in, h, rng);
    p.layers.push_back(std::move(layer));
    in = h;
  }
  const double limit = std::sqrt(6.0 / (in + config.freq_count));
  std::uniform_real_distribution<double> u(-limit, limit);
  p.dense_weight = Eigen::MatrixXd::NullaryExpr(config.freq_count, in, [&]() { return u(rng); });
  p.dense_bias = Eigen::MatrixXd::Zero(config.freq_count, 1);
  return p;
}

RefinerParams RefinerParams::zeros_like(const RefinerParams& other) {
  RefinerParams p;
  p.config = other.config;
  for (const auto& layer : other.layers) p.layers.push_back({zeros_lstm(layer.forward), zeros_lstm(layer.backward)});
  p.dense_weight = Eigen::MatrixXd::Zero(other.dense_weight.rows(), other.dense_weight.cols());
  p.dense_bias = Eigen::MatrixXd::Zero(other.dense_bias.rows(), other.dense_bias.cols());
  return p;
}

std::vector<Eigen::MatrixXd*> RefinerParams::tensors() {
  std::vector<Eigen::MatrixXd*> out;
  for (auto& layer : layers)
    for (LstmWeights* w : {&layer.forward, &layer.backward}) {
      out.push_back(&w->input);
      out.push_back(&w->recurrent);
      out.push_back(&w->bias);
    }
  out.push_back(&dense_weight);
  out.push_back(&dense_bias);
  return out;
}

std::vector<const Eigen::MatrixXd*> RefinerParams::tensors() const {
  auto mut = const_cast<RefinerParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> RefinerParams::tensor_names() const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < layers.size(); ++l)
    for (const char* dir : {"fwd", "bwd"})
      for (const char* kind : {"input", "recurrent", "bias"})
        names.push_back("layer" + std::to_string(l) + "." + dir + "." + kind);
  names.push_back("dense.weight");
  names.push_back("dense.bias");
  return names;
}

std::size_t RefinerParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto* t : tensors()) n += static_cast<std::size_t>(t->size());
  return n;
}

void RefinerParams::validate() const {
  config.validate();
  if (layers.size() != config.hidden_sizes.size()) throw std::invalid_argument("layer count mismatch");
  int in = config.input_size();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const int h = config.hidden_sizes[l];
    for (const LstmWeights* w : {&layers[l].forward, &layers[l].backward})
      if (w->input.rows() != 4 * h || w->input.cols() != in || w->recurrent.rows() != 4 * h ||
          w->recurrent.cols() != h || w->bias.rows() != 4 * h || w->bias.cols() != 1)
        throw std::invalid_argument("layer shapes do not chain");
    in = h;
  }
  if (dense_weight.rows() != config.freq_count || dense_weight.cols() != in || dense_bias.rows() != config.freq_count)
    throw std::invalid_argument("output layer shape mismatch");
}

Mask ideal_amplitude_mask(const Eigen::MatrixXcd& clean, const Eigen::MatrixXcd& noisy, double eps) {
  if (clean.rows() != noisy.rows() || clean.cols() != noisy.cols())
    throw std::invalid_argument("clean and noisy spectrograms differ in shape");
  Mask m(clean.rows(), clean.cols());
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = std::clamp(std::abs(clean.data()[i]) / std::max(std::abs(noisy.data()[i]), eps), 0.0, 1.0);
  return m;
}

Eigen::MatrixXd logit_transform(const Mask& mask, double eps) {
  return mask.unaryExpr([eps](double m) {
    const double c = std::clamp(m, eps, 1.0 - eps);
    return std::log(c / (1.0 - c));
  });
}

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& x) { return x.unaryExpr([](double v) { return sigm(v); }); }

Eigen::MatrixXd forward_logits(const RefinerInput& in, const RefinerParams& params, Mode mode,
                               std::optional<std::uint64_t> seed) {
  return run_forward(in, params, mode, seed).logits;
}

// Saturated sigmoids are pulled inside (0,1) so the output range is strict.
constexpr double kEdge = 1e-12;

Mask forward(const RefinerInput& in, const RefinerParams& params, Mode mode, std::optional<std::uint64_t> seed) {
  return sigmoid(forward_logits(in, params, mode, seed)).unaryExpr([](double v) {
    return std::clamp(v, kEdge, 1.0 - kEdge);
  });
}

double mean_bce(const Mask& pred, const Mask& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw std::invalid_argument("prediction and target differ in shape");
  if (pred.size() == 0) return 0.0;
  constexpr double kClamp = 1e-12;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred.data()[i], kClamp, 1.0 - kClamp);
    const double y = target.data()[i];
    acc -= y * std::log(p) + (1.0 - y) * std::log1p(-p);
  }
  return acc / static_cast<double>(pred.size());
}

double loss(const Mask& pred, const Mask& target, const RefinerParams& params) {
  return mean_bce(pred, target) + params.config.l2_coefficient * params.dense_weight.squaredNorm();
}

double training_loss(const TrainingBatch& batch, const RefinerParams& params, std::uint64_t seed) {
  const ForwardCache cache = run_forward(batch.input(), params, Mode::kTrain, seed);
  if (batch.target.rows() != cache.logits.rows() || batch.target.cols() != cache.logits.cols())
    throw std::invalid_argument("target shape does not match the model output");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < cache.logits.size(); ++i) {
    const double z = cache.logits.data()[i];
    acc += softplus(z) - batch.target.data()[i] * z;
  }
  return acc / static_cast<double>(cache.logits.size()) +
         params.config.l2_coefficient * params.dense_weight.squaredNorm();
}

GradientResult gradients(const TrainingBatch& batch, const RefinerParams& params, std::uint64_t seed) {
  const ForwardCache cache = run_forward(batch.input(), params, Mode::kTrain, seed);
  const Eigen::MatrixXd& z = cache.logits;
  if (batch.target.rows() != z.rows() || batch.target.cols() != z.cols())
    throw std::invalid_argument("target shape does not match the model output");
  const double n = static_cast<double>(z.size());

  GradientResult res;
  res.grads = RefinerParams::zeros_like(params);
  double acc = 0.0;
  Eigen::MatrixXd d_logits(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double zi = z.data()[i], yi = batch.target.data()[i];
    acc += softplus(zi) - yi * zi;
    d_logits.data()[i] = (sigm(zi) - yi) / n;
  }
  const double l2 = params.config.l2_coefficient;
  res.loss = acc / n + l2 * params.dense_weight.squaredNorm();

  res.grads.dense_weight = d_logits * cache.dropped.transpose() + 2.0 * l2 * params.dense_weight;
  res.grads.dense_bias = d_logits.rowwise().sum();
  Eigen::MatrixXd d_out = params.dense_weight.transpose() * d_logits;
  if (cache.dropout_scale.size()) d_out = d_out.cwiseProduct(cache.dropout_scale);

  for (int l = static_cast<int>(params.layers.size()) - 1; l >= 0; --l) {
    const LayerCache& lc = cache.layers[l];
    const Eigen::MatrixXd d_dir = 0.5 * d_out;
    Eigen::MatrixXd d_in =
        backprop_direction(params.layers[l].forward, lc.fwd, lc.input, d_dir, res.grads.layers[l].forward);
    d_in += backprop_direction(params.layers[l].backward, lc.bwd, lc.input, d_dir, res.grads.layers[l].backward);
    d_out = std::move(d_in);
  }
  return res;
}

OptimizerState OptimizerState::for_params(const RefinerParams& params, double learning_rate) {
  OptimizerState s;
  s.learning_rate = learning_rate;
  for (const auto* t : params.tensors()) {
    s.m.push_back(Eigen::MatrixXd::Zero(t->rows(), t->cols()));
    s.v.push_back(Eigen::MatrixXd::Zero(t->rows(), t->cols()));
  }
  return s;
}

void nadam_step(RefinerParams& params, const RefinerParams& grads, OptimizerState& state) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  if (p.size() != g.size() || p.size() != state.m.size()) throw std::invalid_argument("optimizer shape mismatch");
  const double t = static_cast<double>(state.step + 1);
  const double mc_t = state.beta1 * (1.0 - 0.5 * std::pow(0.96, t * state.schedule_decay));
  const double mc_next = state.beta1 * (1.0 - 0.5 * std::pow(0.96, (t + 1.0) * state.schedule_decay));
  const double sched_new = state.m_schedule * mc_t;
  const double sched_next = sched_new * mc_next;
  const double v_correction = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (g[i]->rows() != p[i]->rows() || g[i]->cols() != p[i]->cols() || state.m[i].rows() != p[i]->rows())
      throw std::invalid_argument("optimizer shape mismatch");
    auto gi = g[i]->array();
    state.m[i].array() = state.beta1 * state.m[i].array() + (1.0 - state.beta1) * gi;
    state.v[i].array() = state.beta2 * state.v[i].array() + (1.0 - state.beta2) * gi.square();
    const Eigen::ArrayXXd m_bar =
        (1.0 - mc_t) * gi / (1.0 - sched_new) + mc_next * state.m[i].array() / (1.0 - sched_next);
    const Eigen::ArrayXXd v_hat = state.v[i].array() / v_correction;
    p[i]->array() -= state.learning_rate * m_bar / (v_hat.sqrt() + state.epsilon);
  }
  state.m_schedule = sched_new;
  ++state.step;
}

double validation_bce(const std::vector<TrainingBatch>& set, const RefinerParams& params) {
  double acc = 0.0, bins = 0.0;
  for (const auto& b : set) {
    const Mask pred = forward(b.input(), params, Mode::kInfer);
    const double n = static_cast<double>(pred.size());
    acc += mean_bce(pred, b.target) * n;
    bins += n;
  }
  return bins > 0 ? acc / bins : 0.0;
}

TrainingState start_training(const RefinerParams& params, const std::vector<TrainingBatch>& valid,
                             const TrainConfig& cfg) {
  if (valid.empty()) throw std::invalid_argument("validation set is empty");
  params.validate();
  TrainingState s;
  s.params = params;
  s.best = params;
  s.optimizer = OptimizerState::for_params(params, cfg.learning_rate);
  s.best_valid = validation_bce(valid, params);
  s.history.push_back({0, std::numeric_limits<double>::quiet_NaN(), s.best_valid});
  return s;
}

void train(TrainingState& state, const std::vector<TrainingBatch>& train_set, const std::vector<TrainingBatch>& valid,
           const TrainConfig& cfg, const std::function<void(const TrainingState&)>& on_epoch) {
  if (train_set.empty()) throw std::invalid_argument("training set is empty");
  if (valid.empty()) throw std::invalid_argument("validation set is empty");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  std::vector<std::size_t> order(train_set.size());
  while (!state.finished && state.epoch < cfg.max_epochs) {
    const int epoch = state.epoch + 1;
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(cfg.seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      RefinerParams sum = RefinerParams::zeros_like(state.params);
      double batch_loss = 0.0;
      auto acc = sum.tensors();
      for (std::size_t i = start; i < end; ++i) {
        const std::uint64_t seed = cfg.seed ^ (static_cast<std::uint64_t>(epoch) << 32) ^ (order[i] * 0x9E3779B97F4A7C15ULL);
        const GradientResult g = gradients(train_set[order[i]], state.params, seed);
        batch_loss += g.loss;
        const auto gt = g.grads.tensors();
        for (std::size_t k = 0; k < acc.size(); ++k) *acc[k] += *gt[k];
      }
      const double count = static_cast<double>(end - start);
      batch_loss /= count;
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batches));
      for (auto* t : acc) *t /= count;
      nadam_step(state.params, sum, state.optimizer);
      epoch_loss += batch_loss;
      ++batches;
    }

    const double v = validation_bce(valid, state.params);
    if (!std::isfinite(v))
      throw std::runtime_error("training diverged: non-finite validation loss at epoch " + std::to_string(epoch));
    state.history.push_back({epoch, epoch_loss / batches, v});
    state.epoch = epoch;
    if (v < state.best_valid) {
      state.best_valid = v;
      state.best = state.params;
      state.bad_epochs = 0;
    } else if (++state.bad_epochs > cfg.patience) {
      state.finished = true;
    }
    if (on_epoch) on_epoch(state);
  }
}

TrainResult train(const std::vector<TrainingBatch>& train_set, const std::vector<TrainingBatch>& valid,
                  const RefinerParams& init, const TrainConfig& cfg) {
  if (train_set.empty()) throw std::invalid_argument("training set is empty");
  TrainingState state = start_training(init, valid, cfg);
  train(state, train_set, valid, cfg);
  return {state.best, state.history};
}

void save_refiner(const std::string& path, const RefinerParams& params) {
  params.validate();
  TensorFile file;
  file.manifest["format"] = "mcse-refiner";
  write_config(params.config, file.manifest);
  append_params(file, params, "");
  append_norm(file, params.norm);
  write_tensor_file(path, file);
}

RefinerParams load_refiner(const std::string& path) {
  const TensorFile file = read_tensor_file(path);
  auto it = file.manifest.find("format");
  if (it == file.manifest.end() || it->second != "mcse-refiner")
    throw std::runtime_error("not a refiner model file: " + path);
  return extract_params(file, read_config(file, path), "");
}

void save_checkpoint(const std::string& path, const TrainingState& state) {
  TensorFile file;
  file.manifest["format"] = "mcse-checkpoint";
  write_config(state.params.config, file.manifest);
  append_params(file, state.params, "param.");
  append_params(file, state.best, "best.");
  append_norm(file, state.params.norm);
  const auto names = state.params.tensor_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    file.tensors.push_back({"opt.m." + names[i], state.optimizer.m[i]});
    file.tensors.push_back({"opt.v." + names[i], state.optimizer.v[i]});
  }
  const OptimizerState& o = state.optimizer;
  Eigen::MatrixXd scalars(1, 7);
  scalars << static_cast<double>(o.step), o.learning_rate, o.beta1, o.beta2, o.epsilon, o.schedule_decay, o.m_schedule;
  file.tensors.push_back({"opt.scalars", scalars});
  Eigen::MatrixXd progress(1, 4);
  progress << state.epoch, state.bad_epochs, state.finished ? 1.0 : 0.0, state.best_valid;
  file.tensors.push_back({"train.progress", progress});
  Eigen::MatrixXd history(static_cast<Eigen::Index>(state.history.size()), 3);
  for (std::size_t i = 0; i < state.history.size(); ++i)
    history.row(static_cast<Eigen::Index>(i)) << state.history[i].epoch, state.history[i].train_loss,
        state.history[i].valid_bce;
  file.tensors.push_back({"train.history", history});
  write_tensor_file(path, file);
}

TrainingState load_checkpoint(const std::string& path) {
  const TensorFile file = read_tensor_file(path);
  auto it = file.manifest.find("format");
  if (it == file.manifest.end() || it->second != "mcse-checkpoint")
    throw std::runtime_error("not a training checkpoint: " + path);
  const RefinerConfig cfg = read_config(file, path);
  TrainingState s;
  s.params = extract_params(file, cfg, "param.");
  s.best = extract_params(file, cfg, "best.");
  s.optimizer = OptimizerState::for_params(s.params);
  const auto names = s.params.tensor_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    s.optimizer.m[i] = file.at("opt.m." + names[i]);
    s.optimizer.v[i] = file.at("opt.v." + names[i]);
  }
  const Eigen::MatrixXd& sc = file.at("opt.scalars");
  s.optimizer.step = static_cast<long>(sc(0, 0));
  s.optimizer.learning_rate = sc(0, 1);
  s.optimizer.beta1 = sc(0, 2);
  s.optimizer.beta2 = sc(0, 3);
  s.optimizer.epsilon = sc(0, 4);
  s.optimizer.schedule_decay = sc(0, 5);
  s.optimizer.m_schedule = sc(0, 6);
  const Eigen::MatrixXd& pr = file.at("train.progress");
  s.epoch = static_cast<int>(pr(0, 0));
  s.bad_epochs = static_cast<int>(pr(0, 1));
  s.finished = pr(0, 2) != 0.0;
  s.best_valid = pr(0, 3);
  const Eigen::MatrixXd& h = file.at("train.history");
  for (Eigen::Index r = 0; r < h.rows(); ++r) s.history.push_back({static_cast<int>(h(r, 0)), h(r, 1), h(r, 2)});
  return s;
}

}  // namespace mcse
