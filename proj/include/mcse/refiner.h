// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Bidirectional LSTM mask refiner.
//
// Per frame the network reads the standardized log spectrogram of one channel
// concatenated with the logit of the spatial mask (2F inputs), runs a stack of
// bidirectional LSTM layers whose two directions are averaged, applies one
// dropout stage, and maps each frame to F sigmoid outputs. Channels are
// separate sequences; nothing flows between them.

#ifndef MCSE_REFINER_H_
#define MCSE_REFINER_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mcse/mask.h"
#include "mcse/stft.h"

namespace mcse {

struct RefinerConfig {
  int freq_count = 0;
  std::vector<int> hidden_sizes = {64, 64};
  double dropout_rate = 0.5;
  double l2_coefficient = 1e-4;  // on the output layer weights
  double logit_epsilon = 1e-6;

  int input_size() const { return 2 * freq_count; }
  void validate() const;
};

// Gate rows are stacked input, forget, cell, output (4H rows).
struct LstmWeights {
  Eigen::MatrixXd input;      // 4H x In
  Eigen::MatrixXd recurrent;  // 4H x H
  Eigen::MatrixXd bias;       // 4H x 1

  int hidden() const { return static_cast<int>(recurrent.cols()); }
};

struct BiLstmLayer {
  LstmWeights forward;
  LstmWeights backward;
};

struct RefinerParams {
  RefinerConfig config;
  std::vector<BiLstmLayer> layers;
  Eigen::MatrixXd dense_weight;  // F x H_last
  Eigen::MatrixXd dense_bias;    // F x 1
  NormStats norm;                // feature statistics used at inference

  // Glorot-uniform input kernels, orthogonal recurrent kernels, forget-gate
  // bias 1, zero elsewhere.
  static RefinerParams initialize(const RefinerConfig& config, std::uint64_t seed);
  static RefinerParams zeros_like(const RefinerParams& other);

  // Every trainable tensor in a fixed order, with stable names.
  std::vector<Eigen::MatrixXd*> tensors();
  std::vector<const Eigen::MatrixXd*> tensors() const;
  std::vector<std::string> tensor_names() const;
  std::size_t parameter_count() const;

  void validate() const;
};

enum class Mode { kTrain, kInfer };

struct RefinerInput {
  Eigen::MatrixXd features;    // F x T
  Eigen::MatrixXd logit_mask;  // F x T
};

struct TrainingBatch {
  Eigen::MatrixXd features;
  Eigen::MatrixXd logit_mask;
  Mask target;

  RefinerInput input() const { return {features, logit_mask}; }
};

// |s|/|y| with |y| floored at eps, clipped to [0,1].
Mask ideal_amplitude_mask(const Eigen::MatrixXcd& clean, const Eigen::MatrixXcd& noisy,
                          double eps = 1e-12);

// log(m/(1-m)) with m clamped to [eps, 1-eps].
Eigen::MatrixXd logit_transform(const Mask& mask, double eps = 1e-6);
Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& x);

// Output-layer pre-activations. Train mode needs a seed for the dropout draw.
Eigen::MatrixXd forward_logits(const RefinerInput& in, const RefinerParams& params, Mode mode,
                               std::optional<std::uint64_t> seed = std::nullopt);
Mask forward(const RefinerInput& in, const RefinerParams& params, Mode mode,
             std::optional<std::uint64_t> seed = std::nullopt);

// Mean binary cross-entropy over bins.
double mean_bce(const Mask& pred, const Mask& target);
// Mean BCE plus l2_coefficient * sum of squared output-layer weights.
double loss(const Mask& pred, const Mask& target, const RefinerParams& params);

struct GradientResult {
  double loss = 0.0;
  RefinerParams grads;
};

// Loss of a train-mode forward pass, evaluated from the logits.
double training_loss(const TrainingBatch& batch, const RefinerParams& params, std::uint64_t seed);
// Exact gradient of training_loss under the same dropout realization.
GradientResult gradients(const TrainingBatch& batch, const RefinerParams& params, std::uint64_t seed);

struct OptimizerState {
  std::vector<Eigen::MatrixXd> m;
  std::vector<Eigen::MatrixXd> v;
  long step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  double schedule_decay = 0.004;
  double m_schedule = 1.0;

  static OptimizerState for_params(const RefinerParams& params, double learning_rate = 1e-3);
};

// Nesterov-accelerated Adam with the momentum warm-up schedule.
void nadam_step(RefinerParams& params, const RefinerParams& grads, OptimizerState& state);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // NaN for the initial evaluation
  double valid_bce = 0.0;
};

struct TrainConfig {
  int max_epochs = 50;
  int patience = 3;
  int batch_size = 8;  // sequences per update
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
};

// Everything needed to resume a run.
struct TrainingState {
  RefinerParams params;
  RefinerParams best;
  OptimizerState optimizer;
  std::vector<EpochRecord> history;
  double best_valid = 0.0;
  int epoch = 0;
  int bad_epochs = 0;
  bool finished = false;
};

// Evaluates the initial validation BCE and sets up the optimizer.
TrainingState start_training(const RefinerParams& params, const std::vector<TrainingBatch>& valid,
                             const TrainConfig& cfg);

// Runs epochs until early stopping or max_epochs; state.best holds the
// lowest-validation parameters. The callback sees the state after each epoch.
void train(TrainingState& state, const std::vector<TrainingBatch>& train_set,
           const std::vector<TrainingBatch>& valid, const TrainConfig& cfg,
           const std::function<void(const TrainingState&)>& on_epoch = {});

struct TrainResult {
  RefinerParams params;
  std::vector<EpochRecord> history;
};

TrainResult train(const std::vector<TrainingBatch>& train_set, const std::vector<TrainingBatch>& valid,
                  const RefinerParams& init, const TrainConfig& cfg);

double validation_bce(const std::vector<TrainingBatch>& set, const RefinerParams& params);

// Model file: tensor container plus a key=value manifest. See tensor_io.h.
void save_refiner(const std::string& path, const RefinerParams& params);
RefinerParams load_refiner(const std::string& path);
void save_checkpoint(const std::string& path, const TrainingState& state);
TrainingState load_checkpoint(const std::string& path);

}  // namespace mcse

#endif  // MCSE_REFINER_H_
