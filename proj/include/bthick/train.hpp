#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

#include "bthick/attack.hpp"
#include "bthick/datasets.hpp"
#include "bthick/model.hpp"

namespace bthick {

struct LrStep {
  std::size_t epoch;  // multiply the rate by `factor` from this epoch on
  double factor;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double learning_rate = 0.003;
  std::vector<LrStep> lr_decay;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double l1_coeff = 0.0;
  std::optional<std::size_t> early_stop_epoch;
  std::uint64_t seed = 0;

  void validate() const;
  double rate_at(std::size_t epoch) const;
};

struct MixupConfig {
  bool enabled = false;
  /// lambda ~ Beta(beta_a, beta_a); 1 gives uniform on [0, 1].
  double beta_a = 1.0;
  bool noisy = false;
  double noise_prob = 0.5;
  /// Override lambda with a constant (testing hook).
  std::optional<double> fixed_lambda;

  void validate() const;
};

struct AdvTrainConfig {
  bool enabled = false;
  AttackConfig attack{Norm::kL2, 1.0, 0.25, 10, std::nullopt, true};
};

struct CutoutConfig {
  bool enabled = false;
  std::size_t window = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> eval_acc;
  std::optional<double> thickness;
};

struct TrainOptions {
  const Dataset* eval = nullptr;
  /// Called after epochs whose 1-based index is a multiple of
  /// thickness_every; the value lands in EpochMetrics::thickness.
  std::function<double(const MlpModel&)> thickness_hook;
  std::size_t thickness_every = 0;
  std::ostream* log = nullptr;
};

struct TrainResult {
  MlpModel model;
  std::vector<EpochMetrics> epochs;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t epoch, std::size_t batch, double parameter_norm);
  std::size_t epoch;
  std::size_t batch;
  double parameter_norm;
};

/// Mini-batch SGD with momentum, l2 weight decay and l1 (subgradient, 0 at
/// 0). Mixup and adversarial training are mutually exclusive. When
/// mix.noisy is set the model needs data.num_classes + 1 outputs; the last
/// one is the NONE class.
TrainResult train(MlpModel model, const Dataset& data, const TrainConfig& cfg,
                  const MixupConfig& mix = {}, const AdvTrainConfig& adv = {},
                  const CutoutConfig& cut = {}, const TrainOptions& options = {});

struct MixedBatch {
  Matrix x;
  Matrix y;
  std::size_t pairs_with_noise = 0;
};

/// Mixes every row with a permuted partner. With mix.noisy the last label
/// column is NONE; each pair member is independently swapped for a
/// uniform [0, 1] vector labeled NONE with probability noise_prob.
MixedBatch mixup_batch(const Matrix& x, const Matrix& y_onehot, const MixupConfig& mix,
                       RngStream& rng);

/// Zeroes one random contiguous window of `window` coordinates per row.
Matrix cutout_batch(const Matrix& x, const CutoutConfig& cut, RngStream& rng);

/// Untargeted PGD (random start) against the current model for every row.
Matrix adversarial_train_step(const MlpModel& model, const Matrix& x,
                              std::span<const std::size_t> labels, const AdvTrainConfig& adv,
                              const RngStream& rng);

/// Accuracy of the model on data, masking outputs beyond data.num_classes.
double evaluate_accuracy(const MlpModel& model, const Dataset& data);

}  // namespace bthick
