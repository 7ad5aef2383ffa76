#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bthick/attack.hpp"
#include "bthick/datasets.hpp"
#include "bthick/geometry.hpp"
#include "bthick/train.hpp"

namespace bthick {

/// Everything needed to build, train and measure one chessboard model.
struct ChessboardProfile {
  ChessboardSpec board;  // board.seed is replaced per seed
  std::size_t width = 128;
  std::size_t depth = 9;
  TrainConfig train;  // train.seed is replaced per seed
  double test_fraction = 0.2;
  /// Weight decay used by the mixup variants.
  double mixup_weight_decay = 1e-4;
  double mixup_beta = 1.0;
  ThicknessSpec thickness;  // thickness.seed is replaced per seed
  /// Corruption for the out-of-distribution accuracy.
  Corruption corruption = GaussianNoise{0.1};
  /// Attack for robust accuracy.
  AttackConfig robust_attack{Norm::kL2, 0.25, 0.05, 20, std::nullopt, false};
  unsigned threads = 0;
};

/// Full-size settings: 9x9 board with 100 points per square, width
/// 128, 100 epochs at lr 0.003, batch 128, momentum 0.9, weight decay 5e-4.
ChessboardProfile full_chessboard_profile();

/// Reduced settings that keep each canned experiment within a few minutes
/// on one core. See README for the exact values.
ChessboardProfile desk_chessboard_profile();

/// Desk settings for the noisy-mixup comparison: lambda ~ Beta(0.2, 0.2) and
/// 1000 epochs, since with Beta(1, 1) or 100 epochs the noisy-mixup model
/// stays near chance on the board.
ChessboardProfile desk_noisy_mixup_profile();

enum class Regularizer { kNoWeightDecay, kWeightDecay, kMixup, kNoisyMixup };
const char* regularizer_name(Regularizer r);

struct CellResult {
  double clean_accuracy = 0.0;
  double thickness = 0.0;
  std::size_t skipped_segments = 0;
  double final_train_loss = 0.0;
  std::vector<EpochMetrics> epochs;
  MlpModel model;
  Dataset test;
};

/// Builds the board for `seed`, trains one model with the given regularizer
/// and measures its thickness on the held-out split.
CellResult run_chessboard_cell(const ChessboardProfile& profile, Regularizer reg, std::uint64_t seed,
                               bool measure = true);

struct ExperimentReport {
  std::string experiment_id;
  nlohmann::json config_echo;
  std::map<std::string, double> metrics;
  /// One flat object per (seed, variant) cell; also the rows of metrics.csv.
  nlohmann::json per_seed = nlohmann::json::array();
  bool verdict = false;
  std::string verdict_rule;
  std::optional<std::string> failure;
  double runtime_seconds = 0.0;
};

nlohmann::json to_json(const ExperimentReport& report);
std::string per_seed_csv(const ExperimentReport& report);

/// Writes <root>/<experiment_id>/<timestamp>/{report.json,metrics.csv} and
/// returns the directory.
std::filesystem::path write_report(const ExperimentReport& report, const std::filesystem::path& root);

/// Accuracy lost when the shift coordinate is negated at test time.
double z_reliance(const MlpModel& model, const Dataset& test);

/// Spearman rank correlation with average ranks for ties; 0 when either
/// side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

ExperimentReport exp_chessboard_transition(const std::vector<double>& shifts,
                                           const std::vector<std::uint64_t>& seeds,
                                           const ChessboardProfile& profile);
ExperimentReport exp_regularization_ordering(const std::vector<std::uint64_t>& seeds,
                                             const ChessboardProfile& profile);
ExperimentReport exp_noisy_mixup(const std::vector<std::uint64_t>& seeds, const ChessboardProfile& profile);
ExperimentReport exp_proposition_suite();

std::vector<double> default_transition_shifts();
std::vector<std::uint64_t> default_seeds();

}  // namespace bthick
