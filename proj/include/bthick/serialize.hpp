#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "bthick/attack.hpp"
#include "bthick/geometry.hpp"
#include "bthick/train.hpp"

namespace bthick {

nlohmann::json to_json(const AttackConfig& cfg);
nlohmann::json to_json(const ThicknessSpec& spec);
nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const MixupConfig& cfg);
nlohmann::json to_json(const ChessboardSpec& spec);

/// {"mean_thickness", "skipped_segments", "num_segments", "per_segment": [...],
///  "spec": {...}}
nlohmann::json to_json(const ThicknessResult& result);

/// One header line and one data row:
/// mean_thickness,num_segments,skipped_segments,alpha,beta,integration_points,seed
std::string thickness_csv(const ThicknessResult& result);

/// epoch,learning_rate,train_loss,train_acc,eval_acc,thickness; absent
/// optional values are empty fields.
std::string metrics_csv(const std::vector<EpochMetrics>& epochs);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace bthick
