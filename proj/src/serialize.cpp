#include "bthick/serialize.hpp"

#include <charconv>
#include <sstream>

namespace bthick {

namespace {

const char* norm_name(Norm n) { return n == Norm::kL2 ? "l2" : "linf"; }

const char* quadrature_name(Quadrature q) {
  return q == Quadrature::kInterpolated ? "interpolated" : "point_count";
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, end);
}

nlohmann::json to_json(const AttackConfig& cfg) {
  nlohmann::json j{{"norm", norm_name(cfg.norm)},
                   {"epsilon", cfg.epsilon},
                   {"step_size", cfg.step_size},
                   {"steps", cfg.steps},
                   {"random_start", cfg.random_start}};
  j["target"] = cfg.target ? nlohmann::json(*cfg.target) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const ThicknessSpec& spec) {
  nlohmann::json j{{"alpha", spec.alpha},
                   {"beta", spec.beta},
                   {"num_segments", spec.num_segments},
                   {"integration_points", spec.integration_points},
                   {"seed", spec.seed},
                   {"quadrature", quadrature_name(spec.quadrature)},
                   {"label_classes", spec.label_classes}};
  if (const auto* adv = std::get_if<AdversarialSampler>(&spec.sampler))
    j["sampler"] = {{"kind", "adversarial"}, {"attack", to_json(adv->attack)}};
  else
    j["sampler"] = {{"kind", "random_pairs"}};
  return j;
}

nlohmann::json to_json(const TrainConfig& cfg) {
  nlohmann::json decay = nlohmann::json::array();
  for (const auto& s : cfg.lr_decay) decay.push_back({{"epoch", s.epoch}, {"factor", s.factor}});
  nlohmann::json j{{"epochs", cfg.epochs},
                   {"batch_size", cfg.batch_size},
                   {"learning_rate", cfg.learning_rate},
                   {"lr_decay", decay},
                   {"momentum", cfg.momentum},
                   {"weight_decay", cfg.weight_decay},
                   {"l1_coeff", cfg.l1_coeff},
                   {"seed", cfg.seed}};
  j["early_stop_epoch"] = cfg.early_stop_epoch ? nlohmann::json(*cfg.early_stop_epoch) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const MixupConfig& cfg) {
  return {{"enabled", cfg.enabled},
          {"beta_a", cfg.beta_a},
          {"noisy", cfg.noisy},
          {"noise_prob", cfg.noise_prob}};
}

nlohmann::json to_json(const ChessboardSpec& spec) {
  return {{"grid", spec.grid},
          {"points_per_square", spec.points_per_square},
          {"square_len", spec.square_len},
          {"separation", spec.separation},
          {"z_shift", spec.z_shift},
          {"pad_dim", spec.pad_dim},
          {"pad_amplitude", spec.pad_amplitude},
          {"seed", spec.seed}};
}

nlohmann::json to_json(const ThicknessResult& result) {
  return {{"mean_thickness", result.mean_thickness},
          {"num_segments", result.per_segment.size()},
          {"skipped_segments", result.skipped_segments},
          {"per_segment", result.per_segment},
          {"spec", to_json(result.spec_echo)}};
}

std::string thickness_csv(const ThicknessResult& result) {
  const auto& s = result.spec_echo;
  std::ostringstream os;
  os << "mean_thickness,num_segments,skipped_segments,alpha,beta,integration_points,seed\n"
     << format_double(result.mean_thickness) << ',' << result.per_segment.size() << ','
     << result.skipped_segments << ',' << format_double(s.alpha) << ',' << format_double(s.beta) << ','
     << s.integration_points << ',' << s.seed << '\n';
  return os.str();
}

std::string metrics_csv(const std::vector<EpochMetrics>& epochs) {
  std::ostringstream os;
  os << "epoch,learning_rate,train_loss,train_acc,eval_acc,thickness\n";
  for (const auto& m : epochs) {
    os << m.epoch << ',' << format_double(m.learning_rate) << ',' << format_double(m.train_loss) << ','
       << format_double(m.train_acc) << ',';
    if (m.eval_acc) os << format_double(*m.eval_acc);
    os << ',';
    if (m.thickness) os << format_double(*m.thickness);
    os << '\n';
  }
  return os.str();
}

}  // namespace bthick
