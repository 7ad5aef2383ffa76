#include "bthick/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "bthick/errors.hpp"
#include "bthick/serialize.hpp"
#include "bthick/svm.hpp"
#include "bthick/thresholds.hpp"

namespace bthick {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool majority(std::size_t hits, std::size_t total) {
  return static_cast<double>(hits) > thresholds::kMajorityFraction * static_cast<double>(total);
}

nlohmann::json profile_json(const ChessboardProfile& p) {
  return {{"board", to_json(p.board)},
          {"width", p.width},
          {"depth", p.depth},
          {"train", to_json(p.train)},
          {"test_fraction", p.test_fraction},
          {"mixup_weight_decay", p.mixup_weight_decay},
          {"mixup_beta", p.mixup_beta},
          {"thickness", to_json(p.thickness)},
          {"corruption", corruption_label(p.corruption)},
          {"robust_attack", to_json(p.robust_attack)}};
}

nlohmann::json seeds_json(const std::vector<std::uint64_t>& seeds) {
  nlohmann::json j = nlohmann::json::array();
  for (auto s : seeds) j.push_back(s);
  return j;
}

double robust_accuracy(const MlpModel& model, const Dataset& test, const AttackConfig& attack,
                       std::uint64_t seed) {
  const std::size_t classes = test.num_classes;
  Matrix adv = test.x;
  const std::size_t block = 64;
  const RngStream root(seed);
  for (std::size_t lo = 0; lo < test.size(); lo += block) {
    const std::size_t hi = std::min(test.size(), lo + block);
    Matrix xb(hi - lo, test.dim());
    for (std::size_t r = lo; r < hi; ++r) {
      auto src = test.x.row(r);
      std::copy(src.begin(), src.end(), xb.row(r - lo).begin());
    }
    std::span<const std::size_t> labels(test.y.data() + lo, hi - lo);
    const auto res = pgd_batch(model, xb, labels, attack, {}, root.child(lo / block), test.bounds);
    for (std::size_t r = lo; r < hi; ++r) {
      auto src = res.x_adv.row(r - lo);
      std::copy(src.begin(), src.end(), adv.row(r).begin());
    }
  }
  return accuracy(predict_labels(model, adv, classes), test.y);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

}  // namespace

ChessboardProfile full_chessboard_profile() {
  ChessboardProfile p;
  p.train.epochs = 100;
  p.train.batch_size = 128;
  p.train.learning_rate = 0.003;
  p.train.momentum = 0.9;
  p.train.weight_decay = 5e-4;
  return p;
}

ChessboardProfile desk_chessboard_profile() {
  ChessboardProfile p = full_chessboard_profile();
  p.board.grid = 5;
  p.board.points_per_square = 60;
  p.width = 32;
  return p;
}

ChessboardProfile desk_noisy_mixup_profile() {
  ChessboardProfile p = desk_chessboard_profile();
  p.mixup_beta = 0.2;
  p.train.epochs = 1000;
  return p;
}

const char* regularizer_name(Regularizer r) {
  switch (r) {
    case Regularizer::kNoWeightDecay:
      return "no_weight_decay";
    case Regularizer::kWeightDecay:
      return "weight_decay";
    case Regularizer::kMixup:
      return "mixup";
    case Regularizer::kNoisyMixup:
      return "noisy_mixup";
  }
  return "?";
}

CellResult run_chessboard_cell(const ChessboardProfile& profile, Regularizer reg, std::uint64_t seed,
                               bool measure) {
  ChessboardSpec board = profile.board;
  board.seed = seed;
  const Dataset data = chessboard(board);
  auto [train_set, test_set] = train_test_split(data, profile.test_fraction, seed);

  const bool noisy = reg == Regularizer::kNoisyMixup;
  const std::size_t outputs = data.num_classes + (noisy ? 1 : 0);
  RngStream init_rng = RngStream(seed).child(1);
  MlpModel model = MlpModel::he_init(residual_mlp_specs(data.dim(), profile.width, profile.depth, outputs), init_rng);

  TrainConfig cfg = profile.train;
  cfg.seed = seed;
  MixupConfig mix;
  switch (reg) {
    case Regularizer::kNoWeightDecay:
      cfg.weight_decay = 0.0;
      break;
    case Regularizer::kWeightDecay:
      break;
    case Regularizer::kMixup:
    case Regularizer::kNoisyMixup:
      cfg.weight_decay = profile.mixup_weight_decay;
      mix.enabled = true;
      mix.beta_a = profile.mixup_beta;
      mix.noisy = noisy;
      break;
  }

  auto trained = train(std::move(model), train_set, cfg, mix);
  CellResult out;
  out.model = std::move(trained.model);
  out.epochs = std::move(trained.epochs);
  out.final_train_loss = out.epochs.empty() ? 0.0 : out.epochs.back().train_loss;
  out.clean_accuracy = evaluate_accuracy(out.model, test_set);
  if (measure) {
    ThicknessSpec spec = profile.thickness;
    spec.seed = seed;
    spec.label_classes = data.num_classes;
    spec.threads = profile.threads;
    const auto th = measure_thickness(out.model, test_set, spec);
    out.thickness = th.mean_thickness;
    out.skipped_segments = th.skipped_segments;
  }
  out.test = std::move(test_set);
  return out;
}

double z_reliance(const MlpModel& model, const Dataset& test) {
  return evaluate_accuracy(model, test) - evaluate_accuracy(model, flip_chessboard_shift(test));
}

double spearman(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "spearman: inputs differ in length");
  require(a.size() >= 2, "spearman: need at least two points");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    Vector r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const Vector ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - mean) * (rb[i] - mean);
    va += (ra[i] - mean) * (ra[i] - mean);
    vb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

std::vector<double> default_transition_shifts() {
  return {0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08};
}

std::vector<std::uint64_t> default_seeds() { return {1, 2, 3, 4, 5}; }

ExperimentReport exp_chessboard_transition(const std::vector<double>& shifts,
                                           const std::vector<std::uint64_t>& seeds,
                                           const ChessboardProfile& profile) {
  require(shifts.size() >= 2, "chessboard_transition: need at least two shifts");
  require(std::is_sorted(shifts.begin(), shifts.end()) &&
              std::adjacent_find(shifts.begin(), shifts.end()) == shifts.end(),
          "chessboard_transition: shifts must be strictly ascending");
  require(!seeds.empty(), "chessboard_transition: need at least one seed");
  const auto start = Clock::now();
  ExperimentReport report;
  report.experiment_id = "chessboard_transition";
  report.config_echo = {{"profile", profile_json(profile)}, {"seeds", seeds_json(seeds)}, {"shifts", shifts}};
  report.verdict_rule =
      "z_reliance(largest shift) - z_reliance(smallest shift) >= 0.3 in a majority of seeds, and "
      "Spearman(shift, mean z_reliance) > 0; the 0.3 gap is a toolkit threshold";

  const std::size_t cells = shifts.size() * seeds.size();
  std::vector<double> zrel(cells, 0.0), acc(cells, 0.0);
  try {
    parallel_for(cells, profile.threads == 0 ? default_threads() : profile.threads, [&](std::size_t k) {
      const std::size_t si = k / shifts.size(), hi = k % shifts.size();
      ChessboardProfile p = profile;
      p.board.z_shift = shifts[hi];
      p.threads = 1;
      const auto cell = run_chessboard_cell(p, Regularizer::kWeightDecay, seeds[si], false);
      zrel[k] = z_reliance(cell.model, cell.test);
      acc[k] = cell.clean_accuracy;
    });
  } catch (const TrainingDiverged& e) {
    report.failure = e.what();
    report.runtime_seconds = seconds_since(start);
    return report;
  }

  Vector mean_z(shifts.size(), 0.0);
  std::size_t gap_hits = 0;
  for (std::size_t si = 0; si < seeds.size(); ++si) {
    for (std::size_t hi = 0; hi < shifts.size(); ++hi) {
      const std::size_t k = si * shifts.size() + hi;
      report.per_seed.push_back(
          {{"seed", seeds[si]}, {"shift", shifts[hi]}, {"clean_accuracy", acc[k]}, {"z_reliance", zrel[k]}});
      mean_z[hi] += zrel[k] / static_cast<double>(seeds.size());
    }
    const double gap = zrel[si * shifts.size() + shifts.size() - 1] - zrel[si * shifts.size()];
    gap_hits += gap >= thresholds::kZRelianceGap;
  }
  const double rho = spearman(shifts, mean_z);
  for (std::size_t hi = 0; hi < shifts.size(); ++hi) {
    std::ostringstream key;
    key << "mean_z_reliance@" << format_double(shifts[hi]);
    report.metrics[key.str()] = mean_z[hi];
  }
  report.metrics["seeds_with_gap"] = static_cast<double>(gap_hits);
  report.metrics["num_seeds"] = static_cast<double>(seeds.size());
  report.metrics["spearman"] = rho;
  report.verdict = majority(gap_hits, seeds.size()) && rho > thresholds::kMinSpearman;
  report.runtime_seconds = seconds_since(start);
  return report;
}

ExperimentReport exp_regularization_ordering(const std::vector<std::uint64_t>& seeds,
                                             const ChessboardProfile& profile) {
  require(!seeds.empty(), "regularization_ordering: need at least one seed");
  const auto start = Clock::now();
  ExperimentReport report;
  report.experiment_id = "regularization_ordering";
  report.config_echo = {{"profile", profile_json(profile)}, {"seeds", seeds_json(seeds)}};
  report.verdict_rule =
      "thickness(mixup) >= thickness(weight_decay) >= thickness(no_weight_decay) in at least 60% of seeds";

  const Regularizer variants[] = {Regularizer::kNoWeightDecay, Regularizer::kWeightDecay, Regularizer::kMixup};
  const std::size_t cells = seeds.size() * 3;
  std::vector<CellResult> results(cells);
  try {
    parallel_for(cells, profile.threads == 0 ? default_threads() : profile.threads, [&](std::size_t k) {
      ChessboardProfile p = profile;
      p.threads = 1;
      results[k] = run_chessboard_cell(p, variants[k % 3], seeds[k / 3]);
    });
  } catch (const TrainingDiverged& e) {
    report.failure = e.what();
    report.runtime_seconds = seconds_since(start);
    return report;
  }

  std::size_t ordered = 0;
  double sums[3] = {0, 0, 0};
  for (std::size_t si = 0; si < seeds.size(); ++si) {
    const double t0 = results[si * 3].thickness, t1 = results[si * 3 + 1].thickness,
                 t2 = results[si * 3 + 2].thickness;
    const bool ok = t2 >= t1 && t1 >= t0;
    ordered += ok;
    for (std::size_t v = 0; v < 3; ++v) {
      const auto& c = results[si * 3 + v];
      sums[v] += c.thickness / static_cast<double>(seeds.size());
      report.per_seed.push_back({{"seed", seeds[si]},
                                 {"variant", regularizer_name(variants[v])},
                                 {"thickness", c.thickness},
                                 {"skipped_segments", c.skipped_segments},
                                 {"clean_accuracy", c.clean_accuracy},
                                 {"final_train_loss", c.final_train_loss},
                                 {"ordering_holds", ok}});
    }
  }
  report.metrics["mean_thickness.no_weight_decay"] = sums[0];
  report.metrics["mean_thickness.weight_decay"] = sums[1];
  report.metrics["mean_thickness.mixup"] = sums[2];
  report.metrics["seeds_ordered"] = static_cast<double>(ordered);
  report.metrics["num_seeds"] = static_cast<double>(seeds.size());
  report.verdict = static_cast<double>(ordered) >=
                   thresholds::kOrderingFraction * static_cast<double>(seeds.size()) - 1e-12;
  report.runtime_seconds = seconds_since(start);
  return report;
}

ExperimentReport exp_noisy_mixup(const std::vector<std::uint64_t>& seeds, const ChessboardProfile& profile) {
  require(!seeds.empty(), "noisy_mixup: need at least one seed");
  const auto start = Clock::now();
  ExperimentReport report;
  report.experiment_id = "noisy_mixup";
  report.config_echo = {{"profile", profile_json(profile)}, {"seeds", seeds_json(seeds)}};
  report.verdict_rule =
      "thickness(noisy_mixup) > thickness(mixup) and corrupted accuracy(noisy_mixup) > corrupted "
      "accuracy(mixup) in a majority of seeds";

  const Regularizer variants[] = {Regularizer::kMixup, Regularizer::kNoisyMixup};
  const std::size_t cells = seeds.size() * 2;
  std::vector<CellResult> results(cells);
  std::vector<double> corrupted(cells), robust(cells);
  try {
    parallel_for(cells, profile.threads == 0 ? default_threads() : profile.threads, [&](std::size_t k) {
      ChessboardProfile p = profile;
      p.threads = 1;
      const std::uint64_t seed = seeds[k / 2];
      results[k] = run_chessboard_cell(p, variants[k % 2], seed);
      const auto& c = results[k];
      corrupted[k] = evaluate_accuracy(c.model, corrupt(c.test, profile.corruption, seed));
      robust[k] = robust_accuracy(c.model, c.test, profile.robust_attack, seed);
    });
  } catch (const TrainingDiverged& e) {
    report.failure = e.what();
    report.runtime_seconds = seconds_since(start);
    return report;
  }

  std::size_t wins = 0;
  std::map<std::string, double> means;
  for (std::size_t si = 0; si < seeds.size(); ++si) {
    const std::size_t m = si * 2, nm = si * 2 + 1;
    const bool ok = results[nm].thickness > results[m].thickness && corrupted[nm] > corrupted[m];
    wins += ok;
    for (std::size_t v = 0; v < 2; ++v) {
      const std::size_t k = si * 2 + v;
      const std::string name = regularizer_name(variants[v]);
      const double n = static_cast<double>(seeds.size());
      means["mean_thickness." + name] += results[k].thickness / n;
      means["mean_clean_accuracy." + name] += results[k].clean_accuracy / n;
      means["mean_corrupted_accuracy." + name] += corrupted[k] / n;
      means["mean_robust_accuracy." + name] += robust[k] / n;
      report.per_seed.push_back({{"seed", seeds[si]},
                                 {"variant", name},
                                 {"thickness", results[k].thickness},
                                 {"skipped_segments", results[k].skipped_segments},
                                 {"clean_accuracy", results[k].clean_accuracy},
                                 {"corrupted_accuracy", corrupted[k]},
                                 {"robust_accuracy", robust[k]},
                                 {"final_train_loss", results[k].final_train_loss},
                                 {"noisy_wins", ok}});
    }
  }
  report.metrics = means;
  report.metrics["seeds_noisy_wins"] = static_cast<double>(wins);
  report.metrics["num_seeds"] = static_cast<double>(seeds.size());
  report.verdict = majority(wins, seeds.size());
  report.runtime_seconds = seconds_since(start);
  return report;
}

ExperimentReport exp_proposition_suite() {
  const auto start = Clock::now();
  ExperimentReport report;
  report.experiment_id = "proposition_suite";
  report.verdict_rule =
      "linear closed form within 0.5%; worst thickness at (0, 1) within one grid cell of the worst margin; "
      "worst-case tilting equals 1 at |w*| and is non-increasing; minimax window measure <= 1/(2c) + one cell";
  bool all = true;

  // Linear closed form: w = (3, 4), b = 0, segment along -w spanning both
  // level sets.
  {
    const Vector w{3.0, 4.0};
    const MlpModel model = linear_logistic_model(w, 0.0);
    const double n = l2_norm(w);
    Segment seg{{10.0 * w[0] / (n * n), 10.0 * w[1] / (n * n)}, {-10.0 * w[0] / (n * n), -10.0 * w[1] / (n * n)}, 0, 1};
    const double measured = segment_thickness(model, seg, 0.0, 0.75, 128);
    const double exact = closed_form_linear_thickness(w, 0.0, 0.75);
    const double rel = std::abs(measured - exact) / exact;
    report.metrics["closed_form.measured"] = measured;
    report.metrics["closed_form.exact"] = exact;
    report.metrics["closed_form.rel_error"] = rel;
    const bool ok = rel <= thresholds::kClosedFormRelTol;
    report.per_seed.push_back({{"check", "closed_form"}, {"value", rel}, {"pass", ok}});
    all = all && ok;
  }

  // Margin as thickness at (0, 1) along attack segments.
  const Dataset blobs = gaussian_blobs({{-3.0, 0.0}, {3.0, 0.0}}, 0.5, 100, 7);
  {
    const LinearSvm svm = fit_linear_svm(blobs);
    Vector neg(svm.w.size());
    for (std::size_t k = 0; k < neg.size(); ++k) neg[k] = -svm.w[k];
    const MlpModel model = linear_logistic_model(neg, -svm.b);
    const AttackConfig attack{Norm::kL2, 10.0, 0.5, 40, std::nullopt, false};
    const MarginResult margins = margin_details(model, blobs, attack, MarginMode::kWorst);
    double worst_thickness = std::numeric_limits<double>::infinity();
    double cell = 0.0;
    for (const auto& seg : margins.segments) {
      const double t = segment_thickness(model, seg, 0.0, 1.0, 128);
      if (t < worst_thickness) {
        worst_thickness = t;
        cell = seg.length() / 127.0;
      }
    }
    const double gap_cells = std::abs(worst_thickness - margins.value) / cell;
    report.metrics["margin_reduction.worst_margin"] = margins.value;
    report.metrics["margin_reduction.worst_thickness"] = worst_thickness;
    report.metrics["margin_reduction.gap_in_cells"] = gap_cells;
    const bool ok = gap_cells <= 1.0;
    report.per_seed.push_back({{"check", "margin_reduction"}, {"value", gap_cells}, {"pass", ok}});
    all = all && ok;
  }

  // Worst-case tilting through the origin.
  {
    const Dataset tilted = gaussian_blobs({{-2.0, -1.0}, {2.0, 1.0}}, 0.4, 40, 11);
    const HardSvm2d svm = hard_svm_2d(tilted);
    double prev = 2.0;
    bool monotone = true;
    double at_one = 0.0;
    for (double f : {1.0, 1.5, 2.0, 4.0}) {
      const double t = worst_case_tilting_2d(tilted, f * svm.norm, 3600);
      if (f == 1.0) at_one = t;
      monotone = monotone && t <= prev + thresholds::kTiltingTol;
      prev = t;
      report.metrics["tilting.T@" + format_double(f)] = t;
    }
    const bool ok = monotone && std::abs(at_one - 1.0) <= thresholds::kTiltingTol;
    report.per_seed.push_back({{"check", "tilting"}, {"value", at_one}, {"pass", ok}});
    all = all && ok;
  }

  // Minimax window bound for a linear and an oscillating profile.
  {
    const std::size_t n = 1024;
    const double cell = 1.0 / static_cast<double>(n - 1);
    Vector lin(n), osc(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double t = static_cast<double>(k) * cell;
      lin[k] = 2.0 * t - 1.0;
      const double tri = t < 1.0 / 3.0 ? 3.0 * t : (t < 2.0 / 3.0 ? 2.0 - 3.0 * t : 3.0 * t - 2.0);
      osc[k] = 2.0 * tri - 1.0;
    }
    bool ok = true;
    double worst_excess = -1.0;
    for (std::size_t c : {2, 4, 8}) {
      const double bound = 1.0 / (2.0 * static_cast<double>(c));
      const double ml = minimax_1d_check(lin, c), mo = minimax_1d_check(osc, c);
      ok = ok && std::abs(ml - bound) <= cell && mo <= bound + cell;
      worst_excess = std::max({worst_excess, ml - bound, mo - bound});
    }
    report.metrics["minimax.worst_excess"] = worst_excess;
    report.per_seed.push_back({{"check", "minimax"}, {"value", worst_excess}, {"pass", ok}});
    all = all && ok;
  }

  report.verdict = all;
  report.runtime_seconds = seconds_since(start);
  return report;
}

nlohmann::json to_json(const ExperimentReport& report) {
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [k, v] : report.metrics) metrics[k] = v;
  nlohmann::json j{{"experiment_id", report.experiment_id},
                   {"config", report.config_echo},
                   {"metrics", metrics},
                   {"per_seed", report.per_seed},
                   {"verdict", report.verdict ? "pass" : "fail"},
                   {"verdict_rule", report.verdict_rule},
                   {"runtime_seconds", report.runtime_seconds}};
  j["failure"] = report.failure ? nlohmann::json(*report.failure) : nlohmann::json(nullptr);
  return j;
}

std::string per_seed_csv(const ExperimentReport& report) {
  std::vector<std::string> columns;
  std::set<std::string> seen;
  for (const auto& row : report.per_seed)
    for (const auto& [k, v] : row.items())
      if (seen.insert(k).second) columns.push_back(k);
  std::ostringstream os;
  for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << columns[c];
  os << '\n';
  for (const auto& row : report.per_seed) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (c) os << ',';
      if (!row.contains(columns[c])) continue;
      const auto& v = row[columns[c]];
      if (v.is_number_float())
        os << format_double(v.get<double>());
      else if (v.is_string())
        os << v.get<std::string>();
      else
        os << v.dump();
    }
    os << '\n';
  }
  return os.str();
}

std::filesystem::path write_report(const ExperimentReport& report, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const fs::path base = root / report.experiment_id;
  fs::path dir = base / utc_timestamp();
  for (int k = 1; fs::exists(dir); ++k) dir = base / (utc_timestamp() + "-" + std::to_string(k));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  auto write = [&](const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
    if (!out) throw IoError("cannot write " + p.string());
  };
  write(dir / "report.json", to_json(report).dump(2) + "\n");
  write(dir / "metrics.csv", per_seed_csv(report));
  return dir;
}

}  // namespace bthick
