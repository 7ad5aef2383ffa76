#include "bthick/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "bthick/attack.hpp"
#include "bthick/datasets.hpp"
#include "bthick/errors.hpp"
#include "bthick/experiments.hpp"
#include "bthick/geometry.hpp"
#include "bthick/model.hpp"
#include "bthick/serialize.hpp"
#include "bthick/train.hpp"

namespace bthick::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Preset = std::map<std::string, std::string>;

// Values are flag names without the leading dashes; they only fill options
// the user left unset on the command line and in the config file.
const std::map<std::string, Preset>& presets() {
  static const std::map<std::string, Preset> table = {
      {"chessboard",
       {{"epochs", "100"},
        {"lr", "0.003"},
        {"batch-size", "128"},
        {"weight-decay", "5e-4"},
        {"momentum", "0.9"},
        {"depth", "9"},
        {"width", "128"},
        {"grid", "9"},
        {"points-per-square", "100"},
        {"square-len", "0.4"},
        {"separation", "0.6"},
        {"z-shift", "0.05"},
        {"pad-dim", "100"}}},
      {"blobs-linear",
       {{"kind", "blobs"},
        {"centers", "-3,0;3,0"},
        {"sigma", "0.5"},
        {"n-per-class", "100"},
        {"depth", "1"},
        {"epochs", "100"},
        {"lr", "0.1"},
        {"weight-decay", "0"},
        {"batch-size", "32"}}},
      {"paper-thickness-defaults",
       {{"alpha", "0"},
        {"beta", "0.75"},
        {"norm", "l2"},
        {"epsilon", "1.0"},
        {"step-size", "0.2"},
        {"steps", "20"},
        {"segments", "320"},
        {"points", "128"}}},
  };
  return table;
}

void apply_preset(CLI::App& sub, const std::string& name) {
  if (name.empty()) return;
  const auto it = presets().find(name);
  if (it == presets().end()) throw ContractViolation("unknown preset '" + name + "'");
  for (const auto& [flag, value] : it->second) {
    CLI::Option* opt = nullptr;
    try {
      opt = sub.get_option("--" + flag);
    } catch (const CLI::OptionNotFound&) {
      continue;  // preset key not used by this subcommand
    }
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

struct BoardFlags {
  ChessboardSpec spec;
  void add(CLI::App& app) {
    app.add_option("--grid", spec.grid, "Squares per side")->capture_default_str();
    app.add_option("--points-per-square", spec.points_per_square)->capture_default_str();
    app.add_option("--square-len", spec.square_len)->capture_default_str();
    app.add_option("--separation", spec.separation)->capture_default_str();
    app.add_option("--z-shift", spec.z_shift)->capture_default_str();
    app.add_option("--pad-dim", spec.pad_dim)->capture_default_str();
    app.add_option("--pad-amplitude", spec.pad_amplitude)->capture_default_str();
  }
};

struct AttackFlags {
  std::string norm = "l2";
  AttackConfig cfg;
  void add(CLI::App& app) {
    app.add_option("--norm", norm, "l2 or linf")->check(CLI::IsMember({"l2", "linf"}))->capture_default_str();
    app.add_option("--epsilon", cfg.epsilon)->capture_default_str();
    app.add_option("--step-size", cfg.step_size)->capture_default_str();
    app.add_option("--steps", cfg.steps)->capture_default_str();
  }
  AttackConfig get() const {
    AttackConfig c = cfg;
    c.norm = norm == "linf" ? Norm::kLinf : Norm::kL2;
    return c;
  }
};

struct Globals {
  std::string output_dir = "runs";
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string preset;
};

Vector parse_doubles(const std::string& text, char sep) {
  Vector out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      require(used == item.size(), "");
    } catch (const std::exception&) {
      throw ContractViolation("cannot parse number '" + item + "'");
    }
  }
  return out;
}

std::vector<Vector> parse_centers(const std::string& text) {
  std::vector<Vector> centers;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) centers.push_back(parse_doubles(item, ','));
  require(centers.size() >= 2, "--centers needs at least two centers separated by ';'");
  return centers;
}

std::vector<LrStep> parse_lr_decay(const std::vector<std::string>& items) {
  std::vector<LrStep> steps;
  for (const auto& item : items) {
    if (item.empty()) continue;  // the effective config writes an unset list as ""
    const auto colon = item.find(':');
    require(colon != std::string::npos, "--lr-decay entries look like epoch:factor, got '" + item + "'");
    const auto values = parse_doubles(item.substr(0, colon) + "," + item.substr(colon + 1), ',');
    require(values[0] >= 0.0, "--lr-decay epoch must be non-negative");
    steps.push_back({static_cast<std::size_t>(values[0]), values[1]});
  }
  return steps;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

// Global options and those of the invoked subcommand, defaults included, in
// the config file grammar.
std::string effective_config(const CLI::App& app, const CLI::App& sub) {
  std::istringstream all(app.config_to_str(true, false));
  std::ostringstream kept;
  const std::string prefix = sub.get_name() + ".";
  for (std::string line; std::getline(all, line);) {
    const std::string key = line.substr(0, line.find('='));
    if (key.find('.') == std::string::npos || key.rfind(prefix, 0) == 0) kept << line << '\n';
  }
  return kept.str();
}

MlpModel load_model(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const CheckpointError& e) {
    if (e.kind() == CheckpointError::Kind::kIo) throw IoError(e.what());
    throw;
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Boundary thickness, margin and tilting toolkit", "bthick"};
  app.set_config("--config", "", "INI file; [section] names match subcommands");
  app.allow_config_extras(false);
  Globals g;
  app.add_option("--output-dir", g.output_dir, "Directory for written artifacts")->capture_default_str();
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker cap; results do not depend on it")->capture_default_str();
  app.add_option("--preset", g.preset, "chessboard, blobs-linear or paper-thickness-defaults");
  app.require_subcommand(1);

  // dataset ---------------------------------------------------------------
  auto* ds = app.add_subcommand("dataset", "Generate a synthetic dataset as CSV");
  std::string ds_kind = "chessboard", ds_out, ds_centers = "-3,0;3,0", ds_corrupt;
  double ds_sigma = 0.5;
  std::size_t ds_n = 100;
  BoardFlags ds_board;
  ds->add_option("--kind", ds_kind)->check(CLI::IsMember({"chessboard", "blobs"}))->capture_default_str();
  ds->add_option("--out", ds_out, "CSV path (default <output-dir>/dataset.csv)");
  ds->add_option("--centers", ds_centers, "Blob centers 'x,y;x,y'")->capture_default_str();
  ds->add_option("--sigma", ds_sigma)->capture_default_str();
  ds->add_option("--n-per-class", ds_n)->capture_default_str();
  ds->add_option("--corrupt", ds_corrupt, "kind:value, e.g. gaussian_noise:0.1");
  ds_board.add(*ds);

  // train -----------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "Train an MLP and write a checkpoint");
  std::string tr_data, tr_eval, tr_model_out;
  std::size_t tr_width = 128, tr_depth = 9, tr_early = 0, tr_cutout = 0, tr_thick_every = 0;
  std::vector<std::string> tr_decay;
  TrainConfig tc;
  MixupConfig mc;
  bool tr_adv = false;
  AttackFlags tr_attack;
  tr_attack.cfg = AdvTrainConfig{}.attack;
  BoardFlags tr_board;
  std::string tr_kind = "chessboard", tr_centers = "-3,0;3,0";
  double tr_sigma = 0.5;
  std::size_t tr_n = 100;
  tr->add_option("--data", tr_data, "Training CSV; omitted means generate from the dataset flags");
  tr->add_option("--kind", tr_kind)->check(CLI::IsMember({"chessboard", "blobs"}))->capture_default_str();
  tr->add_option("--centers", tr_centers)->capture_default_str();
  tr->add_option("--sigma", tr_sigma)->capture_default_str();
  tr->add_option("--n-per-class", tr_n)->capture_default_str();
  tr_board.add(*tr);
  tr->add_option("--eval", tr_eval, "Evaluation CSV");
  tr->add_option("--model-out", tr_model_out, "Checkpoint path (default <output-dir>/model.bthk)");
  tr->add_option("--width", tr_width)->capture_default_str();
  tr->add_option("--depth", tr_depth)->capture_default_str();
  tr->add_option("--epochs", tc.epochs)->capture_default_str();
  tr->add_option("--batch-size", tc.batch_size)->capture_default_str();
  tr->add_option("--lr", tc.learning_rate)->capture_default_str();
  tr->add_option("--lr-decay", tr_decay, "epoch:factor entries")->delimiter(',');
  tr->add_option("--momentum", tc.momentum)->capture_default_str();
  tr->add_option("--weight-decay", tc.weight_decay)->capture_default_str();
  tr->add_option("--l1", tc.l1_coeff)->capture_default_str();
  tr->add_option("--early-stop", tr_early, "Stop after this epoch (0 = off)")->capture_default_str();
  tr->add_flag("--mixup", mc.enabled);
  tr->add_option("--mixup-beta", mc.beta_a)->capture_default_str();
  tr->add_flag("--noisy-mixup", mc.noisy);
  tr->add_option("--noise-prob", mc.noise_prob)->capture_default_str();
  tr->add_flag("--adversarial", tr_adv);
  tr_attack.add(*tr);
  tr->add_option("--cutout", tr_cutout, "Cutout window (0 = off)")->capture_default_str();
  tr->add_option("--thickness-every", tr_thick_every, "Measure thickness every N epochs on --eval")
      ->capture_default_str();

  // measure ---------------------------------------------------------------
  auto* me = app.add_subcommand("measure", "Measure boundary thickness");
  std::string me_model, me_data, me_sampler = "adversarial", me_quad = "interpolated", me_csv;
  ThicknessSpec ts;
  AttackFlags me_attack;
  me->add_option("--model", me_model)->required();
  me->add_option("--data", me_data)->required();
  me->add_option("--alpha", ts.alpha)->capture_default_str();
  me->add_option("--beta", ts.beta)->capture_default_str();
  me->add_option("--segments", ts.num_segments)->capture_default_str();
  me->add_option("--points", ts.integration_points)->capture_default_str();
  me->add_option("--sampler", me_sampler)->check(CLI::IsMember({"adversarial", "random_pairs"}))->capture_default_str();
  me->add_option("--quadrature", me_quad)->check(CLI::IsMember({"interpolated", "point_count"}))->capture_default_str();
  me->add_option("--label-classes", ts.label_classes, "Mask outputs beyond this count (0 = all)")->capture_default_str();
  me->add_option("--csv-out", me_csv, "Also write a one-row CSV summary");
  me_attack.add(*me);

  // attack ----------------------------------------------------------------
  auto* at = app.add_subcommand("attack", "Run PGD on every row of a dataset");
  std::string at_model, at_data, at_out;
  std::optional<std::size_t> at_target;
  bool at_random = false;
  AttackFlags at_attack;
  at->add_option("--model", at_model)->required();
  at->add_option("--data", at_data)->required();
  at->add_option("--out", at_out, "Adversarial CSV (default <output-dir>/adversarial.csv)");
  at->add_option("--target", at_target, "Targeted class");
  at->add_flag("--random-start", at_random);
  at_attack.add(*at);

  // experiment ------------------------------------------------------------
  auto* ex = app.add_subcommand("experiment", "Run a canned experiment");
  std::string ex_name, ex_profile = "desk";
  std::vector<std::uint64_t> ex_seeds = default_seeds();
  std::vector<double> ex_shifts = default_transition_shifts();
  ChessboardProfile ex_p = desk_chessboard_profile();
  std::optional<std::size_t> ex_grid, ex_pps, ex_width, ex_depth, ex_epochs, ex_segments;
  std::optional<double> ex_lr, ex_mixup_beta;
  ex->add_option("name", ex_name, "transition, ordering, noisy-mixup or propositions")
      ->required()
      ->check(CLI::IsMember({"transition", "ordering", "noisy-mixup", "propositions"}));
  ex->add_option("--profile", ex_profile, "desk or full")->check(CLI::IsMember({"desk", "full"}))->capture_default_str();
  ex->add_option("--seeds", ex_seeds)->delimiter(',')->capture_default_str();
  ex->add_option("--shifts", ex_shifts)->delimiter(',')->capture_default_str();
  ex->add_option("--grid", ex_grid);
  ex->add_option("--points-per-square", ex_pps);
  ex->add_option("--width", ex_width);
  ex->add_option("--depth", ex_depth);
  ex->add_option("--epochs", ex_epochs);
  ex->add_option("--segments", ex_segments);
  ex->add_option("--lr", ex_lr);
  ex->add_option("--mixup-beta", ex_mixup_beta);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    err << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    err << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    apply_preset(*sub, g.preset);
    set_default_threads(g.threads == 0 ? 1 : g.threads);
    const std::string config = effective_config(app, *sub);
    err << "# effective config\n" << config;
    const fs::path out_dir = g.output_dir;

    if (sub == ds) {
      Dataset data;
      if (ds_kind == "chessboard") {
        ds_board.spec.seed = g.seed;
        data = chessboard(ds_board.spec);
      } else {
        data = gaussian_blobs(parse_centers(ds_centers), ds_sigma, ds_n, g.seed);
      }
      if (!ds_corrupt.empty()) data = corrupt(data, parse_corruption(ds_corrupt), g.seed);
      const fs::path path = ds_out.empty() ? out_dir / "dataset.csv" : fs::path(ds_out);
      write_text(path, dataset_to_csv(data));
      out << json{{"path", path.string()},
                  {"rows", data.size()},
                  {"dim", data.dim()},
                  {"num_classes", data.num_classes},
                  {"config", config}}
                 .dump(2)
          << '\n';
      return 0;
    }

    if (sub == tr) {
      Dataset data;
      if (!tr_data.empty()) {
        data = read_dataset_csv(tr_data);
      } else if (tr_kind == "chessboard") {
        tr_board.spec.seed = g.seed;
        data = chessboard(tr_board.spec);
      } else {
        data = gaussian_blobs(parse_centers(tr_centers), tr_sigma, tr_n, g.seed);
      }
      std::optional<Dataset> eval;
      if (!tr_eval.empty()) eval = read_dataset_csv(tr_eval);
      tc.seed = g.seed;
      tc.lr_decay = parse_lr_decay(tr_decay);
      if (tr_early > 0) tc.early_stop_epoch = tr_early;
      if (mc.noisy) mc.enabled = true;
      AdvTrainConfig adv;
      adv.enabled = tr_adv;
      adv.attack = tr_attack.get();
      adv.attack.random_start = true;
      CutoutConfig cut{tr_cutout > 0, tr_cutout};
      const std::size_t outputs = data.num_classes + (mc.noisy ? 1 : 0);
      RngStream init_rng = RngStream(g.seed).child(1);
      MlpModel model = MlpModel::he_init(residual_mlp_specs(data.dim(), tr_width, tr_depth, outputs), init_rng);

      const fs::path ckpt = tr_model_out.empty() ? out_dir / "model.bthk" : fs::path(tr_model_out);
      write_text(out_dir / "effective_config.ini", config);
      TrainOptions opts;
      opts.log = &err;
      if (eval) opts.eval = &*eval;
      if (tr_thick_every > 0) {
        require(eval.has_value(), "--thickness-every needs --eval");
        opts.thickness_every = tr_thick_every;
        ThicknessSpec spec;
        spec.seed = g.seed;
        spec.label_classes = data.num_classes;
        const Dataset* ev = &*eval;
        opts.thickness_hook = [spec, ev](const MlpModel& m) { return measure_thickness(m, *ev, spec).mean_thickness; };
      }
      auto result = train(std::move(model), data, tc, mc, adv, cut, opts);
      if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
      try {
        save_checkpoint(result.model, ckpt);
      } catch (const CheckpointError& e) {
        throw IoError(e.what());
      }
      write_text(out_dir / "metrics.csv", metrics_csv(result.epochs));
      json summary{{"checkpoint", ckpt.string()},
                   {"metrics_csv", (out_dir / "metrics.csv").string()},
                   {"epochs", result.epochs.size()},
                   {"final_train_loss", result.epochs.empty() ? 0.0 : result.epochs.back().train_loss},
                   {"final_train_acc", result.epochs.empty() ? 0.0 : result.epochs.back().train_acc},
                   {"train_accuracy", evaluate_accuracy(result.model, data)},
                   {"config", config}};
      if (eval) summary["eval_accuracy"] = evaluate_accuracy(result.model, *eval);
      out << summary.dump(2) << '\n';
      return 0;
    }

    if (sub == me) {
      const MlpModel model = load_model(me_model);
      const Dataset data = read_dataset_csv(me_data);
      ts.seed = g.seed;
      ts.threads = g.threads;
      ts.quadrature = me_quad == "point_count" ? Quadrature::kPointCount : Quadrature::kInterpolated;
      if (me_sampler == "random_pairs")
        ts.sampler = RandomPairSampler{};
      else
        ts.sampler = AdversarialSampler{me_attack.get()};
      const auto result = measure_thickness(model, data, ts);
      if (!me_csv.empty()) write_text(me_csv, thickness_csv(result));
      json j = to_json(result);
      j["config"] = config;
      out << j.dump(2) << '\n';
      return 0;
    }

    if (sub == at) {
      const MlpModel model = load_model(at_model);
      const Dataset data = read_dataset_csv(at_data);
      AttackConfig cfg = at_attack.get();
      cfg.random_start = at_random;
      cfg.target = at_target;
      const auto sources = predict_labels(model, data.x);
      std::vector<std::size_t> targets;
      if (at_target) {
        for (auto s : sources) require(s != *at_target, "--target equals the predicted class of some row");
      }
      const auto res = pgd_batch(model, data.x, sources, cfg, targets, RngStream(g.seed), data.bounds);
      const auto after = predict_labels(model, res.x_adv);
      std::size_t flipped = 0, degenerate = 0;
      double dist = 0.0;
      for (std::size_t r = 0; r < data.size(); ++r) {
        flipped += after[r] != sources[r];
        degenerate += res.degenerate[r];
        Vector d(data.dim());
        for (std::size_t c = 0; c < d.size(); ++c) d[c] = res.x_adv(r, c) - data.x(r, c);
        dist += l2_norm(d) / static_cast<double>(data.size());
      }
      Dataset adv_data = data;
      adv_data.x = res.x_adv;
      const fs::path path = at_out.empty() ? out_dir / "adversarial.csv" : fs::path(at_out);
      write_text(path, dataset_to_csv(adv_data));
      out << json{{"path", path.string()},
                  {"rows", data.size()},
                  {"success_rate", static_cast<double>(flipped) / static_cast<double>(data.size())},
                  {"degenerate", degenerate},
                  {"mean_l2_distance", dist},
                  {"accuracy_after", accuracy(after, data.y)},
                  {"config", config}}
                 .dump(2)
          << '\n';
      return 0;
    }

    if (sub == ex) {
      ChessboardProfile p = ex_profile == "full"      ? full_chessboard_profile()
                            : ex_name == "noisy-mixup" ? desk_noisy_mixup_profile()
                                                       : desk_chessboard_profile();
      if (ex_grid) p.board.grid = *ex_grid;
      if (ex_pps) p.board.points_per_square = *ex_pps;
      if (ex_width) p.width = *ex_width;
      if (ex_depth) p.depth = *ex_depth;
      if (ex_epochs) p.train.epochs = *ex_epochs;
      if (ex_segments) p.thickness.num_segments = *ex_segments;
      if (ex_lr) p.train.learning_rate = *ex_lr;
      if (ex_mixup_beta) p.mixup_beta = *ex_mixup_beta;
      p.threads = g.threads;
      ExperimentReport report;
      if (ex_name == "transition")
        report = exp_chessboard_transition(ex_shifts, ex_seeds, p);
      else if (ex_name == "ordering")
        report = exp_regularization_ordering(ex_seeds, p);
      else if (ex_name == "noisy-mixup")
        report = exp_noisy_mixup(ex_seeds, p);
      else
        report = exp_proposition_suite();
      report.config_echo["cli"] = config;
      const fs::path dir = write_report(report, out_dir);
      err << report.experiment_id << ": " << (report.verdict ? "PASS" : "FAIL") << " (" << dir.string() << ")\n";
      out << to_json(report).dump(2) << '\n';
      return report.failure ? 1 : 0;
    }
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return 2;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << '\n';
    return 2;
  } catch (const ContractViolation& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace bthick::cli
