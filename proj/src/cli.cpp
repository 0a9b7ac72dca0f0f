#include "menode/cli.hpp"

#include "menode/calibration.hpp"
#include "menode/checkpoint.hpp"
#include "menode/config.hpp"
#include "menode/dataset.hpp"
#include "menode/error.hpp"
#include "menode/metrics.hpp"
#include "menode/random.hpp"
#include "menode/sde.hpp"
#include "menode/trainer.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

namespace menode {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const IntegrityError*>(&error)) return kExitIntegrity;
  if (dynamic_cast<const DivergenceError*>(&error) ||
      dynamic_cast<const TrainingError*>(&error) ||
      dynamic_cast<const CalibrationError*>(&error) ||
      dynamic_cast<const DomainError*>(&error)) {
    return kExitNumeric;
  }
  if (dynamic_cast<const ParseError*>(&error) || dynamic_cast<const DimensionError*>(&error)) {
    return kExitData;
  }
  if (dynamic_cast<const ContractError*>(&error) || dynamic_cast<const CLI::Error*>(&error)) {
    return kExitUsage;
  }
  return kExitFailure;
}

namespace {

PanelDataset load_data(const std::string& path) {
  if (!fs::exists(path)) throw ContractError("data file not found: " + path);
  return read_csv(fs::path(path));
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ContractError("cannot write " + path);
  return out;
}

PanelDataset select_subjects(const PanelDataset& data, const std::string& which,
                             double train_frac) {
  if (which == "all") return data;
  SubjectSplit split = split_subjects(data, train_frac);
  return which == "train" ? std::move(split.train) : std::move(split.test);
}

struct ModelFlags {
  bool identity_mode = false;
  std::optional<std::size_t> latent_dim;
  std::optional<std::size_t> effect_dim;
  std::optional<std::vector<std::size_t>> hidden;
  std::optional<std::size_t> substeps;
  std::optional<double> obs_sigma;

  void add_to(CLI::App* app) {
    app->add_flag("--identity-mode", identity_mode,
                  "Identity encoder/decoder with Gamma(z) = diag(z)");
    app->add_option("--latent-dim", latent_dim, "Latent dimension p");
    app->add_option("--effect-dim", effect_dim, "Mixed-effect dimension m");
    app->add_option("--hidden", hidden, "Hidden widths for every MLP")->delimiter(',');
    app->add_option("--substeps", substeps, "Solver steps between observations");
    app->add_option("--obs-sigma", obs_sigma, "Observation noise scale");
  }

  // Defaults, then the config file, then explicit flags.
  ModelConfig build(const PanelDataset& data, const std::vector<KeyValue>& file) const {
    ModelConfig c = identity_mode ? ModelConfig::toy() : ModelConfig{};
    c.obs_dim = data.obs_dim();
    c.latent_dim = data.obs_dim();
    c.effect_dim = data.obs_dim();
    c.obs_window = data.split();
    for (const auto& [k, v] : file) apply_setting(c, k, v);
    if (identity_mode) c.identity_mode = true;
    if (latent_dim) c.latent_dim = *latent_dim;
    if (effect_dim) c.effect_dim = *effect_dim;
    if (hidden) c.encoder_hidden = c.gamma_hidden = c.decoder_hidden = *hidden;
    if (substeps) c.substeps = *substeps;
    if (obs_sigma) c.obs_sigma = *obs_sigma;
    c.validate();
    return c;
  }
};

std::vector<KeyValue> read_config(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open config file " + path);
  auto values = parse_key_values(in);
  RunConfig probe;
  apply_settings(probe, values);  // rejects unknown keys and bad types
  return values;
}

template <class T>
void apply_file(T& target, const std::vector<KeyValue>& file) {
  for (const auto& [k, v] : file) apply_setting(target, k, v);
}

// ---- generate ---------------------------------------------------------------

struct GenerateArgs {
  std::string preset = "toy";
  std::size_t n_groups = 1;
  std::optional<std::size_t> n_subjects;
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
};

void run_generate(const GenerateArgs& a, std::ostream& out) {
  const auto file = read_config(a.config);
  PanelDataset data;
  if (a.preset == "toy") {
    ToySpec spec;
    apply_file(spec, file);
    if (a.n_subjects) spec.n_subjects = *a.n_subjects;
    data = generate_toy(spec, a.seed);
  } else {
    data = generate_grouped_2d(Grouped2dSpec::standard(a.n_groups, a.n_subjects.value_or(200)),
                               a.seed);
  }
  auto file_out = open_out(a.out);
  write_csv(data, file_out);
  out << "wrote " << data.size() << " subjects to " << a.out << '\n';
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::string log;
  std::string config;
  std::string resume;
  std::uint64_t seed = 0;
  double train_frac = 0.8;
  ModelFlags model;
  std::optional<std::size_t> n_z0, n_w, accept_k, epochs, batch_size;
  std::optional<double> lr, kl_weight;
};

void run_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const PanelDataset all = load_data(a.data);
  const PanelDataset train_set = split_subjects(all, a.train_frac).train;
  const auto file = read_config(a.config);

  std::optional<Checkpoint> resumed;
  if (!a.resume.empty()) resumed = load_checkpoint(a.resume);

  TrainConfig tc = resumed ? resumed->train : TrainConfig{};
  if (!resumed) apply_file(tc, file);
  tc.seed = a.seed;
  if (resumed && resumed->train.seed != a.seed) {
    throw ContractError("--seed " + std::to_string(a.seed) + " differs from the checkpoint seed " +
                        std::to_string(resumed->train.seed));
  }
  if (!resumed) {
    if (a.n_z0) tc.n_z0 = *a.n_z0;
    if (a.n_w) tc.n_w = *a.n_w;
    if (a.accept_k) tc.accept_k = *a.accept_k;
    if (a.batch_size) tc.batch_size = *a.batch_size;
    if (a.lr) tc.learning_rate = *a.lr;
    if (a.kl_weight) tc.kl_weight = *a.kl_weight;
  }
  if (a.epochs) tc.epochs = *a.epochs;
  tc.validate();

  std::optional<MeNodeModel> fresh;
  if (!resumed) fresh.emplace(a.model.build(all, file), a.seed);
  MeNodeModel& model = resumed ? resumed->model : *fresh;
  Trainer trainer = resumed ? Trainer(model, tc, resumed->optimizer, resumed->epochs_done)
                            : Trainer(model, tc);

  std::ofstream log_file;
  std::ostream* log = &out;
  if (!a.log.empty()) {
    if (a.log == a.out) throw ContractError("--log and --out must differ");
    // a resumed run continues the existing log
    const auto mode = std::ios::binary | (resumed ? std::ios::app : std::ios::trunc);
    log_file.open(a.log, mode);
    if (!log_file) throw ContractError("cannot write " + a.log);
    log = &log_file;
  }

  double seconds = 0.0;
  std::size_t ran = 0;
  trainer.train(train_set, log, [&](const EpochStats& s) {
    save_checkpoint(a.out, model, tc, trainer.optimizer(), trainer.epochs_done());
    seconds += s.seconds;
    ++ran;
  });
  if (ran == 0) save_checkpoint(a.out, model, tc, trainer.optimizer(), trainer.epochs_done());
  if (ran > 0) {
    const double per_epoch = seconds / static_cast<double>(ran);
    err << "seconds per epoch: " << per_epoch << '\n';
    if (per_epoch > 10.0) err << "warning: epoch time above the 10 s budget\n";
  }
}

// ---- calibrate --------------------------------------------------------------

struct CalibrateArgs {
  std::string model;
  std::string data;
  std::string out;
  std::string subjects = "test";
  double train_frac = 0.8;
  std::size_t n_candidates = 256;
  bool search_z0 = false;
  std::uint64_t seed = 0;
};

void run_calibrate(const CalibrateArgs& a, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.model);
  const PanelDataset data = select_subjects(load_data(a.data), a.subjects, a.train_frac);
  const auto& model = ck.model;
  const TimeGrid grid_obs = data.observed_grid(model.config().substeps);
  const TimeGrid grid_full = data.full_grid(model.config().substeps);

  auto file = open_out(a.out);
  file << "subject_id,group_id,time,split,calibration_mse";
  for (std::size_t j = 0; j < model.config().effect_dim; ++j) file << ",w_" << j;
  for (std::size_t j = 0; j < data.obs_dim(); ++j) file << ",pred_x_" << j;
  file << '\n';
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const CalibrationResult calib = calibrate(model, data.observed(i), grid_obs,
                                              a.n_candidates, derive_seed(a.seed, i), a.search_z0);
    const Series pred = predict(model, calib, grid_full);
    total += calib.mse;
    for (std::size_t t = 0; t < grid_full.size(); ++t) {
      file << data.info(i).subject_id << ',' << data.info(i).group_id << ','
           << format_double(grid_full[t]) << ',' << (t < data.split() ? "interp" : "extrap")
           << ',' << format_double(calib.mse);
      for (double w : calib.w.values()) file << ',' << format_double(w);
      for (double x : pred.row(t)) file << ',' << format_double(x);
      file << '\n';
    }
  }
  out << "calibrated " << data.size() << " subjects, mean observed-window MSE "
      << format_double(data.empty() ? 0.0 : total / static_cast<double>(data.size())) << '\n';
}

// ---- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string model;
  std::string data;
  std::string out_dir;
  std::string subjects = "test";
  std::string statistic = "per-step";
  double train_frac = 0.8;
  EvalOptions options;
  std::size_t sde_paths = 10000;
};

void write_moment_csv(const MomentCurve& sde, const MomentCurve& meode, std::ostream& out) {
  out << "time,sde_mean,sde_var,meode_mean,meode_var\n";
  for (std::size_t t = 0; t < sde.times.size(); ++t) {
    out << format_double(sde.times[t]) << ',' << format_double(sde.mean[t]) << ','
        << format_double(sde.variance[t]) << ',' << format_double(meode.mean[t]) << ','
        << format_double(meode.variance[t]) << '\n';
  }
}

void run_evaluate(EvaluateArgs a, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.model);
  const PanelDataset data = select_subjects(load_data(a.data), a.subjects, a.train_frac);
  a.options.statistic = a.statistic == "aggregate" ? PermutationStatistic::aggregate
                                                   : PermutationStatistic::per_step;
  const EvalReport report = evaluate(ck.model, data, a.options);
  write_report(report, out);

  if (a.out_dir.empty()) return;
  fs::create_directories(a.out_dir);
  {
    auto f = open_out((fs::path(a.out_dir) / "report.txt").string());
    write_report(report, f);
  }
  {
    auto f = open_out((fs::path(a.out_dir) / "per_step_mse.csv").string());
    write_step_csv(report, f);
  }
  if (report.permutation) {
    auto f = open_out((fs::path(a.out_dir) / "p_values.csv").string());
    write_pvalue_csv(*report.permutation, data.times(), f);
  }
  const auto& cfg = ck.model.config();
  if (cfg.identity_mode && cfg.latent_dim == 1 && cfg.gamma == GammaKind::state) {
    // learned toy dynamics dz = beta z dt + sigma_b z o dW against the ME-ODE
    const double beta = report.params.estimated.beta.at(0);
    const double sigma_b = report.params.estimated.sigma_b.at(0);
    const TimeGrid grid(data.times(), 100);
    const ScalarField f = [beta](double z, double) { return beta * z; };
    const ScalarField g = [sigma_b](double z, double) { return sigma_b * z; };
    const auto sde = stratonovich_ensemble(f, g, report.params.estimated.mu, grid, a.sde_paths,
                                           derive_seed(a.options.seed, 1));
    const auto meode = wong_zakai_ensemble(f, g, report.params.estimated.mu, grid, a.sde_paths,
                                           derive_seed(a.options.seed, 2));
    auto file = open_out((fs::path(a.out_dir) / "moments.csv").string());
    write_moment_csv(sde, meode, file);
  }
}

// ---- sde-compare ------------------------------------------------------------

struct SdeArgs {
  std::string f = "linear:0.3";
  std::string g = "linear:0.01";
  double z0 = 1.3;
  double t_max = 3.0;
  std::size_t n_times = 4;
  std::size_t substeps = 300;
  std::size_t n_paths = 10000;
  std::uint64_t seed = 0;
  std::string out;
};

void run_sde_compare(const SdeArgs& a, std::ostream& out) {
  const FieldSpec f = FieldSpec::parse(a.f);
  const FieldSpec g = FieldSpec::parse(a.g);
  if (a.n_times < 2) throw ContractError("--n-times must be >= 2");
  const TimeGrid grid = TimeGrid::uniform(0.0, a.t_max, a.n_times, a.substeps);
  const auto sde = stratonovich_ensemble(f.field(), g.field(), a.z0, grid, a.n_paths,
                                         derive_seed(a.seed, 1));
  const auto meode = wong_zakai_ensemble(f.field(), g.field(), a.z0, grid, a.n_paths,
                                         derive_seed(a.seed, 2));

  std::ostringstream table;
  table << "time,sde_mean,sde_var,sde_se,meode_mean,meode_var,meode_se,"
           "analytic_sde_mean,analytic_meode_mean,mean_gap\n";
  auto opt = [](const std::optional<Moments>& m) {
    return m ? format_double(m->mean) : std::string();
  };
  for (std::size_t t = 0; t < grid.size(); ++t) {
    table << format_double(grid[t]) << ',' << format_double(sde.mean[t]) << ','
          << format_double(sde.variance[t]) << ',' << format_double(sde.standard_error(t))
          << ',' << format_double(meode.mean[t]) << ',' << format_double(meode.variance[t])
          << ',' << format_double(meode.standard_error(t)) << ','
          << opt(analytic_stratonovich(f, g, a.z0, grid[t])) << ','
          << opt(analytic_wong_zakai(f, g, a.z0, grid[t])) << ','
          << format_double(meode.mean[t] - sde.mean[t]) << '\n';
  }
  out << table.str();
  if (sde.n_diverged || meode.n_diverged) {
    out << "# diverged paths: sde " << sde.n_diverged << ", meode " << meode.n_diverged << '\n';
  }
  if (!a.out.empty()) {
    auto file = open_out(a.out);
    file << table.str();
  }
}

// ---- gradcheck --------------------------------------------------------------

struct GradcheckArgs {
  std::string data;
  std::string model;
  std::size_t subject = 0;
  ModelFlags flags;
  std::size_t n_z0 = 3;
  std::size_t n_w = 3;
  std::size_t accept_k = 1;
  std::uint64_t seed = 0;
  std::optional<double> tolerance;
};

int run_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  const PanelDataset data = load_data(a.data);
  if (a.subject >= data.size()) throw ContractError("--subject outside the dataset");
  std::optional<MeNodeModel> model;
  if (!a.model.empty()) {
    model.emplace(load_checkpoint(a.model).model);
  } else {
    model.emplace(a.flags.build(data, {}), a.seed);
  }
  TrainConfig tc;
  tc.n_z0 = a.n_z0;
  tc.n_w = a.n_w;
  tc.accept_k = a.accept_k;
  tc.seed = a.seed;
  tc.validate();
  const auto& cfg = model->config();
  const NoiseBank bank = NoiseBank::draw(tc.n_z0, tc.n_w, cfg.latent_dim, cfg.effect_dim,
                                         derive_seed(a.seed, 0, a.subject));
  const GradientCheck check = elbo_gradient_check(*model, data.observed(a.subject),
                                                  data.observed_grid(cfg.substeps), tc, bank);
  for (std::size_t i = 0; i < check.group_max_error.size(); ++i) {
    out << model->parameter_names()[i] << ' ' << format_double(check.group_max_error[i]) << '\n';
  }
  out << "max_relative_error " << format_double(check.max_relative_error) << " over "
      << check.n_checked << " scalars\n";
  const double tol = a.tolerance.value_or(cfg.identity_mode ? 1e-3 : 1e-2);
  if (check.max_relative_error >= tol) {
    out << "FAIL: above tolerance " << format_double(tol) << '\n';
    return kExitFailure;
  }
  out << "PASS\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mixed-effects neural ODE toolkit"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic panel dataset as CSV");
  g->add_option("--preset", gen.preset)->check(CLI::IsMember({"toy", "grouped"}));
  g->add_option("--n-groups", gen.n_groups)->check(CLI::IsMember({1, 4, 8}));
  g->add_option("--n-subjects", gen.n_subjects);
  g->add_option("--seed", gen.seed)->required();
  g->add_option("--out", gen.out)->required();
  g->add_option("--config", gen.config)->check(CLI::ExistingFile);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Fit the model; writes a checkpoint and a log");
  t->add_option("--data", tr.data)->required();
  t->add_option("--out", tr.out)->required();
  t->add_option("--log", tr.log);
  t->add_option("--config", tr.config)->check(CLI::ExistingFile);
  t->add_option("--resume", tr.resume)->check(CLI::ExistingFile);
  t->add_option("--seed", tr.seed)->required();
  t->add_option("--train-frac", tr.train_frac);
  tr.model.add_to(t);
  t->add_option("--n-z0", tr.n_z0);
  t->add_option("--n-w", tr.n_w);
  t->add_option("--accept-k", tr.accept_k);
  t->add_option("--epochs", tr.epochs);
  t->add_option("--batch-size", tr.batch_size);
  t->add_option("--lr", tr.lr);
  t->add_option("--kl-weight", tr.kl_weight);

  CalibrateArgs ca;
  auto* c = app.add_subcommand("calibrate", "Per-subject calibration and predictions");
  c->add_option("--model", ca.model)->required()->check(CLI::ExistingFile);
  c->add_option("--data", ca.data)->required();
  c->add_option("--out", ca.out)->required();
  c->add_option("--subjects", ca.subjects)->check(CLI::IsMember({"train", "test", "all"}));
  c->add_option("--train-frac", ca.train_frac);
  c->add_option("--n-candidates", ca.n_candidates);
  c->add_flag("--search-z0", ca.search_z0);
  c->add_option("--seed", ca.seed);

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score a trained model; text report and CSVs");
  e->add_option("--model", ev.model)->required()->check(CLI::ExistingFile);
  e->add_option("--data", ev.data)->required();
  e->add_option("--out-dir", ev.out_dir);
  e->add_option("--subjects", ev.subjects)->check(CLI::IsMember({"train", "test", "all"}));
  e->add_option("--train-frac", ev.train_frac);
  e->add_option("--n-candidates", ev.options.n_candidates);
  e->add_option("--ensemble-samples", ev.options.ensemble_samples);
  e->add_option("--n-perms", ev.options.n_perms);
  e->add_option("--statistic", ev.statistic)->check(CLI::IsMember({"per-step", "aggregate"}));
  e->add_option("--sde-paths", ev.sde_paths);
  e->add_option("--seed", ev.options.seed);

  SdeArgs sd;
  auto* s = app.add_subcommand("sde-compare", "Stratonovich SDE vs ME-ODE ensemble moments");
  s->add_option("--f", sd.f, "Drift: linear:a or const:c");
  s->add_option("--g", sd.g, "Diffusion: linear:a or const:c");
  s->add_option("--z0", sd.z0);
  s->add_option("--t-max", sd.t_max);
  s->add_option("--n-times", sd.n_times);
  s->add_option("--substeps", sd.substeps);
  s->add_option("--n-paths", sd.n_paths);
  s->add_option("--seed", sd.seed);
  s->add_option("--out", sd.out);

  GradcheckArgs gc;
  auto* k = app.add_subcommand("gradcheck", "Tape gradients against finite differences");
  k->add_option("--data", gc.data)->required();
  k->add_option("--model", gc.model)->check(CLI::ExistingFile);
  k->add_option("--subject", gc.subject);
  gc.flags.add_to(k);
  k->add_option("--n-z0", gc.n_z0);
  k->add_option("--n-w", gc.n_w);
  k->add_option("--accept-k", gc.accept_k);
  k->add_option("--seed", gc.seed);
  k->add_option("--tolerance", gc.tolerance);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& h) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& p) {
    err << "usage error: " << p.what() << '\n';
    if (const auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front()) {
      err << sub->help();
    }
    return kExitUsage;
  }

  try {
    if (g->parsed()) run_generate(gen, out);
    if (t->parsed()) run_train(tr, out, err);
    if (c->parsed()) run_calibrate(ca, out);
    if (e->parsed()) run_evaluate(ev, out);
    if (s->parsed()) run_sde_compare(sd, out);
    if (k->parsed()) return run_gradcheck(gc, out);
  } catch (const ParseError& p) {
    err << "data error";
    if (p.line()) err << " (line " << p.line() << ')';
    err << ": " << p.what() << '\n';
    return kExitData;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return exit_code_for(ex);
  }
  return kExitOk;
}

}  // namespace menode
