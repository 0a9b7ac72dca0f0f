// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any fails. Pass criterion numbers as arguments to run
// a subset.

#include "menode/calibration.hpp"
#include "menode/checkpoint.hpp"
#include "menode/cli.hpp"
#include "menode/dataset.hpp"
#include "menode/metrics.hpp"
#include "menode/ops.hpp"
#include "menode/random.hpp"
#include "menode/sde.hpp"
#include "menode/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace menode;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// toy runs are cached and shared between checks

struct ToyRun {
  MeNodeModel model{ModelConfig::toy()};
  PanelDataset test;
  RecoveredParams params;
  double recon = 0.0;
  double seconds_per_epoch = 0.0;
};

ToyRun train_toy(std::uint64_t seed, std::size_t n_z0, std::size_t n_w) {
  const auto split = split_subjects(generate_toy(ToySpec{}, seed), 0.8);
  ToyRun run;
  TrainConfig tc;
  tc.n_z0 = n_z0;
  tc.n_w = n_w;
  tc.accept_k = 1;
  tc.learning_rate = 1e-2;
  tc.batch_size = 16;
  tc.epochs = 5;
  tc.seed = seed;
  const TrainReport report = train(run.model, split.train, tc);
  for (const auto& e : report.epochs) run.seconds_per_epoch += e.seconds / report.epochs.size();
  run.params = report.final_params;
  run.test = split.test;
  run.recon = reconstruction_mse(run.model, run.test, n_z0, n_w, derive_seed(seed, 0xE7A1));
  return run;
}

std::map<std::pair<std::uint64_t, std::size_t>, ToyRun> toy_cache;

const ToyRun& toy_run(std::uint64_t seed, std::size_t n_z0, std::size_t n_w) {
  const auto key = std::make_pair(seed, n_z0 * 1000 + n_w);
  auto it = toy_cache.find(key);
  if (it == toy_cache.end()) it = toy_cache.emplace(key, train_toy(seed, n_z0, n_w)).first;
  return it->second;
}

Outcome toy_recovery() {
  std::vector<double> beta;
  std::vector<double> mu;
  std::vector<double> recon;
  double slowest = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const ToyRun& run = toy_run(seed, 10, 10);
    beta.push_back(run.params.beta[0]);
    mu.push_back(run.params.mu);
    recon.push_back(run.recon);
    slowest = std::max(slowest, run.seconds_per_epoch);
  }
  const double b = mean_of(beta);
  const double m = mean_of(mu);
  const double r = mean_of(recon);
  Outcome out;
  out.pass = b >= 0.28 && b <= 0.35 && m >= 1.25 && m <= 1.36 && r <= 5e-3;
  out.detail = "beta=" + fmt(b) + " mu=" + fmt(m) + " recon_mse=" + fmt(r) +
               " s/epoch=" + fmt(slowest);
  if (slowest > 10.0) std::cerr << "warning: epoch time above the 10 s budget\n";
  return out;
}

Outcome sampling_trend() {
  const std::vector<std::pair<std::size_t, std::size_t>> budgets{{10, 10}, {10, 1}, {1, 1}};
  std::vector<double> means;
  for (const auto& [z, w] : budgets) {
    std::vector<double> r;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) r.push_back(toy_run(seed, z, w).recon);
    means.push_back(mean_of(r));
  }
  const auto ordered = [](double lo, double hi) {
    return lo <= hi || std::abs(lo - hi) <= 0.1 * std::max(lo, hi);
  };
  Outcome out;
  out.pass = ordered(means[0], means[1]) && ordered(means[1], means[2]);
  out.detail = "(10,10)=" + fmt(means[0]) + " (10,1)=" + fmt(means[1]) + " (1,1)=" + fmt(means[2]);
  return out;
}

Outcome calibration_vs_ensemble() {
  std::size_t seed_wins = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const ToyRun& run = toy_run(seed, 10, 10);
    EvalOptions options;
    options.n_candidates = 256;
    options.ensemble_samples = 100;
    options.seed = seed;
    const EvalReport report = evaluate(run.model, run.test, options);
    std::size_t steps = 0;
    for (std::size_t k = report.calibrated.split; k < report.calibrated.mean.size(); ++k) {
      steps += report.calibrated.mean[k] < report.ensemble.mean[k];
    }
    seed_wins += steps >= 8;
    detail += " seed" + std::to_string(seed) + "=" + std::to_string(steps) + "/" +
              std::to_string(report.calibrated.mean.size() - report.calibrated.split) +
              " (calib " + fmt(report.calibrated.extrap_mean()) + " vs ens " +
              fmt(report.ensemble.extrap_mean()) + ")";
  }
  return {seed_wins >= 2, "winning seeds " + std::to_string(seed_wins) + "/3:" + detail};
}

Outcome random_projection() {
  const TimeGrid grid = TimeGrid::uniform(0, 3, 20);
  double worst = 0.0;
  for (double w : {0.5, 1.0, 2.0}) {
    MeNodeModel model(ModelConfig::toy());
    model.set_gamma_override([w](const Tensor& z) { return scale(z, 1.0 / w); });
    const auto me = model.solve(Tensor::vector({1.3 * w}), Tensor::vector({w}), grid);
    const DriftFn plain = [](const Tensor& z, const Tensor&, double) { return z; };
    const auto base = integrate(plain, Tensor::vector({1.3}), Tensor::vector({0}), grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double expected = w * base.states[i][0];
      worst = std::max(worst, std::abs(me.states[i][0] - expected) / std::abs(expected));
    }
  }
  return {worst < 1e-6, "max relative error " + fmt(worst)};
}

Outcome wong_zakai() {
  const double beta = 0.3;
  const double sigma_b = 0.1;
  const double z0 = 1.3;
  const ScalarField f = [beta](double z, double) { return beta * z; };
  const ScalarField g = [sigma_b](double z, double) { return sigma_b * z; };
  const TimeGrid grid = TimeGrid::uniform(0, 3, 4, 300);
  const MomentCurve me = wong_zakai_ensemble(f, g, z0, grid, 10000, 11);
  const MomentCurve sde = stratonovich_ensemble(f, g, z0, grid, 10000, 12);
  bool ok = me.n_diverged == 0 && sde.n_diverged == 0;
  double worst_me = 0.0;
  double worst_sde = 0.0;
  std::string gaps;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double t = grid.times()[i];
    const double me_exact = z0 * std::exp(beta * t + sigma_b * sigma_b * t * t / 2);
    const double sde_exact = z0 * std::exp(beta * t + sigma_b * sigma_b * t / 2);
    const double zm = std::abs(me.mean[i] - me_exact) / me.standard_error(i);
    const double zs = std::abs(sde.mean[i] - sde_exact) / sde.standard_error(i);
    worst_me = std::max(worst_me, zm);
    worst_sde = std::max(worst_sde, zs);
    ok = ok && zm <= 3 && zs <= 3;
    gaps += " gap(t=" + fmt(t) + ")=" + fmt(me.mean[i] - sde.mean[i]);
  }
  return {ok, "me-ode max |z|=" + fmt(worst_me) + " sde max |z|=" + fmt(worst_sde) + gaps};
}

Outcome gradient_check() {
  const auto toy = generate_toy(ToySpec{.n_subjects = 4}, 5);
  MeNodeModel identity(ModelConfig::toy());
  identity.parameters()[identity.beta_index()].mutable_values()[0] = 0.25;
  TrainConfig tc;
  tc.n_z0 = 3;
  tc.n_w = 3;
  tc.accept_k = 2;
  const auto a = elbo_gradient_check(identity, toy.observed(1), toy.observed_grid(3), tc,
                                     NoiseBank::draw(3, 3, 1, 1, 7));

  const auto grouped = generate_grouped_2d(4, 8, 5);
  ModelConfig mc;
  mc.latent_dim = 2;
  mc.effect_dim = 2;
  mc.obs_dim = 2;
  mc.encoder_hidden = {16};
  mc.gamma_hidden = {16};
  mc.decoder_hidden = {16};
  const MeNodeModel full(mc, 3);
  const auto b = elbo_gradient_check(full, grouped.observed(2), grouped.observed_grid(3), tc,
                                     NoiseBank::draw(3, 3, 2, 2, 7));
  return {a.max_relative_error < 1e-3 && b.max_relative_error < 1e-2,
          "identity " + fmt(a.max_relative_error) + " (" + std::to_string(a.n_checked) +
              " params), full " + fmt(b.max_relative_error) + " (" +
              std::to_string(b.n_checked) + " params)"};
}

// grouped 2-d setup

ModelConfig grouped_model_config(const PanelDataset& data) {
  ModelConfig mc;
  mc.latent_dim = 2;
  mc.effect_dim = 2;
  mc.obs_dim = 2;
  mc.obs_window = data.split();
  mc.encoder_hidden = {16};
  mc.gamma_hidden = {16};
  mc.decoder_hidden = {16};
  return mc;
}

MeNodeModel train_grouped(const PanelDataset& train_set, std::uint64_t seed,
                          std::size_t epochs) {
  MeNodeModel model(grouped_model_config(train_set), seed);
  TrainConfig tc;
  tc.n_z0 = 3;
  tc.n_w = 3;
  tc.accept_k = 1;
  tc.learning_rate = 1e-2;
  tc.batch_size = 16;
  tc.epochs = epochs;
  tc.seed = seed;
  train(model, train_set, tc);
  return model;
}

Outcome grouped_trend() {
  std::vector<double> means;
  for (std::size_t groups : {1u, 4u, 8u}) {
    std::vector<double> per_seed;
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto split = split_subjects(generate_grouped_2d(groups, 400, seed), 0.8);
      const MeNodeModel model = train_grouped(split.train, seed, 15);
      const auto& test = split.test;
      std::vector<Series> truth;
      std::vector<Series> preds;
      for (std::size_t i = 0; i < test.size(); ++i) {
        const auto calib =
            calibrate(model, test.observed(i), test.observed_grid(3), 64, derive_seed(seed, i));
        preds.push_back(predict(model, calib, test.full_grid(3)));
        truth.push_back(test.full(i));
      }
      per_seed.push_back(per_step_mse(truth, preds, test.times(), test.split()).interp_mean());
    }
    means.push_back(mean_of(per_seed));
  }
  const auto ordered = [](double lo, double hi) { return lo <= hi * 1.1; };
  return {ordered(means[0], means[1]) && ordered(means[1], means[2]),
          "interp mse 1=" + fmt(means[0]) + " 4=" + fmt(means[1]) + " 8=" + fmt(means[2])};
}

// Calibrated latent trajectories split by group id (groups 0 and 1).
std::pair<std::vector<Series>, std::vector<Series>> latent_by_group(const MeNodeModel& model,
                                                                    const PanelDataset& data,
                                                                    std::uint64_t seed) {
  std::pair<std::vector<Series>, std::vector<Series>> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto calib =
        calibrate(model, data.observed(i), data.observed_grid(3), 64, derive_seed(seed, i));
    Series z = to_series(predict_latent(model, calib, data.full_grid(3)).states);
    (data.info(i).group_id == 0 ? out.first : out.second).push_back(std::move(z));
  }
  return out;
}

Grouped2dSpec two_group_spec(bool separated) {
  Grouped2dSpec spec;
  const double pi = std::numbers::pi;
  if (separated) {
    // identical starting points would make the groups inseparable at t = 0
    spec.omegas = {pi / 8, pi / 2};
    spec.angle_lo = {-pi / 2, 0.0};
    spec.angle_hi = {0.0, pi / 2};
  } else {
    spec.omegas = {pi / 4, pi / 4};
    spec.angle_lo = {-pi / 2, -pi / 2};
    spec.angle_hi = {pi / 2, pi / 2};
  }
  spec.n_times = 15;
  spec.n_observed = 10;
  return spec;
}

Outcome permutation_behaviour() {
  auto spec = two_group_spec(true);
  spec.n_subjects = 240;
  const auto split = split_subjects(generate_grouped_2d(spec, 21), 0.8);
  const MeNodeModel model = train_grouped(split.train, 21, 15);
  const auto [a, b] = latent_by_group(model, split.test, 21);
  const auto sep = permutation_test(a, b, 999, 22);
  std::size_t interp_ok = 0;
  std::size_t extrap_ok = 0;
  for (std::size_t k = 0; k < sep.p_values.size(); ++k) {
    (k < spec.n_observed ? interp_ok : extrap_ok) += sep.p_values[k] <= 0.1;
  }
  const std::size_t n_extrap = spec.n_times - spec.n_observed;

  // null: one model, fresh same-distribution data per run, labels by parity
  auto null_spec = two_group_spec(false);
  null_spec.n_subjects = 200;
  const MeNodeModel null_model =
      train_grouped(split_subjects(generate_grouped_2d(null_spec, 31), 1.0).train, 31, 15);
  null_spec.n_subjects = 40;
  std::size_t null_ok = 0;
  for (std::uint64_t run = 0; run < 50; ++run) {
    const auto data = generate_grouped_2d(null_spec, derive_seed(41, run));
    const auto [na, nb] = latent_by_group(null_model, data, run);
    const auto r = permutation_test(na, nb, 199, derive_seed(42, run),
                                    PermutationStatistic::aggregate);
    null_ok += r.p_values[0] > 0.05;
  }
  return {interp_ok == spec.n_observed && extrap_ok >= 3 && null_ok >= 45,
          "separated: interp " + std::to_string(interp_ok) + "/" +
              std::to_string(spec.n_observed) + " extrap " + std::to_string(extrap_ok) + "/" +
              std::to_string(n_extrap) + " with p<=0.1, max p " +
              fmt(*std::max_element(sep.p_values.begin(), sep.p_values.end())) +
              "; null runs with p>0.05: " + std::to_string(null_ok) + "/50"};
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "menode");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream sink;
  return run_cli(static_cast<int>(argv.size()), argv.data(), sink, sink);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "menode_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto p = [&](const std::string& name) { return (dir / name).string(); };
  std::vector<std::string> failures;
  const auto check = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };

  for (const char* name : {"a", "b"}) {
    cli({"generate", "--preset", "toy", "--n-subjects", "100", "--seed", "7", "--out",
         p(std::string("toy_") + name + ".csv")});
    cli({"generate", "--preset", "grouped", "--n-groups", "4", "--n-subjects", "60", "--seed",
         "7", "--out", p(std::string("grp_") + name + ".csv")});
  }
  check(slurp(p("toy_a.csv")) == slurp(p("toy_b.csv")) && !slurp(p("toy_a.csv")).empty(),
        "toy csv");
  check(slurp(p("grp_a.csv")) == slurp(p("grp_b.csv")) && !slurp(p("grp_a.csv")).empty(),
        "grouped csv");

  const std::vector<std::string> train{"train", "--data", p("toy_a.csv"), "--seed", "3",
                                       "--identity-mode", "--n-z0", "4", "--n-w", "4",
                                       "--batch-size", "8", "--lr", "0.01"};
  const auto run = [&](const std::string& tag, const std::string& epochs,
                       std::vector<std::string> extra = {}) {
    auto args = train;
    args.insert(args.end(), {"--epochs", epochs, "--out", p(tag + ".ckpt"), "--log",
                             p(tag + ".log")});
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args);
  };
  check(run("one", "4") == 0 && run("two", "4") == 0, "training runs");
  check(slurp(p("one.log")) == slurp(p("two.log")) && !slurp(p("one.log")).empty(), "logs");
  check(slurp(p("one.ckpt")) == slurp(p("two.ckpt")), "checkpoints");
  check(run("resumed", "2") == 0 && run("resumed", "4", {"--resume", p("resumed.ckpt")}) == 0,
        "resume run");
  check(slurp(p("resumed.ckpt")) == slurp(p("one.ckpt")), "resumed checkpoint");
  check(slurp(p("resumed.log")) == slurp(p("one.log")), "resumed log");

  // forward outputs of a full model before and after a round trip
  const auto grouped = read_csv(fs::path(p("grp_a.csv")));
  ModelConfig mc = grouped_model_config(grouped);
  MeNodeModel model(mc, 9);
  save_checkpoint(dir / "fwd.ckpt", model, TrainConfig{}, Adam{}, 0);
  const Checkpoint back = load_checkpoint(dir / "fwd.ckpt");
  const Tensor nz = Tensor::vector({0.3, -1.1});
  const Tensor nw = Tensor::vector({-0.4, 0.8});
  const auto s1 = model.sample_subject(grouped.observed(0), grouped.full_grid(3), nz, nw);
  const auto s2 = back.model.sample_subject(grouped.observed(0), grouped.full_grid(3), nz, nw);
  check(to_series(model.decode(s1.trajectory)) == to_series(back.model.decode(s2.trajectory)),
        "forward outputs after round trip");

  fs::remove_all(dir);
  std::string detail = failures.empty() ? "csv, logs, checkpoints, resume, round trip identical"
                                        : "mismatch:";
  for (const auto& f : failures) detail += " " + f;
  return {failures.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"toy parameter recovery", toy_recovery},
      {"sampling budget trend", sampling_trend},
      {"calibration beats ensemble", calibration_vs_ensemble},
      {"random projection identity", random_projection},
      {"wong-zakai moments", wong_zakai},
      {"gradient check", gradient_check},
      {"grouped difficulty trend", grouped_trend},
      {"permutation test", permutation_behaviour},
      {"determinism and persistence", determinism},
  };
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("threw: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !outcome.pass;
    std::cout << (outcome.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " "
              << criteria[i].first << ": " << outcome.detail << " [" << fmt(secs) << " s]"
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
