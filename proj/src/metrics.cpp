#include "menode/metrics.hpp"

#include "menode/error.hpp"
#include "menode/parallel.hpp"
#include "menode/random.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

namespace menode {

namespace {

constexpr std::uint64_t kCalibrationStream = 0xCA1;
constexpr std::uint64_t kEnsembleStream = 0xE45;
constexpr std::uint64_t kReconStream = 0x4EC;
constexpr std::uint64_t kPermStream = 0x9E4;

double window_mean(const std::vector<double>& v, std::size_t begin, std::size_t end) {
  if (begin >= end) return 0.0;
  return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(begin),
                         v.begin() + static_cast<std::ptrdiff_t>(end), 0.0) /
         static_cast<double>(end - begin);
}

void check_same_shape(const std::vector<Series>& series, std::size_t n_times, std::size_t dim,
                      const char* what) {
  for (const auto& s : series) {
    if (s.n_times() != n_times || s.dim() != dim) {
      throw ContractError(std::string(what) + ": series shapes differ");
    }
  }
}

}  // namespace

double PerStepMse::interp_mean() const { return window_mean(mean, 0, split); }
double PerStepMse::extrap_mean() const { return window_mean(mean, split, mean.size()); }

PerStepMse per_step_mse(const std::vector<Series>& truth,
                        const std::vector<Series>& predictions,
                        const std::vector<double>& times, std::size_t split) {
  if (truth.size() != predictions.size()) {
    throw ContractError("per_step_mse: " + std::to_string(truth.size()) + " subjects but " +
                        std::to_string(predictions.size()) + " predictions");
  }
  if (truth.empty()) throw ContractError("per_step_mse: no subjects");
  const std::size_t n_times = times.size();
  const std::size_t dim = truth.front().dim();
  if (split > n_times) throw ContractError("per_step_mse: split outside the grid");
  check_same_shape(truth, n_times, dim, "per_step_mse");
  check_same_shape(predictions, n_times, dim, "per_step_mse");

  PerStepMse out;
  out.times = times;
  out.split = split;
  out.mean.assign(n_times, 0.0);
  out.std.assign(n_times, 0.0);
  const double n = static_cast<double>(truth.size());
  for (std::size_t t = 0; t < n_times; ++t) {
    std::vector<double> errs(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double r = predictions[i](t, j) - truth[i](t, j);
        acc += r * r;
      }
      errs[i] = acc / static_cast<double>(dim);
    }
    const double m = std::accumulate(errs.begin(), errs.end(), 0.0) / n;
    double var = 0.0;
    for (double e : errs) var += (e - m) * (e - m);
    out.mean[t] = m;
    out.std[t] = std::sqrt(var / n);
  }
  return out;
}

PermutationResult permutation_test(const std::vector<Series>& group_a,
                                   const std::vector<Series>& group_b,
                                   std::size_t n_perms, std::uint64_t seed,
                                   PermutationStatistic statistic) {
  if (group_a.size() < 2 || group_b.size() < 2) {
    throw ContractError("permutation_test needs at least 2 subjects per group (got " +
                        std::to_string(group_a.size()) + " and " +
                        std::to_string(group_b.size()) + ")");
  }
  if (n_perms < 100) throw ContractError("permutation_test needs n_perms >= 100");
  const std::size_t n_times = group_a.front().n_times();
  const std::size_t dim = group_a.front().dim();
  check_same_shape(group_a, n_times, dim, "permutation_test");
  check_same_shape(group_b, n_times, dim, "permutation_test");

  std::vector<const Series*> pooled;
  for (const auto& s : group_a) pooled.push_back(&s);
  for (const auto& s : group_b) pooled.push_back(&s);
  const std::size_t n_a = group_a.size();
  const double inv_a = 1.0 / static_cast<double>(n_a);
  const double inv_b = 1.0 / static_cast<double>(group_b.size());

  std::vector<double> total(n_times * dim, 0.0);
  double scale = 0.0;
  for (const auto* s : pooled) {
    const auto v = s->values();
    for (std::size_t k = 0; k < v.size(); ++k) {
      total[k] += v[k];
      scale = std::max(scale, std::abs(v[k]));
    }
  }

  // per-step distances for the assignment whose first n_a entries form group A
  auto distances = [&](const std::vector<std::size_t>& order) {
    std::vector<double> sum_a(n_times * dim, 0.0);
    for (std::size_t i = 0; i < n_a; ++i) {
      const auto v = pooled[order[i]]->values();
      for (std::size_t k = 0; k < v.size(); ++k) sum_a[k] += v[k];
    }
    std::vector<double> d(n_times, 0.0);
    for (std::size_t t = 0; t < n_times; ++t) {
      double acc = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const std::size_t k = t * dim + j;
        const double diff = sum_a[k] * inv_a - (total[k] - sum_a[k]) * inv_b;
        acc += diff * diff;
      }
      d[t] = std::sqrt(acc);
    }
    if (statistic == PermutationStatistic::aggregate) {
      return std::vector<double>{std::accumulate(d.begin(), d.end(), 0.0)};
    }
    return d;
  };

  std::vector<std::size_t> identity(pooled.size());
  std::iota(identity.begin(), identity.end(), 0);
  PermutationResult out;
  out.n_perms = n_perms;
  out.observed = distances(identity);

  // floating-point slack so that exchangeable identical data gives p = 1
  const double tol = 1e-10 * std::max(1.0, scale);
  std::vector<std::size_t> exceed(out.observed.size(), 0);
  for (std::size_t r = 0; r < n_perms; ++r) {
    std::vector<std::size_t> order = identity;
    Rng rng(derive_seed(seed, kPermStream, r));
    std::shuffle(order.begin(), order.end(), rng);
    const auto d = distances(order);
    for (std::size_t s = 0; s < d.size(); ++s) {
      if (d[s] >= out.observed[s] - tol) ++exceed[s];
    }
  }
  for (std::size_t s = 0; s < exceed.size(); ++s) {
    out.p_values.push_back(static_cast<double>(1 + exceed[s]) /
                           static_cast<double>(1 + n_perms));
  }
  return out;
}

std::optional<RecoveredParams> empirical_truth(const PanelDataset& data) {
  if (data.empty()) return std::nullopt;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.info(i).true_z0.empty() || data.info(i).true_w.empty()) return std::nullopt;
  }
  const std::size_t p = data.info(0).true_z0.size();
  const std::size_t m = data.info(0).true_w.size();
  const double n = static_cast<double>(data.size());
  const double dof = std::max(1.0, n - 1.0);

  auto column_stats = [&](auto get, std::size_t width) {
    std::vector<double> mean(width, 0.0);
    std::vector<double> sd(width, 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
      for (std::size_t j = 0; j < width; ++j) mean[j] += get(i)[j] / n;
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        const double r = get(i)[j] - mean[j];
        sd[j] += r * r / dof;
      }
    }
    for (auto& v : sd) v = std::sqrt(v);
    return std::pair{mean, sd};
  };

  const auto [z_mean, z_sd] =
      column_stats([&](std::size_t i) -> const auto& { return data.info(i).true_z0; }, p);
  const auto [w_mean, w_sd] =
      column_stats([&](std::size_t i) -> const auto& { return data.info(i).true_w; }, m);
  RecoveredParams truth;
  truth.mu = std::accumulate(z_mean.begin(), z_mean.end(), 0.0) / static_cast<double>(p);
  truth.sigma = std::accumulate(z_sd.begin(), z_sd.end(), 0.0) / static_cast<double>(p);
  truth.beta = w_mean;
  truth.sigma_b = w_sd;
  return truth;
}

double parameter_mse(const RecoveredParams& estimated, const RecoveredParams& truth) {
  if (estimated.beta.size() != truth.beta.size() ||
      estimated.sigma_b.size() != truth.sigma_b.size()) {
    throw ContractError("parameter_mse: effect dimensions differ");
  }
  double acc = 0.0;
  std::size_t n = 0;
  auto add = [&](double a, double b) {
    acc += (a - b) * (a - b);
    ++n;
  };
  add(estimated.mu, truth.mu);
  add(estimated.sigma, truth.sigma);
  for (std::size_t j = 0; j < truth.beta.size(); ++j) add(estimated.beta[j], truth.beta[j]);
  for (std::size_t j = 0; j < truth.sigma_b.size(); ++j) {
    add(estimated.sigma_b[j], truth.sigma_b[j]);
  }
  return acc / static_cast<double>(n);
}

EvalReport evaluate(const MeNodeModel& model, const PanelDataset& data,
                    const EvalOptions& options) {
  if (data.empty()) throw ContractError("evaluate: dataset is empty");
  const std::size_t substeps = model.config().substeps;
  const TimeGrid grid_obs = data.observed_grid(substeps);
  const TimeGrid grid_full = data.full_grid(substeps);
  const std::size_t n = data.size();

  std::vector<Series> calibrated(n);
  std::vector<Series> ensemble(n);
  std::vector<Series> latent(n);
  parallel_for(n, [&](std::size_t i) {
    const Series x_obs = data.observed(i);
    const CalibrationResult calib =
        calibrate(model, x_obs, grid_obs, options.n_candidates,
                  derive_seed(options.seed, kCalibrationStream, i));
    const LatentTrajectory traj = predict_latent(model, calib, grid_full);
    calibrated[i] = to_series(model.decode(traj));
    latent[i] = to_series(traj.states);
    ensemble[i] = ensemble_predict(model, x_obs, grid_full, options.ensemble_samples,
                                   derive_seed(options.seed, kEnsembleStream, i))
                      .mean;
  });

  // scoring: the only place held-out observations are read
  std::vector<Series> truth;
  truth.reserve(n);
  for (std::size_t i = 0; i < n; ++i) truth.push_back(data.full(i));

  EvalReport report;
  report.calibrated = per_step_mse(truth, calibrated, data.times(), data.split());
  report.ensemble = per_step_mse(truth, ensemble, data.times(), data.split());
  report.recon_mse = reconstruction_mse(model, data, options.recon_n_z0, options.recon_n_w,
                                        derive_seed(options.seed, kReconStream));
  report.mean_traj_mse = mean_trajectory_mse(model, data);
  report.params.estimated = recover_parameters(model, data);
  report.params.truth = empirical_truth(data);
  if (report.params.truth &&
      report.params.truth->beta.size() == report.params.estimated.beta.size()) {
    report.params.param_mse = parameter_mse(report.params.estimated, *report.params.truth);
  }

  std::map<std::int64_t, std::vector<Series>> by_group;
  for (std::size_t i = 0; i < n; ++i) by_group[data.info(i).group_id].push_back(latent[i]);
  if (by_group.size() >= 2) {
    auto a = by_group.begin();
    auto b = std::next(a);
    if (a->second.size() >= 2 && b->second.size() >= 2) {
      report.compared_groups = {a->first, b->first};
      report.permutation = permutation_test(a->second, b->second, options.n_perms,
                                            options.seed, options.statistic);
    }
  }
  return report;
}

namespace {

void write_list(std::ostream& out, const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    out << (i ? "," : "") << format_double(values[i]);
  }
}

void write_params(std::ostream& out, const std::string& prefix, const RecoveredParams& p) {
  out << prefix << "mu: " << format_double(p.mu) << '\n';
  out << prefix << "sigma: " << format_double(p.sigma) << '\n';
  out << prefix << "beta: ";
  write_list(out, p.beta);
  out << '\n' << prefix << "sigma_b: ";
  write_list(out, p.sigma_b);
  out << '\n';
}

}  // namespace

void write_report(const EvalReport& report, std::ostream& out) {
  out << "n_times: " << report.calibrated.mean.size() << '\n';
  out << "split: " << report.calibrated.split << '\n';
  out << "calibrated_interp_mse: " << format_double(report.calibrated.interp_mean()) << '\n';
  out << "calibrated_extrap_mse: " << format_double(report.calibrated.extrap_mean()) << '\n';
  out << "ensemble_interp_mse: " << format_double(report.ensemble.interp_mean()) << '\n';
  out << "ensemble_extrap_mse: " << format_double(report.ensemble.extrap_mean()) << '\n';
  out << "recon_mse: " << format_double(report.recon_mse) << '\n';
  out << "mean_traj_mse: " << format_double(report.mean_traj_mse) << '\n';
  write_params(out, "estimated_", report.params.estimated);
  if (report.params.truth) write_params(out, "true_", *report.params.truth);
  if (report.params.param_mse) {
    out << "param_mse: " << format_double(*report.params.param_mse) << '\n';
  }
  if (report.permutation) {
    out << "permutation_groups: " << report.compared_groups[0] << ','
        << report.compared_groups[1] << '\n';
    out << "permutation_p_values: ";
    write_list(out, report.permutation->p_values);
    out << '\n';
  }
  if (report.seconds_per_epoch) {
    out << "seconds_per_epoch: " << format_double(*report.seconds_per_epoch) << '\n';
  }
}

void write_step_csv(const EvalReport& report, std::ostream& out) {
  out << "step,time,window,calibrated_mse_mean,calibrated_mse_std,ensemble_mse_mean,"
         "ensemble_mse_std\n";
  const auto& c = report.calibrated;
  const auto& e = report.ensemble;
  for (std::size_t t = 0; t < c.mean.size(); ++t) {
    out << t << ',' << format_double(c.times[t]) << ','
        << (t < c.split ? "interp" : "extrap") << ',' << format_double(c.mean[t]) << ','
        << format_double(c.std[t]) << ',' << format_double(e.mean[t]) << ','
        << format_double(e.std[t]) << '\n';
  }
}

void write_pvalue_csv(const PermutationResult& result, const std::vector<double>& times,
                      std::ostream& out) {
  out << "step,time,observed_distance,p_value\n";
  const bool per_step = result.p_values.size() == times.size();
  for (std::size_t s = 0; s < result.p_values.size(); ++s) {
    if (per_step) {
      out << s << ',' << format_double(times[s]);
    } else {
      out << "all,";
    }
    out << ',' << format_double(result.observed[s]) << ',' << format_double(result.p_values[s])
        << '\n';
  }
}

}  // namespace menode
