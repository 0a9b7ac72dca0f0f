#include "menode/calibration.hpp"

#include "menode/error.hpp"
#include "menode/ops.hpp"
#include "menode/parallel.hpp"
#include "menode/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace menode {

namespace {

Tensor normal_vector(NormalSampler& normal, std::size_t dim) {
  Buffer b(dim);
  for (auto& v : b) v = normal();
  return Tensor({dim}, std::move(b));
}

double median_of(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace

CalibrationResult calibrate(const MeNodeModel& model, const Series& x_obs,
                            const TimeGrid& grid_obs, std::size_t n_candidates,
                            std::uint64_t seed, bool search_z0) {
  if (n_candidates < 1) throw ContractError("calibration needs at least one candidate");
  const ParamView params = model.parameters();
  const Posterior q = model.encode(params, x_obs);
  const Tensor beta = model.beta(params);
  const Tensor sigma_b = model.sigma_b(params);

  NormalSampler normal(seed);
  std::vector<Tensor> z0s;
  std::vector<Tensor> ws;
  ws.reserve(n_candidates);
  if (!search_z0) z0s.push_back(q.mu);
  for (std::size_t c = 0; c < n_candidates; ++c) {
    ws.push_back(reparam_sample(beta, sigma_b, normal_vector(normal, beta.size())));
    if (search_z0) {
      z0s.push_back(reparam_sample(q.mu, q.sigma, normal_vector(normal, q.mu.size())));
    }
  }
  return calibrate_candidates(model, x_obs, grid_obs, z0s, ws);
}

CalibrationResult calibrate_candidates(const MeNodeModel& model, const Series& x_obs,
                                       const TimeGrid& grid_obs,
                                       const std::vector<Tensor>& z0s,
                                       const std::vector<Tensor>& ws) {
  if (ws.empty()) throw ContractError("calibration needs at least one candidate");
  if (z0s.size() != 1 && z0s.size() != ws.size()) {
    throw ContractError("calibration: need one z0 or one per candidate");
  }
  if (grid_obs.size() != x_obs.n_times()) {
    throw ContractError("calibration grid has " + std::to_string(grid_obs.size()) +
                        " times, observations have " + std::to_string(x_obs.n_times()));
  }
  const auto& z0_of = [&](std::size_t c) -> const Tensor& {
    return z0s.size() == 1 ? z0s.front() : z0s[c];
  };

  CalibrationResult out;
  out.n_candidates = ws.size();
  out.candidate_mse.assign(ws.size(), std::numeric_limits<double>::infinity());
  parallel_for(ws.size(), [&](std::size_t c) {
    try {
      const double e = mse(x_obs, model.decode(model.solve(z0_of(c), ws[c], grid_obs)));
      if (std::isfinite(e)) out.candidate_mse[c] = e;
    } catch (const DivergenceError&) {
    }
  });

  std::vector<double> finite;
  std::size_t best = 0;
  for (std::size_t c = 0; c < ws.size(); ++c) {
    const double e = out.candidate_mse[c];
    if (!std::isfinite(e)) {
      ++out.n_diverged;
      continue;
    }
    finite.push_back(e);
    if (e < out.candidate_mse[best] || !std::isfinite(out.candidate_mse[best])) best = c;
  }
  if (finite.empty()) {
    throw CalibrationError("all " + std::to_string(ws.size()) + " calibration candidates diverged");
  }
  out.chosen = best;
  out.w = ws[best];
  out.z0 = z0_of(best);
  out.mse = out.candidate_mse[best];
  out.min_mse = *std::min_element(finite.begin(), finite.end());
  out.max_mse = *std::max_element(finite.begin(), finite.end());
  out.median_mse = median_of(std::move(finite));
  return out;
}

LatentTrajectory predict_latent(const MeNodeModel& model, const CalibrationResult& calib,
                                const TimeGrid& grid_full) {
  return model.solve(calib.z0, calib.w, grid_full);
}

Series predict(const MeNodeModel& model, const CalibrationResult& calib,
               const TimeGrid& grid_full) {
  return to_series(model.decode(predict_latent(model, calib, grid_full)));
}

EnsemblePrediction ensemble_predict(const MeNodeModel& model, const Series& x_obs,
                                    const TimeGrid& grid_full, std::size_t n_samples,
                                    std::uint64_t seed) {
  if (n_samples < 2) throw ContractError("ensemble_predict needs n_samples >= 2");
  const ParamView params = model.parameters();
  const Posterior q = model.encode(params, x_obs);
  const Tensor beta = model.beta(params);
  const Tensor sigma_b = model.sigma_b(params);

  NormalSampler normal(seed);
  std::vector<Tensor> z0s;
  std::vector<Tensor> ws;
  for (std::size_t s = 0; s < n_samples; ++s) {
    z0s.push_back(reparam_sample(q.mu, q.sigma, normal_vector(normal, q.mu.size())));
    ws.push_back(reparam_sample(beta, sigma_b, normal_vector(normal, beta.size())));
  }

  std::vector<std::optional<Series>> paths(n_samples);
  parallel_for(n_samples, [&](std::size_t s) {
    try {
      Series x = to_series(model.decode(model.solve(z0s[s], ws[s], grid_full)));
      const auto v = x.values();
      if (std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); })) {
        paths[s] = std::move(x);
      }
    } catch (const DivergenceError&) {
    }
  });

  const std::size_t n_times = grid_full.size();
  const std::size_t dim = model.config().obs_dim;
  EnsemblePrediction out;
  out.mean = Series(n_times, dim);
  out.std = Series(n_times, dim);
  // Welford per coordinate, in sample order
  Series m2(n_times, dim);
  for (const auto& path : paths) {
    if (!path) {
      ++out.n_diverged;
      continue;
    }
    ++out.n_used;
    const double n = static_cast<double>(out.n_used);
    for (std::size_t t = 0; t < n_times; ++t) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double x = (*path)(t, j);
        const double delta = x - out.mean(t, j);
        out.mean(t, j) += delta / n;
        m2(t, j) += delta * (x - out.mean(t, j));
      }
    }
  }
  if (out.n_used < 2) {
    throw DivergenceError("ensemble_predict: fewer than two finite trajectories",
                          grid_full.times().back());
  }
  for (std::size_t t = 0; t < n_times; ++t) {
    for (std::size_t j = 0; j < dim; ++j) {
      out.std(t, j) = std::sqrt(m2(t, j) / static_cast<double>(out.n_used - 1));
    }
  }
  return out;
}

}  // namespace menode
