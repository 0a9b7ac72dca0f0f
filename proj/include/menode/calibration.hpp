#pragma once

#include "menode/dataset.hpp"
#include "menode/model.hpp"

#include <cstdint>
#include <vector>

namespace menode {

// Outcome of test-time calibration for one subject.
struct CalibrationResult {
  Tensor w;   // chosen mixed effect [m]
  Tensor z0;  // initial state used with it [p]
  double mse = 0.0;  // observed-window MSE of the chosen candidate
  std::size_t chosen = 0;
  std::size_t n_candidates = 0;
  std::size_t n_diverged = 0;
  double min_mse = 0.0;
  double median_mse = 0.0;
  double max_mse = 0.0;
  std::vector<double> candidate_mse;  // +inf for diverged candidates
};

// Draws n_candidates effects w ~ N(beta, diag(sigma_b^2)) and keeps the one
// whose decoded trajectory is closest (MSE) to x_obs on grid_obs. z0 is the
// encoder mean unless search_z0, in which case each candidate also draws
// its own z0 from the posterior.
CalibrationResult calibrate(const MeNodeModel& model, const Series& x_obs,
                            const TimeGrid& grid_obs, std::size_t n_candidates,
                            std::uint64_t seed, bool search_z0 = false);

// Same selection over an explicit candidate set. z0s holds either a single
// initial state shared by every candidate or one per candidate.
CalibrationResult calibrate_candidates(const MeNodeModel& model, const Series& x_obs,
                                       const TimeGrid& grid_obs,
                                       const std::vector<Tensor>& z0s,
                                       const std::vector<Tensor>& ws);

// Trajectory under the calibrated (z0, w), decoded at every time of grid_full.
Series predict(const MeNodeModel& model, const CalibrationResult& calib,
               const TimeGrid& grid_full);
LatentTrajectory predict_latent(const MeNodeModel& model, const CalibrationResult& calib,
                                const TimeGrid& grid_full);

// Uncalibrated baseline: pointwise mean and sample std over trajectories with
// z0 ~ q(z0 | x_obs) and w ~ N(beta, sigma_b), no selection.
struct EnsemblePrediction {
  Series mean;
  Series std;
  std::size_t n_used = 0;
  std::size_t n_diverged = 0;
};

EnsemblePrediction ensemble_predict(const MeNodeModel& model, const Series& x_obs,
                                    const TimeGrid& grid_full, std::size_t n_samples,
                                    std::uint64_t seed);

}  // namespace menode
