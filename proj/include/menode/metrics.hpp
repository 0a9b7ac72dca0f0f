#pragma once

#include "menode/calibration.hpp"
#include "menode/dataset.hpp"
#include "menode/model.hpp"
#include "menode/trainer.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace menode {

// Mean and population std over subjects of the per-time MSE (averaged over
// observation coordinates). Times [0, split) are the interpolation window,
// [split, n) the extrapolation window.
struct PerStepMse {
  std::vector<double> times;
  std::vector<double> mean;
  std::vector<double> std;
  std::size_t split = 0;

  double interp_mean() const;
  double extrap_mean() const;
};

PerStepMse per_step_mse(const std::vector<Series>& truth,
                        const std::vector<Series>& predictions,
                        const std::vector<double>& times, std::size_t split);

enum class PermutationStatistic { per_step, aggregate };

struct PermutationResult {
  std::vector<double> observed;  // one per step (a single entry for aggregate)
  std::vector<double> p_values;
  std::size_t n_perms = 0;
};

// Distance between the group-mean latent vectors, per step or summed over
// steps. Each resample permutes the pooled subject labels once and reuses
// the permutation for every step. p = (1 + #{permuted >= observed}) /
// (1 + n_perms).
PermutationResult permutation_test(const std::vector<Series>& group_a,
                                   const std::vector<Series>& group_b,
                                   std::size_t n_perms, std::uint64_t seed,
                                   PermutationStatistic statistic =
                                       PermutationStatistic::per_step);

struct ParamComparison {
  RecoveredParams estimated;
  std::optional<RecoveredParams> truth;  // empirical moments of stored truth
  std::optional<double> param_mse;
};

struct EvalOptions {
  std::size_t n_candidates = 256;
  std::size_t ensemble_samples = 100;
  std::size_t recon_n_z0 = 10;
  std::size_t recon_n_w = 10;
  std::size_t n_perms = 1000;
  PermutationStatistic statistic = PermutationStatistic::per_step;
  std::uint64_t seed = 0;
};

struct EvalReport {
  PerStepMse calibrated;
  PerStepMse ensemble;
  ParamComparison params;
  double recon_mse = 0.0;
  double mean_traj_mse = 0.0;
  // Between the two smallest group ids on the calibrated latent
  // trajectories, when both have at least two subjects.
  std::optional<PermutationResult> permutation;
  std::vector<std::int64_t> compared_groups;
  std::optional<double> seconds_per_epoch;
};

// Ground truth summary from true_z0 / true_w stored in the dataset: means
// of z0 and w, standard deviations of z0 and w (coordinates averaged for
// mu/sigma). Empty when the dataset carries no truth.
std::optional<RecoveredParams> empirical_truth(const PanelDataset& data);

// Squared error of (mu, sigma, beta..., sigma_b...) against truth, averaged.
double parameter_mse(const RecoveredParams& estimated, const RecoveredParams& truth);

// Calibrates every subject on its observed window, predicts the full grid
// and scores both the calibrated predictions and the ensemble mean against
// all observations. Only the scoring step reads held-out values.
EvalReport evaluate(const MeNodeModel& model, const PanelDataset& data,
                    const EvalOptions& options);

void write_report(const EvalReport& report, std::ostream& out);
void write_step_csv(const EvalReport& report, std::ostream& out);
void write_pvalue_csv(const PermutationResult& result, const std::vector<double>& times,
                      std::ostream& out);

}  // namespace menode
