#pragma once

#include "menode/dataset.hpp"
#include "menode/model.hpp"
#include "menode/optimizer.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace menode {

struct TrainConfig {
  std::size_t n_z0 = 10;     // z0 draws per subject per step
  std::size_t n_w = 10;      // w draws per z0 draw
  std::size_t accept_k = 1;  // size of the acceptance set S
  double learning_rate = 1e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double kl_weight = 1.0;

  std::size_t candidates() const noexcept { return n_z0 * n_w; }
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Standard-normal draws for one subject: n_z0 vectors for z0 and n_z0 * n_w
// vectors for w. Candidate c pairs z0 draw c / n_w with w draw c.
struct NoiseBank {
  std::size_t n_z0 = 0;
  std::size_t n_w = 0;
  std::vector<Tensor> z0;
  std::vector<Tensor> w;

  static NoiseBank draw(std::size_t n_z0, std::size_t n_w, std::size_t latent_dim,
                        std::size_t effect_dim, std::uint64_t seed);

  std::size_t size() const noexcept { return w.size(); }
  const Tensor& z0_noise(std::size_t candidate) const { return z0[candidate / n_w]; }
  const Tensor& w_noise(std::size_t candidate) const { return w[candidate]; }
};

// ABC acceptance for one subject and step: decoded-MSE distance of every
// candidate, the accepted indices (closest first) and the realized epsilon,
// the largest accepted distance. Diverged candidates have distance +inf.
struct AcceptanceRecord {
  std::vector<double> distances;
  std::vector<std::size_t> accepted;
  double epsilon = 0.0;
};

// Scores every candidate on plain values and keeps the accept_k closest
// (ties broken by index). Throws TrainingError when every candidate
// diverged.
AcceptanceRecord select_candidates(const MeNodeModel& model, const Series& x_obs,
                                   const TimeGrid& grid, const NoiseBank& bank,
                                   std::size_t accept_k);

struct SubjectLoss {
  Tensor loss;  // scalar, on the tape of `params` when they are attached
  AcceptanceRecord record;
};

// Negative ABC evidence lower bound of one subject:
//   -(1/|S|) sum_{s in S} [ log p(x|z^s,w^s)
//                           - kl_weight (log q(z0^s) - log p(z0^s)
//                                        + log q(w^s) - log p(w^s)) ]
// Candidates outside S never enter the graph. With `frozen` the acceptance
// set is taken as given and no scoring pass runs.
SubjectLoss loss_subject(const MeNodeModel& model, ParamView params,
                         const Series& x_obs, const TimeGrid& grid,
                         const TrainConfig& config, const NoiseBank& bank,
                         std::optional<std::span<const std::size_t>> frozen = std::nullopt);

struct LossGradient {
  double loss = 0.0;
  std::vector<Tensor> grads;  // aligned with model.parameters()
  AcceptanceRecord record;
};

LossGradient loss_and_gradient(const MeNodeModel& model, const Series& x_obs,
                               const TimeGrid& grid, const TrainConfig& config,
                               const NoiseBank& bank,
                               std::optional<std::span<const std::size_t>> frozen = std::nullopt);

// Population-level estimates: mean encoder mu and sigma over subjects
// (averaged over latent coordinates), beta and sigma_b.
struct RecoveredParams {
  double mu = 0.0;
  double sigma = 0.0;
  std::vector<double> beta;
  std::vector<double> sigma_b;
};

RecoveredParams recover_parameters(const MeNodeModel& model, const PanelDataset& data);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based, counting resumed epochs
  double mean_loss = 0.0;
  double mean_epsilon = 0.0;
  double seconds = 0.0;
  RecoveredParams recovered;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  RecoveredParams final_params;
};

// One log line per epoch; deterministic (no timing).
std::string format_epoch_line(const EpochStats& stats);

// Owns the optimizer and the epoch counter so training can be resumed.
// Randomness is a pure function of (seed, epoch, subject), which makes a
// resumed run identical to an uninterrupted one.
class Trainer {
 public:
  Trainer(MeNodeModel& model, TrainConfig config);
  Trainer(MeNodeModel& model, TrainConfig config, Adam optimizer,
          std::size_t epochs_done);

  // Runs one epoch over the observed windows of `data`. On a non-finite
  // loss the parameters are rolled back to the last good step and
  // TrainingError is thrown.
  EpochStats run_epoch(const PanelDataset& data);

  // Runs epochs until config.epochs have been completed in total, so a
  // resumed trainer only runs the remainder. `log` receives
  // format_epoch_line output, `on_epoch` runs after each epoch
  // (checkpointing).
  TrainReport train(const PanelDataset& data, std::ostream* log = nullptr,
                    const std::function<void(const EpochStats&)>& on_epoch = {});

  const Adam& optimizer() const noexcept { return optimizer_; }
  std::size_t epochs_done() const noexcept { return epochs_done_; }
  const TrainConfig& config() const noexcept { return config_; }

 private:
  MeNodeModel& model_;
  TrainConfig config_;
  Adam optimizer_;
  std::size_t epochs_done_ = 0;
};

TrainReport train(MeNodeModel& model, const PanelDataset& data,
                  const TrainConfig& config, std::ostream* log = nullptr);

// Mean over subjects of the realized epsilon at budget (n_z0, n_w) with
// accept_k = 1: the reconstruction error of the closest sampled trajectory
// on the observed window.
double reconstruction_mse(const MeNodeModel& model, const PanelDataset& data,
                          std::size_t n_z0, std::size_t n_w, std::uint64_t seed);

// Observed-window MSE of the mean trajectory (z0 = mu, w = beta).
double mean_trajectory_mse(const MeNodeModel& model, const PanelDataset& data);

struct GradientCheck {
  double max_relative_error = 0.0;
  std::vector<double> group_max_error;  // per parameter tensor
  std::size_t n_checked = 0;
};

// Compares tape gradients of loss_subject against central differences with
// step h, holding the noise bank and the acceptance set fixed. Relative
// error is |a - b| / max(|a|, |b|, floor).
GradientCheck elbo_gradient_check(const MeNodeModel& model, const Series& x_obs,
                                  const TimeGrid& grid, const TrainConfig& config,
                                  const NoiseBank& bank, double h = 1e-5,
                                  double floor = 1e-6);

}  // namespace menode
