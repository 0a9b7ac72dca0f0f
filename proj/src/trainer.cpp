#include "menode/trainer.hpp"

#include "menode/error.hpp"
#include "menode/ops.hpp"
#include "menode/parallel.hpp"
#include "menode/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace menode {

void TrainConfig::validate() const {
  if (n_z0 < 1 || n_w < 1 || accept_k < 1) {
    throw ContractError("n_z0, n_w and accept_k must be >= 1");
  }
  if (accept_k > candidates()) {
    throw ContractError("accept_k (" + std::to_string(accept_k) +
                        ") exceeds n_z0 * n_w (" + std::to_string(candidates()) + ")");
  }
  if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be positive");
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (kl_weight < 0.0) throw ContractError("kl_weight must be non-negative");
}

NoiseBank NoiseBank::draw(std::size_t n_z0, std::size_t n_w, std::size_t latent_dim,
                          std::size_t effect_dim, std::uint64_t seed) {
  NoiseBank bank;
  bank.n_z0 = n_z0;
  bank.n_w = n_w;
  NormalSampler normal(seed);
  auto vec = [&](std::size_t dim) {
    Buffer b(dim);
    for (auto& v : b) v = normal();
    return Tensor({dim}, std::move(b));
  };
  for (std::size_t i = 0; i < n_z0; ++i) bank.z0.push_back(vec(latent_dim));
  for (std::size_t i = 0; i < n_z0 * n_w; ++i) bank.w.push_back(vec(effect_dim));
  return bank;
}

AcceptanceRecord select_candidates(const MeNodeModel& model, const Series& x_obs,
                                   const TimeGrid& grid, const NoiseBank& bank,
                                   std::size_t accept_k) {
  const ParamView params = model.parameters();
  const Posterior q = model.encode(params, x_obs);
  const Tensor beta = model.beta(params);
  const Tensor sigma_b = model.sigma_b(params);

  AcceptanceRecord rec;
  rec.distances.resize(bank.size());
  std::size_t finite = 0;
  for (std::size_t c = 0; c < bank.size(); ++c) {
    try {
      const Tensor z0 = reparam_sample(q.mu, q.sigma, bank.z0_noise(c));
      const Tensor w = reparam_sample(beta, sigma_b, bank.w_noise(c));
      const auto traj = model.solve(params, z0, w, grid);
      rec.distances[c] = mse(x_obs, model.decode(params, traj));
    } catch (const DivergenceError&) {
      rec.distances[c] = std::numeric_limits<double>::infinity();
    }
    if (std::isfinite(rec.distances[c])) {
      ++finite;
    } else {
      rec.distances[c] = std::numeric_limits<double>::infinity();
    }
  }
  if (finite == 0) throw TrainingError("all candidates diverged");

  std::vector<std::size_t> order(bank.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t k = std::min(accept_k, finite);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                    order.end(), [&](std::size_t a, std::size_t b) {
                      const double da = rec.distances[a];
                      const double db = rec.distances[b];
                      return da < db || (da == db && a < b);
                    });
  rec.accepted.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  rec.epsilon = rec.distances[rec.accepted.back()];
  return rec;
}

SubjectLoss loss_subject(const MeNodeModel& model, ParamView params,
                         const Series& x_obs, const TimeGrid& grid,
                         const TrainConfig& config, const NoiseBank& bank,
                         std::optional<std::span<const std::size_t>> frozen) {
  SubjectLoss out;
  if (frozen) {
    out.record.accepted.assign(frozen->begin(), frozen->end());
    out.record.epsilon = std::numeric_limits<double>::quiet_NaN();
  } else {
    out.record = select_candidates(model, x_obs, grid, bank, config.accept_k);
  }
  if (out.record.accepted.empty()) throw ContractError("acceptance set is empty");

  const auto& cfg = model.config();
  const Posterior q = model.encode(params, x_obs);
  const Tensor beta = model.beta(params);
  const Tensor sigma_b = model.sigma_b(params);
  const Tensor prior_z0 = Tensor::scalar(cfg.prior_z0_sigma);
  const Tensor prior_w = Tensor::scalar(cfg.prior_w_sigma);
  const Tensor zero = Tensor::scalar(0.0);

  Tensor total = Tensor::scalar(0.0);
  for (const std::size_t c : out.record.accepted) {
    if (c >= bank.size()) throw ContractError("accepted index outside the noise bank");
    const Tensor z0 = reparam_sample(q.mu, q.sigma, bank.z0_noise(c));
    const Tensor w = reparam_sample(beta, sigma_b, bank.w_noise(c));
    const auto traj = model.solve(params, z0, w, grid);
    const Tensor ll = log_likelihood(x_obs, model.decode(params, traj), cfg.obs_sigma);
    const Tensor log_ratio_z0 =
        sub(gaussian_log_density(z0, q.mu, q.sigma), gaussian_log_density(z0, zero, prior_z0));
    const Tensor log_ratio_w =
        sub(gaussian_log_density(w, beta, sigma_b), gaussian_log_density(w, zero, prior_w));
    const Tensor term = sub(ll, scale(add(log_ratio_z0, log_ratio_w), config.kl_weight));
    total = add(total, term);
  }
  out.loss = scale(total, -1.0 / static_cast<double>(out.record.accepted.size()));
  return out;
}

LossGradient loss_and_gradient(const MeNodeModel& model, const Series& x_obs,
                               const TimeGrid& grid, const TrainConfig& config,
                               const NoiseBank& bank,
                               std::optional<std::span<const std::size_t>> frozen) {
  Tape tape;
  const auto attached = tape.watch_all(model.parameters());
  SubjectLoss sl = loss_subject(model, attached, x_obs, grid, config, bank, frozen);
  const Gradients g = backward(tape, sl.loss);

  LossGradient out;
  out.loss = sl.loss.item();
  out.record = std::move(sl.record);
  out.grads.reserve(attached.size());
  for (const auto& p : attached) {
    auto it = g.find(p.node());
    out.grads.push_back(it != g.end() ? it->second : Tensor::zeros(p.shape()));
  }
  return out;
}

RecoveredParams recover_parameters(const MeNodeModel& model, const PanelDataset& data) {
  RecoveredParams out;
  const auto& params = model.parameters();
  const auto beta = params[model.beta_index()].values();
  out.beta.assign(beta.begin(), beta.end());
  for (double v : params[model.log_sigma_b_index()].values()) out.sigma_b.push_back(std::exp(v));
  if (data.empty()) return out;

  std::vector<std::pair<double, double>> per_subject(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const Posterior q = model.encode(data.observed(i));
    double mu = 0.0;
    double sigma = 0.0;
    for (std::size_t j = 0; j < q.mu.size(); ++j) {
      mu += q.mu[j];
      sigma += q.sigma[j];
    }
    const auto p = static_cast<double>(q.mu.size());
    per_subject[i] = {mu / p, sigma / p};
  });
  for (const auto& [mu, sigma] : per_subject) {
    out.mu += mu;
    out.sigma += sigma;
  }
  out.mu /= static_cast<double>(data.size());
  out.sigma /= static_cast<double>(data.size());
  return out;
}

namespace {

void append_list(std::ostringstream& out, const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out << ',';
    out << format_double(values[i]);
  }
}

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;

}  // namespace

std::string format_epoch_line(const EpochStats& s) {
  std::ostringstream out;
  out << "epoch=" << s.epoch << " loss=" << format_double(s.mean_loss)
      << " eps=" << format_double(s.mean_epsilon)
      << " mu=" << format_double(s.recovered.mu)
      << " sigma=" << format_double(s.recovered.sigma) << " beta=";
  append_list(out, s.recovered.beta);
  out << " sigma_b=";
  append_list(out, s.recovered.sigma_b);
  return out.str();
}

Trainer::Trainer(MeNodeModel& model, TrainConfig config)
    : Trainer(model, config, Adam(config.learning_rate), 0) {}

Trainer::Trainer(MeNodeModel& model, TrainConfig config, Adam optimizer,
                 std::size_t epochs_done)
    : model_(model),
      config_(std::move(config)),
      optimizer_(std::move(optimizer)),
      epochs_done_(epochs_done) {
  config_.validate();
}

EpochStats Trainer::run_epoch(const PanelDataset& data) {
  if (data.empty()) throw ContractError("training dataset is empty");
  const auto start = std::chrono::steady_clock::now();
  const std::size_t epoch = epochs_done_ + 1;
  const auto& cfg = model_.config();
  const TimeGrid grid = data.observed_grid(cfg.substeps);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(config_.seed, kShuffleStream, epoch));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  double loss_sum = 0.0;
  double eps_sum = 0.0;
  for (std::size_t begin = 0; begin < order.size(); begin += config_.batch_size) {
    const std::size_t end = std::min(order.size(), begin + config_.batch_size);
    std::vector<LossGradient> results(end - begin);
    parallel_for(end - begin, [&](std::size_t b) {
      const std::size_t subject = order[begin + b];
      const NoiseBank bank =
          NoiseBank::draw(config_.n_z0, config_.n_w, cfg.latent_dim, cfg.effect_dim,
                          derive_seed(config_.seed, epoch, subject));
      try {
        results[b] = loss_and_gradient(model_, data.observed(subject), grid, config_, bank);
      } catch (const TrainingError& e) {
        throw TrainingError("subject " + std::to_string(data.info(subject).subject_id) +
                            ": " + e.what());
      }
    });

    std::vector<Tensor> grads;
    for (const auto& p : model_.parameters()) grads.push_back(Tensor::zeros(p.shape()));
    const double inv = 1.0 / static_cast<double>(results.size());
    bool finite = true;
    for (const auto& r : results) {
      finite = finite && std::isfinite(r.loss);
      loss_sum += r.loss;
      eps_sum += r.record.epsilon;
      for (std::size_t i = 0; i < grads.size(); ++i) {
        auto acc = grads[i].mutable_values();
        const auto g = r.grads[i].values();
        for (std::size_t j = 0; j < acc.size(); ++j) {
          acc[j] += inv * g[j];
          finite = finite && std::isfinite(g[j]);
        }
      }
    }
    if (!finite) {
      throw TrainingError("non-finite loss or gradient in epoch " + std::to_string(epoch) +
                          "; parameters left at the last good step");
    }
    optimizer_.step(model_.parameters(), grads);
  }

  ++epochs_done_;
  EpochStats stats;
  stats.epoch = epoch;
  stats.mean_loss = loss_sum / static_cast<double>(data.size());
  stats.mean_epsilon = eps_sum / static_cast<double>(data.size());
  stats.recovered = recover_parameters(model_, data);
  stats.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

TrainReport Trainer::train(const PanelDataset& data, std::ostream* log,
                           const std::function<void(const EpochStats&)>& on_epoch) {
  TrainReport report;
  while (epochs_done_ < config_.epochs) {
    EpochStats stats = run_epoch(data);
    if (log) *log << format_epoch_line(stats) << '\n' << std::flush;
    if (on_epoch) on_epoch(stats);
    report.epochs.push_back(std::move(stats));
  }
  if (!report.epochs.empty()) report.final_params = report.epochs.back().recovered;
  return report;
}

TrainReport train(MeNodeModel& model, const PanelDataset& data,
                  const TrainConfig& config, std::ostream* log) {
  Trainer trainer(model, config);
  return trainer.train(data, log);
}

double reconstruction_mse(const MeNodeModel& model, const PanelDataset& data,
                          std::size_t n_z0, std::size_t n_w, std::uint64_t seed) {
  if (data.empty()) throw ContractError("reconstruction_mse on an empty dataset");
  const auto& cfg = model.config();
  const TimeGrid grid = data.observed_grid(cfg.substeps);
  std::vector<double> eps(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const NoiseBank bank =
        NoiseBank::draw(n_z0, n_w, cfg.latent_dim, cfg.effect_dim, derive_seed(seed, i));
    eps[i] = select_candidates(model, data.observed(i), grid, bank, 1).epsilon;
  });
  return std::accumulate(eps.begin(), eps.end(), 0.0) / static_cast<double>(eps.size());
}

double mean_trajectory_mse(const MeNodeModel& model, const PanelDataset& data) {
  if (data.empty()) throw ContractError("mean_trajectory_mse on an empty dataset");
  const TimeGrid grid = data.observed_grid(model.config().substeps);
  std::vector<double> err(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const Series x = data.observed(i);
    const Posterior q = model.encode(x);
    const auto traj = model.solve(q.mu, model.beta(model.parameters()), grid);
    err[i] = mse(x, model.decode(traj));
  });
  return std::accumulate(err.begin(), err.end(), 0.0) / static_cast<double>(err.size());
}

GradientCheck elbo_gradient_check(const MeNodeModel& model, const Series& x_obs,
                                  const TimeGrid& grid, const TrainConfig& config,
                                  const NoiseBank& bank, double h, double floor) {
  const AcceptanceRecord rec = select_candidates(model, x_obs, grid, bank, config.accept_k);
  const std::span<const std::size_t> frozen(rec.accepted);
  const LossGradient analytic = loss_and_gradient(model, x_obs, grid, config, bank, frozen);

  GradientCheck out;
  std::vector<Tensor> params = model.parameters();
  auto loss_at = [&](const std::vector<Tensor>& p) {
    return loss_subject(model, p, x_obs, grid, config, bank, frozen).loss.item();
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    double group_max = 0.0;
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const double original = params[i][j];
      params[i].mutable_values()[j] = original + h;
      const double up = loss_at(params);
      params[i].mutable_values()[j] = original - h;
      const double down = loss_at(params);
      params[i].mutable_values()[j] = original;
      const double numeric = (up - down) / (2.0 * h);
      const double tape = analytic.grads[i][j];
      const double denom = std::max({std::abs(numeric), std::abs(tape), floor});
      group_max = std::max(group_max, std::abs(numeric - tape) / denom);
      ++out.n_checked;
    }
    out.group_max_error.push_back(group_max);
    out.max_relative_error = std::max(out.max_relative_error, group_max);
  }
  return out;
}

}  // namespace menode
