#pragma once

#include "menode/dataset.hpp"
#include "menode/ode.hpp"
#include "menode/random.hpp"
#include "menode/tensor.hpp"

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace menode {

// Parameters the forward functions read. Either the model's own tensors or
// tape-attached copies of them (see Tape::watch_all).
using ParamView = std::span<const Tensor>;

enum class Activation { tanh, relu };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation activation);

// Fully connected network. Hidden layers use the configured activation, the
// final layer is affine. Weights live in an external parameter list starting
// at offset(): [W0, b0, W1, b1, ...] with W_l of shape [out, in].
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<std::size_t> widths, Activation activation, std::size_t offset);

  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  std::size_t offset() const noexcept { return offset_; }
  std::size_t n_tensors() const noexcept {
    return widths_.empty() ? 0 : 2 * (widths_.size() - 1);
  }
  std::size_t input_dim() const { return widths_.front(); }
  std::size_t output_dim() const { return widths_.back(); }

  // Appends freshly initialized weights (Glorot normal) and zero biases.
  // The final layer's weights are multiplied by final_gain.
  void initialize(std::vector<Tensor>& params, std::vector<std::string>& names,
                  const std::string& prefix, Rng& rng, double final_gain = 1.0) const;

  Tensor forward(ParamView params, const Tensor& x) const;

 private:
  std::vector<std::size_t> widths_;
  Activation activation_ = Activation::tanh;
  std::size_t offset_ = 0;
};

// How the drift matrix Gamma(z) in dz/dt = Gamma(z) w is produced.
//   mlp:   an MLP with p*m outputs reshaped to [p, m]
//   state: Gamma(z) = diag(z), requires p == m (the toy system dz/dt = z w)
enum class GammaKind { mlp, state };

GammaKind parse_gamma_kind(std::string_view name);
std::string_view to_string(GammaKind kind);

struct ModelConfig {
  std::size_t latent_dim = 1;   // p
  std::size_t effect_dim = 1;   // m
  std::size_t obs_dim = 1;      // d
  std::size_t obs_window = 10;  // observed time points fed to the encoder
  // Identity encoder/decoder: z0 ~ N(x at the first time, sigma0) and
  // x = z. Requires p == d.
  bool identity_mode = false;
  GammaKind gamma = GammaKind::mlp;
  std::vector<std::size_t> encoder_hidden{32};
  std::vector<std::size_t> gamma_hidden{32};
  std::vector<std::size_t> decoder_hidden{32};
  Activation activation = Activation::tanh;
  double obs_sigma = 0.1;
  double sigma0 = 0.01;
  double prior_z0_sigma = 1.0;
  double prior_w_sigma = 1.0;
  double init_beta = 0.0;
  double init_sigma_b = 0.1;
  OdeMethod method = OdeMethod::rk4;
  std::size_t substeps = 3;

  void validate() const;

  // The toy configuration: p = m = d = 1, identity encoder/decoder and
  // Gamma(z) = z.
  static ModelConfig toy();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Posterior {
  Tensor mu;
  Tensor sigma;
};

struct SubjectSample {
  Tensor z0;
  Tensor w;
  LatentTrajectory trajectory;
};

// The mixed-effects neural ODE
//   z0 ~ N(mu, sigma) with (mu, sigma) = E(x)
//   w  ~ N(beta, diag(sigma_b^2))
//   dz/dt = Gamma(z) w
//   x_t = D(z_t) + eps_t,  eps_t ~ N(0, obs_sigma^2)
//
// Every forward function takes a ParamView so the same code runs on plain
// values and on tape-attached parameters. Overloads without a view use the
// model's own parameters.
class MeNodeModel {
 public:
  explicit MeNodeModel(ModelConfig config, std::uint64_t seed = 0);

  const ModelConfig& config() const noexcept { return config_; }
  const std::vector<Tensor>& parameters() const noexcept { return params_; }
  std::vector<Tensor>& parameters() noexcept { return params_; }
  const std::vector<std::string>& parameter_names() const noexcept { return names_; }
  std::size_t parameter_count() const;  // scalars

  std::size_t beta_index() const noexcept { return params_.size() - 2; }
  std::size_t log_sigma_b_index() const noexcept { return params_.size() - 1; }

  // Replaces Gamma with an arbitrary function of the latent state. Used to
  // build analytically tractable systems; the override has no parameters.
  void set_gamma_override(std::function<Tensor(const Tensor& z)> gamma);

  Posterior encode(ParamView params, const Series& x_obs) const;
  Posterior encode(const Series& x_obs) const { return encode(params_, x_obs); }

  Tensor beta(ParamView params) const;
  Tensor sigma_b(ParamView params) const;

  // Gamma(z) as a [p, m] matrix.
  Tensor gamma(ParamView params, const Tensor& z) const;
  Tensor drift(ParamView params, const Tensor& z, const Tensor& w) const;

  LatentTrajectory solve(ParamView params, const Tensor& z0, const Tensor& w,
                         const TimeGrid& grid) const;
  LatentTrajectory solve(const Tensor& z0, const Tensor& w,
                         const TimeGrid& grid) const {
    return solve(params_, z0, w, grid);
  }

  // One decoded observation [d] per trajectory time.
  std::vector<Tensor> decode(ParamView params, const LatentTrajectory& traj) const;
  std::vector<Tensor> decode(const LatentTrajectory& traj) const {
    return decode(params_, traj);
  }

  // z0 = mu + sigma * noise_z0, w = beta + sigma_b * noise_w, then solve.
  SubjectSample sample_subject(ParamView params, const Series& x_seq,
                               const TimeGrid& grid, const Tensor& noise_z0,
                               const Tensor& noise_w) const;
  SubjectSample sample_subject(const Series& x_seq, const TimeGrid& grid,
                               const Tensor& noise_z0, const Tensor& noise_w) const {
    return sample_subject(params_, x_seq, grid, noise_z0, noise_w);
  }

 private:
  ModelConfig config_;
  Mlp encoder_;
  Mlp gamma_net_;
  Mlp decoder_;
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
  std::function<Tensor(const Tensor&)> gamma_override_;
};

// Gaussian log-likelihood with fixed scale:
//   -sum (x_obs - x_pred)^2 / (2 sigma^2) - N log(sigma sqrt(2 pi)).
Tensor log_likelihood(const Series& x_obs, const std::vector<Tensor>& x_pred,
                      double obs_sigma);

// Mean squared error over all scalars, values only.
double mse(const Series& x_obs, const std::vector<Tensor>& x_pred);

Series to_series(const std::vector<Tensor>& rows);

}  // namespace menode
