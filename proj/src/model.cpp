#include "menode/model.hpp"

#include "menode/error.hpp"
#include "menode/ops.hpp"

#include <cmath>

namespace menode {

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw ContractError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation activation) {
  return activation == Activation::tanh ? "tanh" : "relu";
}

GammaKind parse_gamma_kind(std::string_view name) {
  if (name == "mlp") return GammaKind::mlp;
  if (name == "state") return GammaKind::state;
  throw ContractError("unknown gamma kind '" + std::string(name) + "'");
}

std::string_view to_string(GammaKind kind) {
  return kind == GammaKind::mlp ? "mlp" : "state";
}

Mlp::Mlp(std::vector<std::size_t> widths, Activation activation, std::size_t offset)
    : widths_(std::move(widths)), activation_(activation), offset_(offset) {
  if (widths_.size() < 2) throw ContractError("an MLP needs input and output widths");
  for (auto w : widths_) {
    if (w == 0) throw ContractError("MLP layer widths must be positive");
  }
}

void Mlp::initialize(std::vector<Tensor>& params, std::vector<std::string>& names,
                     const std::string& prefix, Rng& rng, double final_gain) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const std::size_t in = widths_[l];
    const std::size_t out = widths_[l + 1];
    double scale = std::sqrt(2.0 / static_cast<double>(in + out));
    if (l + 2 == widths_.size()) scale *= final_gain;
    Buffer w(in * out);
    for (auto& v : w) v = scale * normal(rng);
    params.emplace_back(Shape{out, in}, std::move(w));
    names.push_back(prefix + "." + std::to_string(l) + ".weight");
    params.push_back(Tensor::zeros({out}));
    names.push_back(prefix + "." + std::to_string(l) + ".bias");
  }
}

Tensor Mlp::forward(ParamView params, const Tensor& x) const {
  Tensor h = x;
  const std::size_t n_layers = widths_.size() - 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Tensor& w = params[offset_ + 2 * l];
    const Tensor& b = params[offset_ + 2 * l + 1];
    h = add(matmul(w, h), b);
    if (l + 1 < n_layers) {
      h = activation_ == Activation::tanh ? tanh(h) : relu(h);
    }
  }
  return h;
}

void ModelConfig::validate() const {
  if (latent_dim < 1 || effect_dim < 1 || obs_dim < 1) {
    throw ContractError("latent, effect and observation dimensions must be >= 1");
  }
  if (obs_window < 1) throw ContractError("observation window must be >= 1");
  if (identity_mode && latent_dim != obs_dim) {
    throw ContractError("identity mode requires latent_dim == obs_dim");
  }
  if (gamma == GammaKind::state && latent_dim != effect_dim) {
    throw ContractError("gamma=state requires latent_dim == effect_dim");
  }
  if (!(obs_sigma > 0 && sigma0 > 0 && prior_z0_sigma > 0 && prior_w_sigma > 0 &&
        init_sigma_b > 0)) {
    throw ContractError("scale parameters must be positive");
  }
  if (substeps < 1) throw ContractError("substeps must be >= 1");
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.identity_mode = true;
  c.gamma = GammaKind::state;
  c.encoder_hidden.clear();
  c.gamma_hidden.clear();
  c.decoder_hidden.clear();
  // the toy data is noise free; a tight likelihood keeps sigma_b from
  // inflating under best-of-M selection
  c.obs_sigma = 0.01;
  c.init_sigma_b = 0.01;
  return c;
}

namespace {

std::vector<std::size_t> widths(std::size_t in, const std::vector<std::size_t>& hidden,
                                std::size_t out) {
  std::vector<std::size_t> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

}  // namespace

MeNodeModel::MeNodeModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  const auto p = config_.latent_dim;
  const auto m = config_.effect_dim;
  const auto d = config_.obs_dim;
  if (!config_.identity_mode) {
    encoder_ = Mlp(widths(config_.obs_window * d, config_.encoder_hidden, 2 * p),
                   config_.activation, params_.size());
    encoder_.initialize(params_, names_, "encoder", rng);
  }
  if (config_.gamma == GammaKind::mlp) {
    gamma_net_ = Mlp(widths(p, config_.gamma_hidden, p * m), config_.activation,
                     params_.size());
    gamma_net_.initialize(params_, names_, "gamma", rng, 0.5);
  }
  if (!config_.identity_mode) {
    decoder_ = Mlp(widths(p, config_.decoder_hidden, d), config_.activation,
                   params_.size());
    decoder_.initialize(params_, names_, "decoder", rng);
  }
  params_.push_back(Tensor::filled({m}, config_.init_beta));
  names_.emplace_back("me.beta");
  params_.push_back(Tensor::filled({m}, std::log(config_.init_sigma_b)));
  names_.emplace_back("me.log_sigma_b");
}

std::size_t MeNodeModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : params_) n += t.size();
  return n;
}

void MeNodeModel::set_gamma_override(std::function<Tensor(const Tensor& z)> gamma) {
  gamma_override_ = std::move(gamma);
}

Posterior MeNodeModel::encode(ParamView params, const Series& x_obs) const {
  const auto p = config_.latent_dim;
  if (x_obs.dim() != config_.obs_dim) {
    throw ContractError("encoder expects observations of dimension " +
                        std::to_string(config_.obs_dim));
  }
  if (config_.identity_mode) {
    if (x_obs.n_times() < 1) throw ContractError("encoder needs at least one observation");
    const auto first = x_obs.row(0);
    return {Tensor::vector(first), Tensor::filled({p}, config_.sigma0)};
  }
  if (x_obs.n_times() != config_.obs_window) {
    throw ContractError("encoder expects " + std::to_string(config_.obs_window) +
                        " observed time points, got " + std::to_string(x_obs.n_times()));
  }
  const Tensor out = encoder_.forward(params, Tensor::vector(x_obs.values()));
  return {slice(out, 0, p), exp(slice(out, p, p))};
}

Tensor MeNodeModel::beta(ParamView params) const { return params[beta_index()]; }

Tensor MeNodeModel::sigma_b(ParamView params) const {
  return exp(params[log_sigma_b_index()]);
}

Tensor MeNodeModel::gamma(ParamView params, const Tensor& z) const {
  const auto p = config_.latent_dim;
  const auto m = config_.effect_dim;
  if (gamma_override_) return reshape(gamma_override_(z), {p, m});
  if (config_.gamma == GammaKind::state) {
    Buffer diag(p * m, 0.0);
    for (std::size_t i = 0; i < p; ++i) diag[i * m + i] = 1.0;
    // diag(z) = I * z broadcast by rows; realised as mul with a mask so the
    // result stays differentiable in z.
    Tensor rows = reshape(z, {p, 1});
    Tensor ones = Tensor::filled({1, m}, 1.0);
    return mul(Tensor({p, m}, std::move(diag)), matmul(rows, ones));
  }
  return reshape(gamma_net_.forward(params, z), {p, m});
}

Tensor MeNodeModel::drift(ParamView params, const Tensor& z, const Tensor& w) const {
  if (!gamma_override_ && config_.gamma == GammaKind::state) return mul(z, w);
  return matmul(gamma(params, z), w);
}

LatentTrajectory MeNodeModel::solve(ParamView params, const Tensor& z0,
                                    const Tensor& w, const TimeGrid& grid) const {
  DriftFn f = [this, params](const Tensor& z, const Tensor& wv, double) {
    return drift(params, z, wv);
  };
  return integrate(f, z0, w, grid, config_.method);
}

std::vector<Tensor> MeNodeModel::decode(ParamView params,
                                        const LatentTrajectory& traj) const {
  std::vector<Tensor> out;
  out.reserve(traj.states.size());
  for (const auto& z : traj.states) {
    out.push_back(config_.identity_mode ? z : decoder_.forward(params, z));
  }
  return out;
}

SubjectSample MeNodeModel::sample_subject(ParamView params, const Series& x_seq,
                                          const TimeGrid& grid,
                                          const Tensor& noise_z0,
                                          const Tensor& noise_w) const {
  const Posterior q = encode(params, x_seq);
  Tensor z0 = reparam_sample(q.mu, q.sigma, noise_z0);
  Tensor w = reparam_sample(beta(params), sigma_b(params), noise_w);
  LatentTrajectory traj = solve(params, z0, w, grid);
  return {std::move(z0), std::move(w), std::move(traj)};
}

Tensor log_likelihood(const Series& x_obs, const std::vector<Tensor>& x_pred,
                      double obs_sigma) {
  if (x_pred.size() != x_obs.n_times()) {
    throw ContractError("log_likelihood: " + std::to_string(x_obs.n_times()) +
                        " observations but " + std::to_string(x_pred.size()) +
                        " predictions");
  }
  if (!(obs_sigma > 0.0)) throw DomainError("log_likelihood: obs_sigma must be positive");
  Tensor sq = Tensor::scalar(0.0);
  for (std::size_t t = 0; t < x_pred.size(); ++t) {
    if (x_pred[t].size() != x_obs.dim()) {
      throw ContractError("log_likelihood: prediction " + std::to_string(t) +
                          " has shape " + shape_string(x_pred[t].shape()));
    }
    const Tensor obs = Tensor::vector(x_obs.row(t));
    sq = add(sq, sum(square(sub(reshape(x_pred[t], {x_obs.dim()}), obs))));
  }
  const double n = static_cast<double>(x_obs.values().size());
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  const double norm = n * (std::log(obs_sigma) + kHalfLog2Pi);
  return sub(scale(sq, -0.5 / (obs_sigma * obs_sigma)), Tensor::scalar(norm));
}

double mse(const Series& x_obs, const std::vector<Tensor>& x_pred) {
  if (x_pred.size() != x_obs.n_times()) {
    throw ContractError("mse: sequence lengths differ");
  }
  double acc = 0.0;
  for (std::size_t t = 0; t < x_pred.size(); ++t) {
    const auto row = x_obs.row(t);
    if (x_pred[t].size() != row.size()) throw ContractError("mse: row widths differ");
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double r = x_pred[t][j] - row[j];
      acc += r * r;
    }
  }
  return acc / static_cast<double>(x_obs.values().size());
}

Series to_series(const std::vector<Tensor>& rows) {
  if (rows.empty()) return {};
  const std::size_t dim = rows.front().size();
  std::vector<double> values;
  values.reserve(rows.size() * dim);
  for (const auto& r : rows) {
    if (r.size() != dim) throw DimensionError("to_series: ragged rows");
    values.insert(values.end(), r.values().begin(), r.values().end());
  }
  return Series(rows.size(), dim, std::move(values));
}

}  // namespace menode
