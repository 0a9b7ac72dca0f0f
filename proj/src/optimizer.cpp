#include "menode/optimizer.hpp"

#include "menode/error.hpp"

#include <cmath>

namespace menode {

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  if (!(lr_ > 0.0)) throw ContractError("learning rate must be positive");
}

void Adam::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size()) {
    throw ContractError("optimizer: parameter and gradient counts differ");
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) {
    throw ContractError("optimizer state does not match the parameter list");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].mutable_values();
    const auto g = grads[i].values();
    if (g.size() != values.size()) {
      throw DimensionError("optimizer: gradient shape " + shape_string(grads[i].shape()) +
                           " for parameter " + shape_string(params[i].shape()));
    }
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      values[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
    }
  }
}

void Adam::restore(std::size_t steps, std::vector<std::vector<double>> first,
                   std::vector<std::vector<double>> second) {
  if (first.size() != second.size()) throw IntegrityError("optimizer moment lists differ");
  t_ = steps;
  m_ = std::move(first);
  v_ = std::move(second);
}

}  // namespace menode
