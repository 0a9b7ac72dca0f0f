#pragma once

#include "menode/tensor.hpp"

#include <cstddef>
#include <vector>

namespace menode {

// Adam with bias correction.
class Adam {
 public:
  explicit Adam(double learning_rate = 1e-3, double beta1 = 0.9,
                double beta2 = 0.999, double epsilon = 1e-8);

  // params and grads must align one-to-one and by shape. Moment buffers are
  // created on the first step.
  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);

  double learning_rate() const noexcept { return lr_; }
  double beta1() const noexcept { return beta1_; }
  double beta2() const noexcept { return beta2_; }
  double epsilon() const noexcept { return eps_; }
  std::size_t steps() const noexcept { return t_; }

  const std::vector<std::vector<double>>& first_moments() const noexcept { return m_; }
  const std::vector<std::vector<double>>& second_moments() const noexcept { return v_; }

  // Restores persisted state.
  void restore(std::size_t steps, std::vector<std::vector<double>> first,
               std::vector<std::vector<double>> second);

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace menode
