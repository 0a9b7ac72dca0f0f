#pragma once

#include "menode/tensor.hpp"

#include <functional>
#include <string_view>
#include <vector>

namespace menode {

enum class OdeMethod { euler, rk4 };

OdeMethod parse_ode_method(std::string_view name);
std::string_view to_string(OdeMethod method);

// Observation times plus the number of internal solver steps taken between
// consecutive observations.
class TimeGrid {
 public:
  TimeGrid(std::vector<double> times, std::size_t substeps = 3);

  // n points evenly spaced on [t0, t1], endpoints included.
  static TimeGrid uniform(double t0, double t1, std::size_t n,
                          std::size_t substeps = 3);

  const std::vector<double>& times() const noexcept { return times_; }
  std::size_t size() const noexcept { return times_.size(); }
  std::size_t substeps() const noexcept { return substeps_; }
  double operator[](std::size_t i) const noexcept { return times_[i]; }

  // First n points, same substep count.
  TimeGrid prefix(std::size_t n) const;

 private:
  std::vector<double> times_;
  std::size_t substeps_;
};

// Right-hand side of the latent dynamics, evaluated on tensors so that the
// unrolled solver is differentiable: (z[p], w[m], t) -> dz/dt[p].
using DriftFn =
    std::function<Tensor(const Tensor& z, const Tensor& w, double t)>;

struct LatentTrajectory {
  std::vector<double> times;
  std::vector<Tensor> states;  // one per time, states[0] is z0
  Tensor z0;
  Tensor w;
};

// Fixed-step integration of dz/dt = drift(z, w, t) reporting the state at
// every grid time. Every step goes through differentiable ops, so gradients
// reach z0, w and any taped parameters captured by the drift.
// Throws DivergenceError carrying the time at which the state went
// non-finite.
LatentTrajectory integrate(const DriftFn& drift, const Tensor& z0,
                           const Tensor& w, const TimeGrid& grid,
                           OdeMethod method = OdeMethod::rk4);

}  // namespace menode
