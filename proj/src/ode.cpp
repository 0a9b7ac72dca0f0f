#include "menode/ode.hpp"

#include "menode/error.hpp"
#include "menode/ops.hpp"

#include <cmath>
#include <string>

namespace menode {

OdeMethod parse_ode_method(std::string_view name) {
  if (name == "euler") return OdeMethod::euler;
  if (name == "rk4") return OdeMethod::rk4;
  throw ContractError("unknown ODE method '" + std::string(name) + "'");
}

std::string_view to_string(OdeMethod method) {
  return method == OdeMethod::euler ? "euler" : "rk4";
}

TimeGrid::TimeGrid(std::vector<double> times, std::size_t substeps)
    : times_(std::move(times)), substeps_(substeps) {
  if (times_.empty()) throw ContractError("time grid is empty");
  if (substeps_ < 1) throw ContractError("time grid needs substeps >= 1");
  for (std::size_t i = 1; i < times_.size(); ++i) {
    if (!(times_[i] > times_[i - 1])) {
      throw ContractError("time grid is not strictly increasing at index " +
                          std::to_string(i));
    }
  }
}

TimeGrid TimeGrid::uniform(double t0, double t1, std::size_t n,
                           std::size_t substeps) {
  if (n < 1) throw ContractError("uniform grid needs at least one point");
  std::vector<double> times(n);
  for (std::size_t i = 0; i < n; ++i) {
    times[i] = n == 1 ? t0
                      : t0 + (t1 - t0) * static_cast<double>(i) /
                                 static_cast<double>(n - 1);
  }
  return TimeGrid(std::move(times), substeps);
}

TimeGrid TimeGrid::prefix(std::size_t n) const {
  if (n < 1 || n > times_.size()) {
    throw ContractError("grid prefix length out of range");
  }
  return TimeGrid(std::vector<double>(times_.begin(),
                                      times_.begin() + static_cast<std::ptrdiff_t>(n)),
                  substeps_);
}

namespace {

void check_finite(const Tensor& z, double t) {
  for (double v : z.values()) {
    if (!std::isfinite(v)) {
      throw DivergenceError("latent state became non-finite at t=" +
                                std::to_string(t),
                            t);
    }
  }
}

Tensor rk4_step(const DriftFn& f, const Tensor& z, const Tensor& w, double t,
                double h) {
  const Tensor k1 = f(z, w, t);
  const Tensor k2 = f(add(z, scale(k1, 0.5 * h)), w, t + 0.5 * h);
  const Tensor k3 = f(add(z, scale(k2, 0.5 * h)), w, t + 0.5 * h);
  const Tensor k4 = f(add(z, scale(k3, h)), w, t + h);
  const Tensor incr = add(add(k1, k4), scale(add(k2, k3), 2.0));
  return add(z, scale(incr, h / 6.0));
}

}  // namespace

LatentTrajectory integrate(const DriftFn& drift, const Tensor& z0,
                           const Tensor& w, const TimeGrid& grid,
                           OdeMethod method) {
  check_finite(z0, grid[0]);
  LatentTrajectory traj;
  traj.times = grid.times();
  traj.z0 = z0;
  traj.w = w;
  traj.states.reserve(grid.size());
  traj.states.push_back(z0);

  Tensor z = z0;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double h = (grid[k + 1] - grid[k]) / static_cast<double>(grid.substeps());
    for (std::size_t s = 0; s < grid.substeps(); ++s) {
      const double t = grid[k] + h * static_cast<double>(s);
      Tensor next = method == OdeMethod::rk4
                        ? rk4_step(drift, z, w, t, h)
                        : add(z, scale(drift(z, w, t), h));
      if (next.shape() != z0.shape()) {
        throw DimensionError("drift returned shape " + shape_string(next.shape()) +
                             " for state " + shape_string(z0.shape()));
      }
      check_finite(next, t + h);
      z = std::move(next);
    }
    traj.states.push_back(z);
  }
  return traj;
}

}  // namespace menode
