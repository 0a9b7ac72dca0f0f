#pragma once

#include "menode/ode.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

namespace menode {

// Scalar coefficient function (z, t) -> value.
using ScalarField = std::function<double(double z, double t)>;

struct SamplePath {
  std::vector<double> times;
  std::vector<double> values;
};

// Per-time ensemble statistics. Paths that diverged are excluded and
// counted.
struct MomentCurve {
  std::vector<double> times;
  std::vector<double> mean;
  std::vector<double> variance;  // unbiased
  std::size_t n_paths = 0;       // paths that contributed
  std::size_t n_diverged = 0;

  // Monte Carlo standard error of mean[i].
  double standard_error(std::size_t i) const;
};

// One path of dz = f(z,t) dt + L(z,t) o dW (Stratonovich) using the
// Euler-Heun scheme: Euler drift, trapezoidal diffusion. The step is
// (t_{k+1} - t_k) / grid.substeps(). Reproducible for a given seed.
// Throws DivergenceError if the path leaves the finite range.
SamplePath integrate_stratonovich(const ScalarField& f, const ScalarField& L,
                                  double z0, const TimeGrid& grid,
                                  std::uint64_t seed);

// Moments over n_paths Euler-Heun paths with seeds derived from `seed`.
MomentCurve stratonovich_ensemble(const ScalarField& f, const ScalarField& L,
                                  double z0, const TimeGrid& grid,
                                  std::size_t n_paths, std::uint64_t seed);

// Random-coefficient ODE ensemble dz/dt = f(z,t) + g(z,t) * b with one
// b ~ N(0,1) per path, each path integrated with fixed-step RK4.
MomentCurve wong_zakai_ensemble(const ScalarField& f, const ScalarField& g,
                                double z0, const TimeGrid& grid,
                                std::size_t n_paths, std::uint64_t seed);

// Coefficient families understood by the sde-compare tool: "linear:a"
// means a*z, "const:c" means c.
struct FieldSpec {
  enum class Kind { linear, constant };
  Kind kind = Kind::linear;
  double coef = 0.0;

  static FieldSpec parse(std::string_view text);
  ScalarField field() const;
};

struct Moments {
  double mean;
  double variance;
};

// Closed-form moments at time t where they exist for the (f, g) family
// pair; std::nullopt otherwise.
std::optional<Moments> analytic_stratonovich(const FieldSpec& f,
                                             const FieldSpec& g, double z0,
                                             double t);
std::optional<Moments> analytic_wong_zakai(const FieldSpec& f,
                                           const FieldSpec& g, double z0,
                                           double t);

}  // namespace menode
