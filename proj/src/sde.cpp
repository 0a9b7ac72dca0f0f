#include "menode/sde.hpp"

#include "menode/error.hpp"
#include "menode/parallel.hpp"
#include "menode/random.hpp"

#include <cmath>
#include <optional>
#include <string>

namespace menode {
namespace {

void check_finite(double z, double t) {
  if (!std::isfinite(z)) {
    throw DivergenceError("path became non-finite at t=" + std::to_string(t), t);
  }
}

double rk4_scalar(const std::function<double(double, double)>& rhs, double z,
                  double t, double h) {
  const double k1 = rhs(z, t);
  const double k2 = rhs(z + 0.5 * h * k1, t + 0.5 * h);
  const double k3 = rhs(z + 0.5 * h * k2, t + 0.5 * h);
  const double k4 = rhs(z + h * k3, t + h);
  return z + h / 6.0 * (k1 + 2.0 * (k2 + k3) + k4);
}

// Reduces per-path results (nullopt = diverged) to moments.
MomentCurve reduce(const std::vector<double>& times,
                   const std::vector<std::optional<std::vector<double>>>& paths) {
  MomentCurve out;
  out.times = times;
  out.mean.assign(times.size(), 0.0);
  out.variance.assign(times.size(), 0.0);
  for (const auto& p : paths) {
    if (!p) {
      ++out.n_diverged;
      continue;
    }
    ++out.n_paths;
    for (std::size_t k = 0; k < times.size(); ++k) out.mean[k] += (*p)[k];
  }
  if (out.n_paths == 0) return out;
  const double n = static_cast<double>(out.n_paths);
  for (auto& m : out.mean) m /= n;
  for (const auto& p : paths) {
    if (!p) continue;
    for (std::size_t k = 0; k < times.size(); ++k) {
      const double d = (*p)[k] - out.mean[k];
      out.variance[k] += d * d;
    }
  }
  for (auto& v : out.variance) v = out.n_paths > 1 ? v / (n - 1.0) : 0.0;
  return out;
}

}  // namespace

double MomentCurve::standard_error(std::size_t i) const {
  if (n_paths == 0) return 0.0;
  return std::sqrt(variance[i] / static_cast<double>(n_paths));
}

SamplePath integrate_stratonovich(const ScalarField& f, const ScalarField& L,
                                  double z0, const TimeGrid& grid,
                                  std::uint64_t seed) {
  check_finite(z0, grid[0]);
  NormalSampler normal(seed);
  SamplePath path;
  path.times = grid.times();
  path.values.reserve(grid.size());
  path.values.push_back(z0);
  double z = z0;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double h = (grid[k + 1] - grid[k]) / static_cast<double>(grid.substeps());
    const double sqrt_h = std::sqrt(h);
    for (std::size_t s = 0; s < grid.substeps(); ++s) {
      const double t = grid[k] + h * static_cast<double>(s);
      const double dw = sqrt_h * normal();
      const double g0 = L(z, t);
      const double predictor = z + g0 * dw;
      z = z + f(z, t) * h + 0.5 * (g0 + L(predictor, t)) * dw;
      check_finite(z, t + h);
    }
    path.values.push_back(z);
  }
  return path;
}

MomentCurve stratonovich_ensemble(const ScalarField& f, const ScalarField& L,
                                  double z0, const TimeGrid& grid,
                                  std::size_t n_paths, std::uint64_t seed) {
  if (n_paths < 1) throw ContractError("ensemble needs n_paths >= 1");
  std::vector<std::optional<std::vector<double>>> paths(n_paths);
  parallel_for(n_paths, [&](std::size_t i) {
    try {
      paths[i] = integrate_stratonovich(f, L, z0, grid, derive_seed(seed, i)).values;
    } catch (const DivergenceError&) {
      paths[i] = std::nullopt;
    }
  });
  return reduce(grid.times(), paths);
}

MomentCurve wong_zakai_ensemble(const ScalarField& f, const ScalarField& g,
                                double z0, const TimeGrid& grid,
                                std::size_t n_paths, std::uint64_t seed) {
  if (n_paths < 1) throw ContractError("ensemble needs n_paths >= 1");
  std::vector<std::optional<std::vector<double>>> paths(n_paths);
  parallel_for(n_paths, [&](std::size_t i) {
    NormalSampler normal(derive_seed(seed, i));
    const double b = normal();
    auto rhs = [&](double z, double t) { return f(z, t) + g(z, t) * b; };
    std::vector<double> values;
    values.reserve(grid.size());
    values.push_back(z0);
    double z = z0;
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
      const double h = (grid[k + 1] - grid[k]) / static_cast<double>(grid.substeps());
      for (std::size_t s = 0; s < grid.substeps(); ++s) {
        z = rk4_scalar(rhs, z, grid[k] + h * static_cast<double>(s), h);
      }
      if (!std::isfinite(z)) return;  // leaves paths[i] empty: diverged
      values.push_back(z);
    }
    paths[i] = std::move(values);
  });
  return reduce(grid.times(), paths);
}

FieldSpec FieldSpec::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw ContractError("field spec '" + std::string(text) +
                        "' must look like linear:<a> or const:<c>");
  }
  const auto kind = text.substr(0, colon);
  const std::string value(text.substr(colon + 1));
  FieldSpec spec;
  if (kind == "linear") {
    spec.kind = Kind::linear;
  } else if (kind == "const") {
    spec.kind = Kind::constant;
  } else {
    throw ContractError("unknown field kind '" + std::string(kind) + "'");
  }
  std::size_t used = 0;
  try {
    spec.coef = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) {
    throw ContractError("bad coefficient '" + value + "' in field spec");
  }
  return spec;
}

ScalarField FieldSpec::field() const {
  const double c = coef;
  if (kind == Kind::linear) return [c](double z, double) { return c * z; };
  return [c](double, double) { return c; };
}

std::optional<Moments> analytic_stratonovich(const FieldSpec& f,
                                             const FieldSpec& g, double z0,
                                             double t) {
  using K = FieldSpec::Kind;
  const double a = f.coef;
  const double s = g.coef;
  if (f.kind == K::linear && g.kind == K::linear) {
    // z_t = z0 exp(a t + s W_t)
    const double m = z0 * std::exp(a * t + 0.5 * s * s * t);
    const double v = z0 * z0 * std::exp(2.0 * a * t) *
                     (std::exp(2.0 * s * s * t) - std::exp(s * s * t));
    return Moments{m, v};
  }
  if (f.kind == K::linear && g.kind == K::constant) {
    const double v = a == 0.0 ? s * s * t
                              : s * s * (std::exp(2.0 * a * t) - 1.0) / (2.0 * a);
    return Moments{z0 * std::exp(a * t), v};
  }
  if (f.kind == K::constant && g.kind == K::constant) {
    return Moments{z0 + a * t, s * s * t};
  }
  return std::nullopt;
}

std::optional<Moments> analytic_wong_zakai(const FieldSpec& f,
                                           const FieldSpec& g, double z0,
                                           double t) {
  using K = FieldSpec::Kind;
  const double a = f.coef;
  const double s = g.coef;
  if (f.kind == K::linear && g.kind == K::linear) {
    // z_t = z0 exp((a + s b) t), lognormal in b
    const double q = s * s * t * t;
    const double m = z0 * std::exp(a * t + 0.5 * q);
    const double v = z0 * z0 * std::exp(2.0 * a * t) * (std::exp(2.0 * q) - std::exp(q));
    return Moments{m, v};
  }
  if (f.kind == K::linear && g.kind == K::constant) {
    const double growth = a == 0.0 ? t : (std::exp(a * t) - 1.0) / a;
    return Moments{z0 * std::exp(a * t), s * s * growth * growth};
  }
  if (f.kind == K::constant && g.kind == K::constant) {
    return Moments{z0 + a * t, s * s * t * t};
  }
  return std::nullopt;
}

}  // namespace menode
