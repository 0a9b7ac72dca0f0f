#include "menode/ops.hpp"

#include "menode/error.hpp"

#include <cmath>

namespace menode {
namespace {

Buffer copy_values(const Tensor& t) {
  return Buffer(t.values().begin(), t.values().end());
}

Shape broadcast_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return a.shape();
  if (a.is_scalar()) return b.shape();
  if (b.is_scalar()) return a.shape();
  throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) +
                       " and " + shape_string(b.shape()) + " do not conform");
}

// Elementwise binary op with rank-0 broadcasting. da/db give the partial
// derivatives of f with respect to its first/second argument.
template <class F, class DA, class DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA da,
              DB db) {
  Shape shape = broadcast_shape(op, a, b);
  const std::size_t n = shape_size(shape);
  const bool a_scalar = a.size() == 1 && n != 1;
  const bool b_scalar = b.size() == 1 && n != 1;
  Buffer out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = f(a[a_scalar ? 0 : i], b[b_scalar ? 0 : i]);
  }
  Tape* tape = common_tape({&a, &b});
  if (!tape) return Tensor(std::move(shape), std::move(out));
  return tape->record(
      std::move(shape), std::move(out), {&a, &b},
      [av = copy_values(a), bv = copy_values(b), a_scalar, b_scalar, da, db](
          std::span<const double> g, std::span<double* const> parents) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double x = av[a_scalar ? 0 : i];
          const double y = bv[b_scalar ? 0 : i];
          if (parents[0]) parents[0][a_scalar ? 0 : i] += g[i] * da(x, y);
          if (parents[1]) parents[1][b_scalar ? 0 : i] += g[i] * db(x, y);
        }
      });
}

// Elementwise unary op; df receives the input and the output value.
template <class F, class DF>
Tensor unary(const Tensor& a, F f, DF df) {
  Buffer out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  Tape* tape = a.tape();
  if (!tape) return Tensor(a.shape(), std::move(out));
  Buffer in = copy_values(a);
  Buffer result = out;
  return tape->record(
      a.shape(), std::move(out), {&a},
      [in = std::move(in), result = std::move(result), df](
          std::span<const double> g, std::span<double* const> parents) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          parents[0][i] += g[i] * df(in[i], result[i]);
        }
      });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const bool vec = b.rank() == 1;
  if (a.rank() != 2 || (b.rank() != 2 && !vec) || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " do not conform");
  }
  const std::size_t n = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const std::size_t m = vec ? 1 : b.shape()[1];
  Buffer out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = a[i * k + l];
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += ail * b[l * m + j];
    }
  }
  Shape shape = vec ? Shape{n} : Shape{n, m};
  Tape* tape = common_tape({&a, &b});
  if (!tape) return Tensor(std::move(shape), std::move(out));
  return tape->record(
      std::move(shape), std::move(out), {&a, &b},
      [av = copy_values(a), bv = copy_values(b), n, k, m](
          std::span<const double> g, std::span<double* const> parents) {
        // dA = G B^T, dB = A^T G
        if (double* ga = parents[0]) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t l = 0; l < k; ++l) {
              double acc = 0.0;
              for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * bv[l * m + j];
              ga[i * k + l] += acc;
            }
        }
        if (double* gb = parents[1]) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t l = 0; l < k; ++l) {
              const double ail = av[i * k + l];
              for (std::size_t j = 0; j < m; ++j) gb[l * m + j] += ail * g[i * m + j];
            }
        }
      });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tape* tape = a.tape();
  if (!tape) return Tensor::scalar(s);
  return tape->record({}, Buffer{s}, {&a},
                      [n = a.size()](std::span<const double> g,
                                     std::span<double* const> parents) {
                        for (std::size_t i = 0; i < n; ++i) parents[0][i] += g[0];
                      });
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  for (double v : a.values()) {
    if (!(v < 709.0)) {
      throw DomainError("exp: argument " + std::to_string(v) +
                        " overflows float64");
    }
  }
  return unary(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.values()) {
    if (!(v > 0.0)) {
      throw DomainError("log: non-positive argument " + std::to_string(v));
    }
  }
  return unary(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) +
                         " as " + shape_string(shape));
  }
  Tape* tape = a.tape();
  if (!tape) return Tensor(std::move(shape), copy_values(a));
  return tape->record(std::move(shape), copy_values(a), {&a},
                      [](std::span<const double> g,
                         std::span<double* const> parents) {
                        for (std::size_t i = 0; i < g.size(); ++i) parents[0][i] += g[i];
                      });
}

Tensor slice(const Tensor& a, std::size_t offset, std::size_t count) {
  if (offset + count > a.size()) {
    throw DimensionError("slice: range [" + std::to_string(offset) + ", " +
                         std::to_string(offset + count) + ") outside " +
                         shape_string(a.shape()));
  }
  Buffer out(a.values().begin() + static_cast<std::ptrdiff_t>(offset),
             a.values().begin() + static_cast<std::ptrdiff_t>(offset + count));
  Tape* tape = a.tape();
  if (!tape) return Tensor({count}, std::move(out));
  return tape->record({count}, std::move(out), {&a},
                      [offset](std::span<const double> g,
                               std::span<double* const> parents) {
                        for (std::size_t i = 0; i < g.size(); ++i)
                          parents[0][offset + i] += g[i];
                      });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) return Tensor({0}, Buffer{});
  // Fold pairwise so that every node has at most two parents.
  auto join = [](const Tensor& a, const Tensor& b) {
    Buffer out = copy_values(a);
    out.insert(out.end(), b.values().begin(), b.values().end());
    const std::size_t n = out.size();
    Tape* tape = common_tape({&a, &b});
    if (!tape) return Tensor({n}, std::move(out));
    return tape->record({n}, std::move(out), {&a, &b},
                        [na = a.size()](std::span<const double> g,
                                        std::span<double* const> parents) {
                          if (parents[0])
                            for (std::size_t i = 0; i < na; ++i) parents[0][i] += g[i];
                          if (parents[1])
                            for (std::size_t i = na; i < g.size(); ++i)
                              parents[1][i - na] += g[i];
                        });
  };
  Tensor acc = reshape(parts.front(), {parts.front().size()});
  for (std::size_t i = 1; i < parts.size(); ++i) acc = join(acc, parts[i]);
  return acc;
}

Tensor gaussian_log_density(const Tensor& x, const Tensor& mu,
                            const Tensor& sigma) {
  for (const Tensor* t : {&mu, &sigma}) {
    if (!t->is_scalar() && t->shape() != x.shape()) {
      throw DimensionError("gaussian_log_density: shapes " +
                           shape_string(x.shape()) + " and " +
                           shape_string(t->shape()) + " do not conform");
    }
  }
  for (double s : sigma.values()) {
    if (!(s > 0.0)) {
      throw DomainError("gaussian_log_density: non-positive sigma " +
                        std::to_string(s));
    }
  }
  const bool mu_b = mu.is_scalar() && x.size() != 1;
  const bool sg_b = sigma.is_scalar() && x.size() != 1;
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = sigma[sg_b ? 0 : i];
    const double r = (x[i] - mu[mu_b ? 0 : i]) / s;
    total += -kHalfLog2Pi - std::log(s) - 0.5 * r * r;
  }
  Tape* tape = common_tape({&x, &mu, &sigma});
  if (!tape) return Tensor::scalar(total);
  return tape->record(
      {}, Buffer{total}, {&x, &mu, &sigma},
      [xv = copy_values(x), mv = copy_values(mu), sv = copy_values(sigma), mu_b,
       sg_b](std::span<const double> g, std::span<double* const> parents) {
        for (std::size_t i = 0; i < xv.size(); ++i) {
          const std::size_t im = mu_b ? 0 : i;
          const std::size_t is = sg_b ? 0 : i;
          const double s = sv[is];
          const double d = xv[i] - mv[im];
          const double dx = -d / (s * s);
          if (parents[0]) parents[0][i] += g[0] * dx;
          if (parents[1]) parents[1][im] -= g[0] * dx;
          if (parents[2]) parents[2][is] += g[0] * (-1.0 / s + d * d / (s * s * s));
        }
      });
}

Tensor reparam_sample(const Tensor& mu, const Tensor& sigma,
                      const Tensor& noise) {
  if (mu.shape() != sigma.shape() || mu.shape() != noise.shape()) {
    throw DimensionError("reparam_sample: shapes " + shape_string(mu.shape()) +
                         ", " + shape_string(sigma.shape()) + " and " +
                         shape_string(noise.shape()) + " must be equal");
  }
  for (double s : sigma.values()) {
    if (s < 0.0) {
      throw DomainError("reparam_sample: negative sigma " + std::to_string(s));
    }
  }
  return add(mu, mul(sigma, noise.detach()));
}

}  // namespace menode
