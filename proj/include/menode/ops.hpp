#pragma once

#include "menode/tensor.hpp"

#include <vector>

namespace menode {

// Differentiable primitives. Each op records itself on the operands' tape
// when any operand is attached; otherwise it only computes values.
//
// Elementwise binary ops accept equal shapes or a rank-0 scalar on either
// side. No other broadcasting is supported.

// [n,k] x [k,m] -> [n,m];  [n,k] x [k] -> [n].
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// Reductions to a rank-0 scalar.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);

// Shape plumbing.
Tensor reshape(const Tensor& a, Shape shape);
// Contiguous sub-range of the flattened tensor, returned as rank 1.
Tensor slice(const Tensor& a, std::size_t offset, std::size_t count);
// Flattens and concatenates into one rank-1 tensor.
Tensor concat(const std::vector<Tensor>& parts);

// Sum over elements of the univariate normal log-density
//   -1/2 log(2 pi) - log sigma - (x - mu)^2 / (2 sigma^2).
// mu and sigma may be rank-0 scalars broadcast against x.
Tensor gaussian_log_density(const Tensor& x, const Tensor& mu,
                            const Tensor& sigma);

// mu + sigma * noise. The noise is treated as a constant.
Tensor reparam_sample(const Tensor& mu, const Tensor& sigma,
                      const Tensor& noise);

}  // namespace menode
