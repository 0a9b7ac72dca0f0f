#pragma once

#include <cstdint>
#include <random>

namespace menode {

using Rng = std::mt19937_64;

// Stateless stream splitting: a well-mixed child seed for (master, stream).
// Used wherever work is parallel so that results do not depend on the
// order in which threads run.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                          std::uint64_t b);

class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}
  double operator()() { return dist_(rng_); }
  Rng& engine() noexcept { return rng_; }

 private:
  Rng rng_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace menode
