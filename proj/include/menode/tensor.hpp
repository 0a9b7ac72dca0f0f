#pragma once

#include <boost/container/small_vector.hpp>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace menode {

// Most tensors in this library are tiny (latent states, mixed effects), so
// storage is inline for small sizes and only spills to the heap for layer
// weights.
using Shape = boost::container::small_vector<std::size_t, 3>;
using Buffer = boost::container::small_vector<double, 8>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;

// Dense row-major float64 array. A tensor either lives off-tape (a plain
// value) or is attached to exactly one Tape, in which case every operation
// consuming it is recorded there.
class Tensor {
 public:
  // Scalar zero.
  Tensor();
  Tensor(Shape shape, Buffer values);

  static Tensor scalar(double value);
  static Tensor vector(std::span<const double> values);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  bool is_scalar() const noexcept { return shape_.empty(); }

  std::span<const double> values() const noexcept {
    return {values_.data(), values_.size()};
  }
  // Writable view for parameter updates. Throws ContractError on a tensor
  // attached to a tape: recorded values are immutable.
  std::span<double> mutable_values();

  double operator[](std::size_t i) const noexcept { return values_[i]; }
  // Value of a single-element tensor.
  double item() const;

  Tape* tape() const noexcept { return tape_; }
  std::size_t node() const noexcept { return node_; }
  bool on_tape() const noexcept { return tape_ != nullptr; }

  // Same values, no tape participation.
  Tensor detach() const;

 private:
  friend class Tape;

  Shape shape_;
  Buffer values_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

// Append-only record of primitive operations for reverse-mode
// differentiation. Single-threaded: use one tape per thread.
class Tape {
 public:
  using Handle = std::size_t;
  static constexpr Handle kConstant = std::numeric_limits<Handle>::max();
  static constexpr std::size_t kMaxParents = 3;

  // Receives d(root)/d(output) and accumulates into the parent gradient
  // buffers. A null buffer marks an off-tape parent that needs no gradient.
  using Pullback = std::function<void(
      std::span<const double> upstream, std::span<double* const> parents)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a leaf (a parameter or other input to differentiate against).
  // The returned tensor's node() is its handle in the gradient map.
  Tensor watch(const Tensor& value);
  std::vector<Tensor> watch_all(std::span<const Tensor> values);

  // Records the result of a primitive. Parents that are off-tape are treated
  // as constants. Throws ContractError when parents live on another tape.
  Tensor record(Shape shape, Buffer values,
                std::initializer_list<const Tensor*> parents,
                Pullback pullback);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    std::array<Handle, kMaxParents> parents{kConstant, kConstant, kConstant};
    std::size_t n_parents = 0;
    Shape shape;
    bool leaf = false;
    Pullback pullback;
  };

  friend std::map<Handle, Tensor> backward(const Tape& tape,
                                           const Tensor& root);

  std::vector<Node> nodes_;
};

using Gradients = std::map<Tape::Handle, Tensor>;

// Reverse sweep from a scalar root. Returns the gradient of every leaf that
// the root depends on, keyed by the leaf's handle. A root that is not on any
// tape is a constant and yields an empty map.
Gradients backward(const Tape& tape, const Tensor& root);

// Tape for operands: the unique tape among them, or nullptr when all are
// off-tape. Throws ContractError when two tapes are mixed.
Tape* common_tape(std::initializer_list<const Tensor*> operands);

}  // namespace menode
