#include "menode/tensor.hpp"

#include "menode/error.hpp"

#include <algorithm>
#include <sstream>

namespace menode {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor() : values_(1, 0.0) {}

Tensor::Tensor(Shape shape, Buffer values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_size(shape_) != values_.size()) {
    throw DimensionError("tensor shape " + shape_string(shape_) +
                         " does not match " + std::to_string(values_.size()) +
                         " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor({}, Buffer{value}); }

Tensor Tensor::vector(std::span<const double> values) {
  return Tensor({values.size()}, Buffer(values.begin(), values.end()));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, Buffer(values.begin(), values.end()));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
  return Tensor({rows, cols}, Buffer(values.begin(), values.end()));
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), Buffer(n, value));
}

std::span<double> Tensor::mutable_values() {
  if (tape_) throw ContractError("cannot mutate a tensor recorded on a tape");
  return {values_.data(), values_.size()};
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_string(shape_));
  }
  return values_[0];
}

Tensor Tensor::detach() const { return Tensor(shape_, values_); }

Tensor Tape::watch(const Tensor& value) {
  Node node;
  node.shape = value.shape();
  node.leaf = true;
  nodes_.push_back(std::move(node));
  Tensor out(value.shape(), Buffer(value.values().begin(), value.values().end()));
  out.tape_ = this;
  out.node_ = nodes_.size() - 1;
  return out;
}

std::vector<Tensor> Tape::watch_all(std::span<const Tensor> values) {
  std::vector<Tensor> out;
  out.reserve(values.size());
  for (const auto& v : values) out.push_back(watch(v));
  return out;
}

Tensor Tape::record(Shape shape, Buffer values,
                    std::initializer_list<const Tensor*> parents,
                    Pullback pullback) {
  if (parents.size() > kMaxParents) {
    throw ContractError("primitive has too many parents");
  }
  Node node;
  node.shape = shape;
  for (const Tensor* p : parents) {
    if (p->tape_ && p->tape_ != this) {
      throw ContractError("operand belongs to a different tape");
    }
    node.parents[node.n_parents++] = p->tape_ ? p->node_ : kConstant;
  }
  node.pullback = std::move(pullback);
  nodes_.push_back(std::move(node));
  Tensor out(std::move(shape), std::move(values));
  out.tape_ = this;
  out.node_ = nodes_.size() - 1;
  return out;
}

Tape* common_tape(std::initializer_list<const Tensor*> operands) {
  Tape* tape = nullptr;
  for (const Tensor* t : operands) {
    if (!t->tape()) continue;
    if (tape && tape != t->tape()) {
      throw ContractError("operands belong to different tapes");
    }
    tape = t->tape();
  }
  return tape;
}

Gradients backward(const Tape& tape, const Tensor& root) {
  if (!root.is_scalar() && root.size() != 1) {
    throw ContractError("backward requires a scalar root, got shape " +
                        shape_string(root.shape()));
  }
  Gradients result;
  if (!root.on_tape()) return result;
  if (root.tape() != &tape) {
    throw ContractError("root tensor is not recorded on this tape");
  }

  std::vector<std::vector<double>> grads(root.node() + 1);
  grads[root.node()].assign(1, 1.0);

  std::array<double*, Tape::kMaxParents> parent_ptrs{};
  for (std::size_t i = root.node() + 1; i-- > 0;) {
    auto& g = grads[i];
    if (g.empty()) continue;
    const auto& node = tape.nodes_[i];
    if (node.leaf) {
      result.emplace(i, Tensor(node.shape, Buffer(g.begin(), g.end())));
      continue;
    }
    for (std::size_t k = 0; k < node.n_parents; ++k) {
      const auto parent = node.parents[k];
      if (parent == Tape::kConstant) {
        parent_ptrs[k] = nullptr;
        continue;
      }
      auto& pg = grads[parent];
      if (pg.empty()) pg.assign(shape_size(tape.nodes_[parent].shape), 0.0);
      parent_ptrs[k] = pg.data();
    }
    node.pullback(g, std::span<double* const>(parent_ptrs.data(), node.n_parents));
    // Interior gradients are no longer needed once propagated.
    std::vector<double>().swap(g);
  }
  return result;
}

}  // namespace menode
