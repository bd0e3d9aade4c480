#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "laguna/linalg.hpp"
#include "laguna/matrix.hpp"

namespace laguna {

// A trainable tensor that outlives individual tapes. The tape accumulates
// into `grad` on backward(); the optimizer consumes and zeroes it.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Matrix value);

  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad();
};

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Define-by-run reverse-mode tape. Nodes are appended in construction order,
// which is a valid topological order, so backward() is a single reverse sweep.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Free leaf whose gradient can be read back with Var::grad().
  Var variable(Matrix value);
  // Leaf bound to a Parameter. Repeated calls return the same node, so every
  // use of a parameter in one step reads identical storage.
  Var leaf(Parameter& param);

  // Seeds d(loss)/d(loss) = 1 and sweeps in reverse. Parameter leaves add
  // their node gradient into Parameter::grad.
  void backward(Var loss);

  // Used by op implementations.
  Var record(Matrix value, std::span<const Var> parents, BackwardFn backward);
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  Matrix& grad_mut(std::size_t id) { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> leaves_;
};

// Differentiable operations. Every op checks shapes and throws ShapeMismatch.
namespace ad {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double factor);
// Adds a 1 x cols row to every row of a.
Var add_row(Var a, Var row);
Var tanh(Var a);
Var abs(Var a);
Var sum(Var a);
Var mean(Var a);
Var row_sums(Var a);
Var hconcat(std::span<const Var> parts);
Var gather_rows(Var a, std::span<const std::size_t> indices);

Var softmax_rows(Var a, double temperature = 1.0);
Var l2_normalize_rows(Var a, double epsilon = 1e-12);
// Mean over rows of -log softmax(row)[label].
Var cross_entropy_rows(Var logits, std::span<const std::size_t> labels);
// Strict log det(m + jitter I); gradient is (m + jitter I)^-1.
Var logdet(Var m, double jitter = 0.0);
// As logdet, escalating jitter per policy.
Var logdet(Var m, const JitterPolicy& policy);

// Row-wise cosine similarity of x against every row of anchors.
Var cosine_rows(Var x, Var anchors, double epsilon = 1e-12);

}  // namespace ad

}  // namespace laguna
