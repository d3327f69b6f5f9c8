#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Graph is a tape: every operation appends a node holding its output value
// and a closure that propagates the output gradient to its inputs. Nodes are
// only ever appended, so insertion order is a topological order.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vlwb/tensor.hpp"

namespace vlwb::diff {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const noexcept { return id_; }
  Graph& graph() const { return *graph_; }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Input tensor. Leaves with requires_grad receive a gradient on backward().
  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Populates gradients of every requires_grad leaf reachable from `root`.
  /// Throws ShapeError if `root` is not a single-element tensor.
  void backward(Var root);

  /// Gradient accumulated into `v` by the last backward(). Leaves that did
  /// not influence the root get a zero tensor of their shape.
  const Tensor& grad(Var v) const;

  /// Drops every node recorded after the first `size` nodes, so a fixed
  /// prefix (e.g. frozen weights) can be reused across iterations.
  void truncate(std::size_t size);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::string& op_name(std::size_t id) const { return nodes_[id].op; }

  /// Appends a computed node. Used by the operator implementations.
  Var record(std::string op, Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);

  /// Gradient buffer of a node during backward(), allocated on first touch.
  Tensor& grad_buffer(std::size_t id);
  bool has_grad_buffer(std::size_t id) const { return !grads_[id].empty(); }

  /// Branch decisions taken by piecewise operators (relu sign, max argmax).
  /// Two evaluations with equal signatures lie on the same smooth piece.
  const std::vector<std::int64_t>& kink_signature() const noexcept { return kinks_; }
  void note_kink(std::int64_t branch) { kinks_.push_back(branch); }
  /// Set when a relu input was exactly zero (subgradient 0 applied).
  bool touched_kink() const noexcept { return touched_kink_; }
  void mark_kink() noexcept { touched_kink_ = true; }

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<std::int64_t> kinks_;
  bool touched_kink_ = false;
};

// ---------------------------------------------------------------------------
// Operators. All throw ShapeError naming the op and both shapes on mismatch.

Var matmul(Var a, Var b);                  // [m,k] x [k,n] -> [m,n]
Var transpose(Var a);                      // [m,n] -> [n,m]
Var add(Var a, Var b);                     // same shape
Var sub(Var a, Var b);                     // same shape
Var mul(Var a, Var b);                     // elementwise, same shape
Var add_row(Var m, Var row);               // [m,n] + [n] broadcast over rows
Var relu(Var a);                           // subgradient 0 at 0
Var tanh(Var a);
Var sum(Var a);                            // -> [1]
Var mean(Var a);                           // -> [1]
Var scale(Var a, double factor);
Var shift(Var a, double offset);
Var scale_by(Var a, Var factor);           // factor is a single-element tensor
Var l2_normalize(Var a);                   // each slice along the last axis
Var cosine_similarity(Var a, Var b);       // unit rows: [m,d],[n,d] -> [m,n]; [d],[n,d] -> [n]
Var softmax_cross_entropy(Var logits, std::size_t label);               // [k] -> [1]
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels);  // [m,k] -> mean [1]
Var max_over_axis(Var a);                  // max along last axis: [k] -> [1], [m,k] -> [m]
Var select(Var a, std::size_t index);      // flat element -> [1]
Var squared_l2_norm(Var a);                // -> [1]
Var reshape(Var a, Shape shape);
/// out[i] = a[index[i]] (flat indices), shaped as `shape`.
Var gather(Var a, std::vector<std::size_t> index, Shape shape);
/// Row r of the result is the mean of table rows listed in bags[r].
Var embedding_bag_mean(Var table, const std::vector<std::vector<std::size_t>>& bags);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// Finite-difference gradient check.

struct GradCheckReport {
  /// max over checked coordinates of |analytic - central| / max(1, |analytic|)
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  /// Coordinates whose probe interval crossed a piecewise branch (e.g. relu kink).
  std::vector<std::size_t> nondifferentiable;
  /// Coordinates where the loss was not finite at a probe point.
  std::vector<std::size_t> nonfinite;
};

using ScalarBuilder = std::function<Var(Graph&, Var input)>;

/// Compares backward() against central differences with step h in (0, 1e-3].
GradCheckReport grad_check(const ScalarBuilder& build, const Tensor& input, double h = 1e-5);

}  // namespace vlwb::diff
