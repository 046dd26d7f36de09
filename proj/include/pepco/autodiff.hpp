#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "pepco/tensor.hpp"

namespace pepco::ad {

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Record-on-forward computation tape. Each node keeps its forward value and a
// closure that pushes the node's gradient into its inputs. Tapes are not
// thread-safe; use one tape per execution context.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf whose accumulated gradient is added into `param.grad` by backward().
  Var watch(Param& param);
  // Records a derived node; `fn` runs during backward only when some input
  // requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward fn);
  Var record(Tensor value, std::span<const Var> inputs, Backward fn);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  // Gradient buffer of `v`, zero-initialized on first use. Only valid
  // during backward().
  Tensor& grad(Var v);

  // Reverse sweep from a scalar loss. Clears the tape afterwards.
  void backward(Var loss);
  // Reverse sweep seeded with an explicit output gradient of matching shape.
  void backward(Var output, const Tensor& seed);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    Param* sink = nullptr;
    bool requires_grad = false;
  };

  void run_backward(Var output, const Tensor& seed);

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

inline constexpr double kLeakySlope = 0.01;
// Large enough that layer norm stays smooth as an input is scaled toward
// zero, which integrated gradients walks through.
inline constexpr double kLayerNormEps = 1e-1;

// Rank-2 (or rank-1 treated as a row) primitives. `add`, `sub` and
// `elementwise_mul` also accept a single row as the right operand and
// broadcast it over the rows of the left one.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double factor);
Var elementwise_mul(Var a, Var b);
Var leaky_relu(Var a, double slope = kLeakySlope);
Var abs(Var a);
Var exp(Var a);
Var log(Var a);
Var softmax(Var a, int axis);
Var layer_norm(Var a, int axis, double eps = kLayerNormEps);
Var embedding_gather(Var table, std::span<const std::uint32_t> ids);
Var mean_pool(Var a, int axis);
Var concat(std::span<const Var> parts, int axis);
Var concat(std::initializer_list<Var> parts, int axis);
Var transpose(Var a);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var l2_normalize_rows(Var a, double eps = 1e-12);
Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);
// Mean squared error over all elements.
Var mse_loss(Var pred, Var target);
// Mean over rows of -log softmax(logits)[row, label].
Var cross_entropy_loss(Var logits, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Finite-difference checking.

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool passed = true;
};

using ScalarFn = std::function<Var(Tape&, Var)>;

// Compares backward() against central differences at `point`. Relative error
// is |a - n| / max(|a|, |n|, 1e-4).
GradCheckReport grad_check(const ScalarFn& fn, const Tensor& point, double eps = 1e-5,
                           double tol = 1e-4);

}  // namespace pepco::ad
