#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "hypermeta/tensor.hpp"

namespace hypermeta {

// A trainable tensor that outlives any single graph. Gradients from every
// backward pass accumulate into `grad` until zero_grad() is called.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {}

  void zero_grad();
  [[nodiscard]] bool has_grad() const { return !grad.empty(); }
};

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] const Shape& shape() const { return value().shape(); }
  [[nodiscard]] std::size_t size() const { return value().size(); }
  [[nodiscard]] Tape* tape() const { return tape_; }
  [[nodiscard]] std::uint32_t id() const { return id_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr; }
  [[nodiscard]] bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

enum class GradMode { enabled, disabled };

// Append-only operation record. Inputs always precede the op that uses
// them, so the node sequence is a topological order by construction.
class Tape {
 public:
  // Called with the tape and the id of the node whose gradient is ready.
  using Backward = std::function<void(Tape&, std::uint32_t)>;

  explicit Tape(GradMode mode = GradMode::enabled) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Free leaf whose gradient is read back with grad().
  Var input(Tensor value);
  // Leaf aliasing a Parameter; backward accumulates into parameter.grad.
  // The parameter must outlive the tape and stay unmodified while it lives.
  Var param(Parameter& parameter);

  // Registers an op result. If no input requires a gradient the backward
  // rule is dropped and the result is a constant.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward, const char* op);
  Var record(Tensor value, const std::vector<Var>& inputs, Backward backward, const char* op);

  void backward(Var loss);

  [[nodiscard]] const Tensor& value(std::uint32_t id) const;
  [[nodiscard]] const Tensor& value(Var v) const { return value(v.id()); }
  // Gradient of the last backward pass (zeros if the node got none).
  [[nodiscard]] Tensor grad(Var v) const;
  [[nodiscard]] bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  [[nodiscard]] const char* op_name(std::uint32_t id) const { return nodes_[id].op; }

  // For backward rules: upstream gradient of node `id`, and mutable
  // (zero-initialised on first use) gradient buffer of an input.
  [[nodiscard]] const Tensor& out_grad(std::uint32_t id) const { return nodes_[id].grad; }
  Tensor& grad_buffer(Var input);

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] GradMode mode() const { return mode_; }
  [[nodiscard]] std::size_t backward_visits() const { return backward_visits_; }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Parameter* param = nullptr;
    Tensor grad;
    Backward backward;
    bool requires_grad = false;
    const char* op = "";
  };

  Node& push(Node node);
  void check_owner(Var v) const;

  GradMode mode_;
  std::deque<Node> nodes_;
  std::size_t backward_visits_ = 0;
};

// ---- Operations ----------------------------------------------------------
// Elementwise binary ops accept equal shapes, or one operand of size 1.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double value);
Var neg(Var a);
Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
// Throws std::domain_error on non-positive input.
Var log(Var a);
Var square(Var a);

enum class ElementwiseOp { add, sub, mul, relu, tanh, exp, log, scale };
// Dispatches to the named op; `factor` is used only by scale.
Var elementwise(ElementwiseOp op, std::initializer_list<Var> inputs, double factor = 1.0);

// [m x k] . [k x n] -> [m x n]
Var matmul(Var a, Var b);
// x [n x in], w [out x in], b [out] (may be invalid) -> [n x out]
Var linear(Var x, Var w, Var b);

Var sum(Var a);
Var mean(Var a);
// Sum over columns of a matrix: [n x c] -> [n].
Var row_sum(Var a);
Var reshape(Var a, Shape shape);
// Contiguous flat range [offset, offset + length) reshaped to `shape`.
Var slice(Var a, std::size_t offset, Shape shape);
// Columns [offset, offset + width) of a matrix.
Var slice_cols(Var a, std::size_t offset, std::size_t width);
// Concatenates along the last axis; all inputs share leading dims.
Var concat(const std::vector<Var>& parts);
// Stacks matrices with equal column counts: [n_i x c] -> [sum n_i x c].
Var concat_rows(const std::vector<Var>& parts);

// Row-wise log-softmax with max subtraction.
Var log_softmax(Var logits);
// log(softmax(logits)[action]) for a single logit vector.
Var softmax_logprob(Var logits, std::size_t action);
// Picks one column per row: [n x c], indices[n] -> [n].
Var pick(Var a, const std::vector<std::size_t>& indices);

// Layer whose parameters are generated from a conditioning vector:
//   phi_n = head_w . cond_n + head_b,
//   y_n   = W(phi_n) . x_n + b(phi_n),
// where W occupies phi[w_offset, w_offset + out*in) row-major and b
// occupies phi[b_offset, b_offset + out). phi is never materialised.
// cond [n x k], head_w [t x k], head_b [t] (may be invalid), x [n x in].
Var generated_linear(Var cond, Var head_w, Var head_b, std::size_t w_offset, std::size_t b_offset,
                     std::size_t out, std::size_t in, Var x);

}  // namespace hypermeta
