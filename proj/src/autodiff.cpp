#include "hypermeta/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

namespace hypermeta {

void Parameter::zero_grad() {
  if (grad.empty())
    grad = Tensor(value.shape());
  else
    grad.fill(0.0);
}

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("value() on an unbound Var");
  return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

Tape::Node& Tape::push(Node node) {
  if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max()) throw std::length_error("tape full");
  nodes_.push_back(std::move(node));
  return nodes_.back();
}

void Tape::check_owner(Var v) const {
  if (v.tape_ != this) throw std::logic_error("Var belongs to a different tape");
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  push(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::input(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = mode_ == GradMode::enabled;
  n.op = "input";
  push(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::param(Parameter& parameter) {
  Node n;
  n.external = &parameter.value;
  n.requires_grad = mode_ == GradMode::enabled;
  if (n.requires_grad) n.param = &parameter;
  n.op = "param";
  push(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward, const char* op) {
  bool needs = false;
  for (const Var& v : inputs) {
    if (!v.valid()) continue;
    check_owner(v);
    needs = needs || nodes_[v.id_].requires_grad;
  }
  Node n;
  n.value = std::move(value);
  n.op = op;
  if (needs && mode_ == GradMode::enabled) {
    n.requires_grad = true;
    n.backward = std::move(backward);
  }
  push(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, Backward backward, const char* op) {
  bool needs = false;
  for (const Var& v : inputs) {
    if (!v.valid()) continue;
    check_owner(v);
    needs = needs || nodes_[v.id_].requires_grad;
  }
  Node n;
  n.value = std::move(value);
  n.op = op;
  if (needs && mode_ == GradMode::enabled) {
    n.requires_grad = true;
    n.backward = std::move(backward);
  }
  push(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

const Tensor& Tape::value(std::uint32_t id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.value;
}

Tensor Tape::grad(Var v) const {
  check_owner(v);
  const Node& n = nodes_[v.id_];
  if (n.param) return n.param->grad.empty() ? Tensor(n.param->value.shape()) : n.param->grad;
  if (n.grad.empty()) return Tensor(value(v.id_).shape());
  return n.grad;
}

Tensor& Tape::grad_buffer(Var input) {
  Node& n = nodes_[input.id_];
  if (n.param) {
    if (n.param->grad.empty()) n.param->grad = Tensor(n.param->value.shape());
    return n.param->grad;
  }
  if (n.grad.empty()) n.grad = Tensor(value(input.id_).shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  check_owner(loss);
  if (value(loss.id_).size() != 1)
    throw ShapeError("backward: loss must be a scalar, got " + shape_string(value(loss.id_).shape()));
  for (Node& n : nodes_)
    if (!n.param) n.grad = Tensor();
  backward_visits_ = 0;
  Node& root = nodes_[loss.id_];
  if (!root.requires_grad) return;
  if (root.param) {
    grad_buffer(loss)[0] += 1.0;
    return;
  }
  root.grad = Tensor(value(loss.id_).shape(), 1.0);
  for (std::uint32_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    ++backward_visits_;
    n.backward(*this, i);
  }
}

// ---- helpers -------------------------------------------------------------

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

MatMap as_mat(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
ConstMatMap as_mat(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
// Rows [first, first + rows*cols/width) of a row-major matrix, reshaped.
MatMap as_block(Tensor& t, std::size_t first_row, std::size_t rows, std::size_t cols) {
  const std::size_t width = t.dim(1);
  return MatMap(t.data().data() + first_row * width, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
ConstMatMap as_block(const Tensor& t, std::size_t first_row, std::size_t rows, std::size_t cols) {
  const std::size_t width = t.dim(1);
  return ConstMatMap(t.data().data() + first_row * width, static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}
Eigen::Map<Eigen::RowVectorXd> as_row(Tensor& t, std::size_t offset, std::size_t len) {
  return Eigen::Map<Eigen::RowVectorXd>(t.data().data() + offset, static_cast<Eigen::Index>(len));
}
Eigen::Map<const Eigen::RowVectorXd> as_row(const Tensor& t, std::size_t offset, std::size_t len) {
  return Eigen::Map<const Eigen::RowVectorXd>(t.data().data() + offset, static_cast<Eigen::Index>(len));
}

// A contiguous range of a vector viewed as a row-major matrix.
MatMap as_vec_block(Tensor& t, std::size_t offset, std::size_t rows, std::size_t cols) {
  return MatMap(t.data().data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
ConstMatMap as_vec_block(const Tensor& t, std::size_t offset, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data().data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// u[r, i*k + q] = x[r, i] * c[r, q]
RowMatrix outer_rows(const Tensor& x, const Tensor& c, std::size_t n, std::size_t in, std::size_t k) {
  RowMatrix u(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in * k));
  for (std::size_t r = 0; r < n; ++r) {
    double* ur = u.data() + r * in * k;
    const double* cr = &c[r * k];
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = x[r * in + i];
      for (std::size_t q = 0; q < k; ++q) ur[i * k + q] = xi * cr[q];
    }
  }
  return u;
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::logic_error("operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw std::logic_error("operands live on different tapes");
  return t;
}

enum class Bcast { none, left_scalar, right_scalar };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::none;
  if (b.size() == 1) return Bcast::right_scalar;
  if (a.size() == 1) return Bcast::left_scalar;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                   shape_string(b.shape()));
}

template <typename F, typename DA, typename DB>
Var binary(Var a, Var b, const char* op, F f, DA da, DB db) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Bcast bc = broadcast_kind(av, bv, op);
  Tensor out(bc == Bcast::left_scalar ? bv.shape() : av.shape());
  const std::size_t n = out.size();
  auto ai = [&](std::size_t i) { return bc == Bcast::left_scalar ? av[0] : av[i]; };
  auto bi = [&](std::size_t i) { return bc == Bcast::right_scalar ? bv[0] : bv[i]; };
  for (std::size_t i = 0; i < n; ++i) out[i] = f(ai(i), bi(i));
  return t.record(
      std::move(out), {a, b},
      [a, b, bc, da, db](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.out_grad(self);
        const Tensor& av = tp.value(a);
        const Tensor& bv = tp.value(b);
        const std::size_t n = g.size();
        auto ai = [&](std::size_t i) { return bc == Bcast::left_scalar ? av[0] : av[i]; };
        auto bi = [&](std::size_t i) { return bc == Bcast::right_scalar ? bv[0] : bv[i]; };
        if (a.requires_grad()) {
          Tensor& ga = tp.grad_buffer(a);
          for (std::size_t i = 0; i < n; ++i) {
            const double d = g[i] * da(ai(i), bi(i));
            if (bc == Bcast::left_scalar)
              ga[0] += d;
            else
              ga[i] += d;
          }
        }
        if (b.requires_grad()) {
          Tensor& gb = tp.grad_buffer(b);
          for (std::size_t i = 0; i < n; ++i) {
            const double d = g[i] * db(ai(i), bi(i));
            if (bc == Bcast::right_scalar)
              gb[0] += d;
            else
              gb[i] += d;
          }
        }
      },
      op);
}

// Unary op whose derivative is expressed through (input, output).
template <typename F, typename D>
Var unary(Var a, const char* op, F f, D d) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return t.record(
      std::move(out), {a},
      [a, d](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.out_grad(self);
        const Tensor& x = tp.value(a);
        const Tensor& y = tp.value(self);
        Tensor& ga = tp.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * d(x[i], y[i]);
      },
      op);
}

void require_matrix(const Tensor& t, const char* op, const char* which) {
  if (t.rank() != 2)
    throw ShapeError(std::string(op) + ": " + which + " must be a matrix, got " + shape_string(t.shape()));
}

}  // namespace

// ---- elementwise ---------------------------------------------------------

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var scale(Var a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double value) {
  return unary(
      a, "add_scalar", [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var relu(Var a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  for (double v : a.value().data())
    if (!(v > 0.0)) throw std::domain_error("log of non-positive value " + std::to_string(v));
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var elementwise(ElementwiseOp op, std::initializer_list<Var> inputs, double factor) {
  const std::vector<Var> in(inputs);
  const std::size_t arity = (op == ElementwiseOp::add || op == ElementwiseOp::sub || op == ElementwiseOp::mul) ? 2 : 1;
  if (in.size() != arity) throw std::invalid_argument("elementwise: wrong number of inputs");
  switch (op) {
    case ElementwiseOp::add: return add(in[0], in[1]);
    case ElementwiseOp::sub: return sub(in[0], in[1]);
    case ElementwiseOp::mul: return mul(in[0], in[1]);
    case ElementwiseOp::relu: return relu(in[0]);
    case ElementwiseOp::tanh: return tanh(in[0]);
    case ElementwiseOp::exp: return exp(in[0]);
    case ElementwiseOp::log: return log(in[0]);
    case ElementwiseOp::scale: return scale(in[0], factor);
  }
  throw std::invalid_argument("elementwise: unknown op");
}

// ---- linear algebra ------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul", "lhs");
  require_matrix(bv, "matmul", "rhs");
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k)
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(av.shape()) + " . " +
                     shape_string(bv.shape()));
  Tensor out(Shape{m, n});
  as_mat(out, m, n).noalias() = as_mat(av, m, k) * as_mat(bv, k, n);
  return t.record(
      std::move(out), {a, b},
      [a, b, m, k, n](Tape& tp, std::uint32_t self) {
        const auto g = as_mat(tp.out_grad(self), m, n);
        if (a.requires_grad()) as_mat(tp.grad_buffer(a), m, k).noalias() += g * as_mat(tp.value(b), k, n).transpose();
        if (b.requires_grad()) as_mat(tp.grad_buffer(b), k, n).noalias() += as_mat(tp.value(a), m, k).transpose() * g;
      },
      "matmul");
}

Var linear(Var x, Var w, Var b) {
  Tape& t = tape_of(x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_matrix(xv, "linear", "input");
  require_matrix(wv, "linear", "weight");
  const std::size_t n = xv.dim(0), in = xv.dim(1), out_dim = wv.dim(0);
  if (wv.dim(1) != in)
    throw ShapeError("linear: input " + shape_string(xv.shape()) + " does not match weight " +
                     shape_string(wv.shape()));
  if (b.valid()) {
    if (b.tape() != &t) throw std::logic_error("operands live on different tapes");
    if (b.value().size() != out_dim) throw ShapeError("linear: bias size does not match weight rows");
  }
  Tensor out(Shape{n, out_dim});
  auto y = as_mat(out, n, out_dim);
  y.noalias() = as_mat(xv, n, in) * as_mat(wv, out_dim, in).transpose();
  if (b.valid()) y.rowwise() += as_row(b.value(), 0, out_dim);
  return t.record(
      std::move(out), {x, w, b},
      [x, w, b, n, in, out_dim](Tape& tp, std::uint32_t self) {
        const auto g = as_mat(tp.out_grad(self), n, out_dim);
        if (x.requires_grad()) as_mat(tp.grad_buffer(x), n, in).noalias() += g * as_mat(tp.value(w), out_dim, in);
        if (w.requires_grad())
          as_mat(tp.grad_buffer(w), out_dim, in).noalias() += g.transpose() * as_mat(tp.value(x), n, in);
        if (b.valid() && b.requires_grad()) as_row(tp.grad_buffer(b), 0, out_dim) += g.colwise().sum();
      },
      "linear");
}

// ---- reductions and reshaping -------------------------------------------

Var sum(Var a) {
  Tape& t = tape_of(a);
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  return t.record(
      Tensor::scalar(acc), {a},
      [a](Tape& tp, std::uint32_t self) {
        const double g = tp.out_grad(self)[0];
        Tensor& ga = tp.grad_buffer(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
      },
      "sum");
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var row_sum(Var a) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  require_matrix(av, "row_sum", "input");
  const std::size_t n = av.dim(0), c = av.dim(1);
  Tensor out(Shape{n});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < c; ++j) out[r] += av[r * c + j];
  return t.record(
      std::move(out), {a},
      [a, n, c](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.out_grad(self);
        Tensor& ga = tp.grad_buffer(a);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t j = 0; j < c; ++j) ga[r * c + j] += g[r];
      },
      "row_sum");
}

Var reshape(Var a, Shape shape) {
  Tape& t = tape_of(a);
  if (shape_size(shape) != a.size())
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  return t.record(
      a.value().reshaped(std::move(shape)), {a},
      [a](Tape& tp, std::uint32_t self) { tp.grad_buffer(a).add_(tp.out_grad(self)); }, "reshape");
}

Var slice(Var a, std::size_t offset, Shape shape) {
  Tape& t = tape_of(a);
  const std::size_t len = shape_size(shape);
  const Tensor& av = a.value();
  if (offset + len > av.size())
    throw ShapeError("slice: range [" + std::to_string(offset) + ", " + std::to_string(offset + len) +
                     ") exceeds " + std::to_string(av.size()));
  std::vector<double> data(av.data().begin() + static_cast<std::ptrdiff_t>(offset),
                           av.data().begin() + static_cast<std::ptrdiff_t>(offset + len));
  return t.record(
      Tensor(std::move(shape), std::move(data)), {a},
      [a, offset](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.out_grad(self);
        Tensor& ga = tp.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[offset + i] += g[i];
      },
      "slice");
}

Var slice_cols(Var a, std::size_t offset, std::size_t width) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  require_matrix(av, "slice_cols", "input");
  const std::size_t n = av.dim(0), c = av.dim(1);
  if (width == 0 || offset + width > c) throw ShapeError("slice_cols: column range out of bounds");
  Tensor out(Shape{n, width});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] = av[r * c + offset + j];
  return t.record(
      std::move(out), {a},
      [a, offset, width, n, c](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.out_grad(self);
        Tensor& ga = tp.grad_buffer(a);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t j = 0; j < width; ++j) ga[r * c + offset + j] += g[r * width + j];
      },
      "slice_cols");
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Tape& t = tape_of(parts.front());
  const Shape& first = parts.front().shape();
  const std::size_t rows = first.size() == 2 ? first[0] : 1;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw std::logic_error("operands live on different tapes");
    const Shape& s = p.shape();
    if (s.size() != first.size() || s.size() > 2 || (s.size() == 2 && s[0] != rows))
      throw ShapeError("concat: incompatible shape " + shape_string(s));
    widths.push_back(s.back());
    total += s.back();
  }
  Tensor out(first.size() == 2 ? Shape{rows, total} : Shape{total});
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < widths[k]; ++j) out[r * total + col + j] = v[r * widths[k] + j];
    col += widths[k];
  }
  return t.record(
      std::move(out), parts,
      [parts, widths, rows, total](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.out_grad(self);
        std::size_t col = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
          if (parts[k].requires_grad()) {
            Tensor& gk = tp.grad_buffer(parts[k]);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t j = 0; j < widths[k]; ++j) gk[r * widths[k] + j] += g[r * total + col + j];
          }
          col += widths[k];
        }
      },
      "concat");
}

// ---- probabilities -------------------------------------------------------

Var log_softmax(Var logits) {
  Tape& t = tape_of(logits);
  const Tensor& lv = logits.value();
  const std::size_t rows = lv.rank() == 2 ? lv.dim(0) : 1;
  const std::size_t c = lv.rank() == 2 ? lv.dim(1) : lv.size();
  Tensor out(lv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &lv[r * c];
    const double mx = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(x[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = x[j] - lz;
  }
  return t.record(
      std::move(out), {logits},
      [logits, rows, c](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.out_grad(self);
        const Tensor& y = tp.value(self);
        Tensor& gl = tp.grad_buffer(logits);
        for (std::size_t r = 0; r < rows; ++r) {
          double gs = 0.0;
          for (std::size_t j = 0; j < c; ++j) gs += g[r * c + j];
          for (std::size_t j = 0; j < c; ++j) gl[r * c + j] += g[r * c + j] - std::exp(y[r * c + j]) * gs;
        }
      },
      "log_softmax");
}

Var softmax_logprob(Var logits, std::size_t action) {
  const Tensor& lv = logits.value();
  if (lv.size() == 0) throw ShapeError("softmax_logprob: empty logits");
  if (action >= lv.size())
    throw std::out_of_range("softmax_logprob: action " + std::to_string(action) + " out of range for " +
                            std::to_string(lv.size()) + " logits");
  Var flat = lv.rank() == 1 ? logits : reshape(logits, Shape{lv.size()});
  return slice(log_softmax(flat), action, Shape{1});
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Tape& t = tape_of(parts.front());
  const std::size_t cols = parts.front().shape().back();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw std::logic_error("operands live on different tapes");
    const Shape& s = p.shape();
    if (s.size() != 2 || s[1] != cols) throw ShapeError("concat_rows: incompatible shape " + shape_string(s));
    rows += s[0];
  }
  Tensor out(Shape{rows, cols});
  std::size_t at = 0;
  for (const Var& p : parts) {
    const auto src = p.value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(at));
    at += src.size();
  }
  return t.record(
      std::move(out), parts,
      [parts](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.out_grad(self);
        std::size_t at = 0;
        for (const Var& p : parts) {
          const std::size_t n = p.size();
          if (p.requires_grad()) {
            Tensor& gp = tp.grad_buffer(p);
            for (std::size_t i = 0; i < n; ++i) gp[i] += g[at + i];
          }
          at += n;
        }
      },
      "concat_rows");
}

Var pick(Var a, const std::vector<std::size_t>& indices) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  require_matrix(av, "pick", "input");
  const std::size_t n = av.dim(0), c = av.dim(1);
  if (indices.size() != n) throw ShapeError("pick: one index per row required");
  Tensor out(Shape{n});
  for (std::size_t r = 0; r < n; ++r) {
    if (indices[r] >= c) throw std::out_of_range("pick: index out of range");
    out[r] = av[r * c + indices[r]];
  }
  return t.record(
      std::move(out), {a},
      [a, indices, c](Tape& tp, std::uint32_t self) {
        const Tensor& g = tp.out_grad(self);
        Tensor& ga = tp.grad_buffer(a);
        for (std::size_t r = 0; r < indices.size(); ++r) ga[r * c + indices[r]] += g[r];
      },
      "pick");
}

// ---- generated layer -----------------------------------------------------

Var generated_linear(Var cond, Var head_w, Var head_b, std::size_t w_offset, std::size_t b_offset,
                     std::size_t out, std::size_t in, Var x) {
  Tape& t = tape_of(cond, head_w);
  if (x.tape() != &t) throw std::logic_error("operands live on different tapes");
  const Tensor& cv = cond.value();
  const Tensor& hw = head_w.value();
  const Tensor& xv = x.value();
  require_matrix(cv, "generated_linear", "condition");
  require_matrix(hw, "generated_linear", "head weight");
  require_matrix(xv, "generated_linear", "input");
  const std::size_t n = cv.dim(0), k = cv.dim(1), rows = hw.dim(0);
  if (hw.dim(1) != k) throw ShapeError("generated_linear: condition width does not match head");
  if (xv.dim(0) != n || xv.dim(1) != in) throw ShapeError("generated_linear: input shape mismatch");
  if (w_offset + out * in > rows || b_offset + out > rows)
    throw ShapeError("generated_linear: parameter slice exceeds head rows");
  if (head_b.valid()) {
    if (head_b.tape() != &t) throw std::logic_error("operands live on different tapes");
    if (head_b.value().size() != rows) throw ShapeError("generated_linear: head bias size mismatch");
  }

  // The weight rows of the head form an [out x in*k] block H, so
  // y = (x (x) cond) . H^T with the row-wise outer product x (x) cond.
  const RowMatrix u = outer_rows(xv, cv, n, in, k);
  Tensor y(Shape{n, out});
  auto ym = as_mat(y, n, out);
  ym.noalias() = u * as_block(hw, w_offset, out, in * k).transpose();
  ym.noalias() += as_mat(cv, n, k) * as_block(hw, b_offset, out, k).transpose();
  if (head_b.valid()) {
    ym.noalias() += as_mat(xv, n, in) * as_vec_block(head_b.value(), w_offset, out, in).transpose();
    ym.rowwise() += as_row(head_b.value(), b_offset, out);
  }

  return t.record(
      std::move(y), {cond, head_w, head_b, x},
      [cond, head_w, head_b, x, w_offset, b_offset, out, in, n, k](Tape& tp, std::uint32_t self) {
        const auto g = as_mat(tp.out_grad(self), n, out);
        const Tensor& cv = tp.value(cond);
        const Tensor& hw = tp.value(head_w);
        const Tensor& xv = tp.value(x);
        const auto c = as_mat(cv, n, k);
        if (head_w.requires_grad()) {
          Tensor& gw = tp.grad_buffer(head_w);
          const RowMatrix u = outer_rows(xv, cv, n, in, k);
          as_block(gw, w_offset, out, in * k).noalias() += g.transpose() * u;
          as_block(gw, b_offset, out, k).noalias() += g.transpose() * c;
        }
        if (head_b.valid() && head_b.requires_grad()) {
          Tensor& gb = tp.grad_buffer(head_b);
          as_vec_block(gb, w_offset, out, in).noalias() += g.transpose() * as_mat(xv, n, in);
          as_row(gb, b_offset, out) += g.colwise().sum();
        }
        const bool want_x = x.requires_grad(), want_c = cond.requires_grad();
        if (!want_x && !want_c) return;
        const RowMatrix du = g * as_block(hw, w_offset, out, in * k);
        Tensor* gx = want_x ? &tp.grad_buffer(x) : nullptr;
        if (gx && head_b.valid())
          as_mat(*gx, n, in).noalias() += g * as_vec_block(tp.value(head_b), w_offset, out, in);
        Tensor* gc = want_c ? &tp.grad_buffer(cond) : nullptr;
        for (std::size_t r = 0; r < n; ++r) {
          const double* dur = du.data() + r * in * k;
          const double* cr = &cv[r * k];
          const double* xr = &xv[r * in];
          for (std::size_t i = 0; i < in; ++i) {
            const double* d = dur + i * k;
            if (gx) {
              double acc = 0.0;
              for (std::size_t q = 0; q < k; ++q) acc += d[q] * cr[q];
              (*gx)[r * in + i] += acc;
            }
            if (gc) {
              double* gcr = &(*gc)[r * k];
              for (std::size_t q = 0; q < k; ++q) gcr[q] += d[q] * xr[i];
            }
          }
        }
        if (gc) as_mat(*gc, n, k).noalias() += g * as_block(hw, b_offset, out, k);
      },
      "generated_linear");
}

}  // namespace hypermeta
