#include "hypermeta/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hypermeta {

namespace {

double scalar_of(Var v) {
  if (v.size() != 1) throw ShapeError("grad_check: function output must be a scalar");
  return v.value()[0];
}

void update(GradCheckResult& r, double analytic, double numeric, double floor) {
  const double abs_err = std::abs(analytic - numeric);
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  r.max_absolute_error = std::max(r.max_absolute_error, abs_err);
  r.max_relative_error = std::max(r.max_relative_error, abs_err / denom);
  ++r.coordinates;
}

}  // namespace

GradCheckResult grad_check(const GraphBuilder& f, const std::vector<Tensor>& inputs, double h, double floor) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.input(t));
    Var out = f(tape, vars);
    scalar_of(out);
    tape.backward(out);
    for (Var v : vars) analytic.push_back(tape.grad(v));
  }
  auto evaluate = [&](const std::vector<Tensor>& xs) {
    Tape tape(GradMode::disabled);
    std::vector<Var> vars;
    for (const Tensor& t : xs) vars.push_back(tape.constant(t));
    return scalar_of(f(tape, vars));
  };
  GradCheckResult result;
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k][i];
      probe[k][i] = x0 + h;
      const double fp = evaluate(probe);
      probe[k][i] = x0 - h;
      const double fm = evaluate(probe);
      probe[k][i] = x0;
      update(result, analytic[k][i], (fp - fm) / (2.0 * h), floor);
    }
  }
  return result;
}

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double h) {
  return grad_check([&](Tape& t, const std::vector<Var>& v) { return f(t, v[0]); }, std::vector<Tensor>{x}, h)
      .max_relative_error;
}

GradCheckResult grad_check_params(const std::function<Var(Tape&)>& loss, const std::vector<Parameter*>& params,
                                  double h, std::size_t max_coords, double floor) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var out = loss(tape);
    scalar_of(out);
    tape.backward(out);
  }
  std::vector<Tensor> analytic;
  for (Parameter* p : params) analytic.push_back(p->grad);
  auto evaluate = [&]() {
    Tape tape(GradMode::disabled);
    return scalar_of(loss(tape));
  };
  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& w = params[k]->value;
    const std::size_t n = w.size();
    const std::size_t stride = (max_coords == 0 || n <= max_coords) ? 1 : (n + max_coords - 1) / max_coords;
    for (std::size_t i = 0; i < n; i += stride) {
      const double x0 = w[i];
      w[i] = x0 + h;
      const double fp = evaluate();
      w[i] = x0 - h;
      const double fm = evaluate();
      w[i] = x0;
      update(result, analytic[k][i], (fp - fm) / (2.0 * h), floor);
    }
  }
  return result;
}

}  // namespace hypermeta
