#include "hypermeta/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace hypermeta {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

Optimizer::Optimizer(OptimizerConfig config, std::vector<Parameter*> params)
    : config_(config), params_(std::move(params)) {
  if (!(config_.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (config_.kind == OptimizerKind::adam) {
    for (const Parameter* p : params_) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }
}

void Optimizer::step() {
  for (const Parameter* p : params_) {
    if (!p->has_grad()) throw std::logic_error("optimizer step: parameter '" + p->name + "' has no gradient");
    require_finite(p->grad, "gradient of '" + p->name + "'");
  }
  ++steps_;
  const double lr = config_.learning_rate;
  if (config_.kind == OptimizerKind::sgd) {
    for (Parameter* p : params_) p->value.add_(p->grad, -lr);
    return;
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto w = params_[k]->value.data();
    auto g = params_[k]->grad.data();
    auto m = m_[k].data();
    auto v = v_[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

void Optimizer::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

double global_grad_norm(const std::vector<Parameter*>& params) {
  double sq = 0.0;
  for (const Parameter* p : params)
    if (p->has_grad())
      for (double g : p->grad.data()) sq += g * g;
  return std::sqrt(sq);
}

double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / (norm + 1e-6);
    for (Parameter* p : params)
      if (p->has_grad())
        for (double& g : p->grad.data()) g *= f;
  }
  return norm;
}

}  // namespace hypermeta
