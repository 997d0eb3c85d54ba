#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hypermeta/autodiff.hpp"

namespace hypermeta {

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Updates a fixed set of parameters from their accumulated gradients.
// Adam moment buffers exist only for kind == adam.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::vector<Parameter*> params);

  // Throws std::logic_error for a parameter without gradient and
  // NonFiniteError (naming the parameter) for a non-finite gradient.
  void step();
  void zero_grad();

  [[nodiscard]] const OptimizerConfig& config() const { return config_; }
  [[nodiscard]] std::uint64_t step_count() const { return steps_; }
  [[nodiscard]] const std::vector<Tensor>& first_moments() const { return m_; }
  [[nodiscard]] const std::vector<Tensor>& second_moments() const { return v_; }
  [[nodiscard]] const std::vector<Parameter*>& parameters() const { return params_; }

 private:
  OptimizerConfig config_;
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t steps_ = 0;
};

double global_grad_norm(const std::vector<Parameter*>& params);
// Rescales gradients so their global L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm);

}  // namespace hypermeta
