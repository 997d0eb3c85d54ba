#pragma once

#include <functional>
#include <vector>

#include "hypermeta/autodiff.hpp"

namespace hypermeta {

// Builds a scalar from the given input Vars on the supplied tape.
using GraphBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t coordinates = 0;
};

// Compares reverse-mode gradients with central differences over every
// coordinate of every input. Relative error per coordinate is
// |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradCheckResult grad_check(const GraphBuilder& f, const std::vector<Tensor>& inputs, double h = 1e-5,
                           double floor = 1e-4);

// Single-input convenience form returning the max relative error.
double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double h = 1e-5);

// Same comparison with respect to Parameters; `loss` rebuilds the graph
// on each call. At most `max_coords` coordinates per parameter are probed
// (strided), 0 meaning all.
GradCheckResult grad_check_params(const std::function<Var(Tape&)>& loss, const std::vector<Parameter*>& params,
                                  double h = 1e-5, std::size_t max_coords = 0, double floor = 1e-4);

}  // namespace hypermeta
