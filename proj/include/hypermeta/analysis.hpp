#pragma once

#include <string>
#include <vector>

#include "hypermeta/errors.hpp"
#include "hypermeta/init.hpp"
#include "hypermeta/optim.hpp"

namespace hypermeta {

// ---- activation variance probe -------------------------------------------

struct VarianceBands {
  double pass_lo = 0.5;
  double pass_hi = 2.0;
  double fail_lo = 0.1;
  double fail_hi = 10.0;
};

struct VarianceProbeOptions {
  std::size_t embed_dim = 10;
  std::size_t init_draws = 8;
  std::size_t embeddings = 16;
  std::size_t states = 64;
  [[nodiscard]] std::size_t samples() const { return init_draws * embeddings * states; }
};

// Hidden-layer activation statistics of the actor stack of base networks
// generated at initialisation. Variances are per unit, averaged over
// units, pooled over init draws x embeddings x states.
struct VarianceReport {
  std::string scheme;
  double input_variance = 0.0;
  std::vector<double> layer_variance;
  // layer l over layer l-1 (layer 0 over the input); 0 when the
  // denominator is 0.
  std::vector<double> layer_ratio;
  std::size_t samples = 0;

  // Last hidden layer relative to the input.
  [[nodiscard]] double final_ratio() const;
  [[nodiscard]] bool within_pass_band(const VarianceBands& bands) const;
  [[nodiscard]] bool outside_fail_band(const VarianceBands& bands) const;
};

// Linear hypernetwork with head bias, unit-normal embeddings and states.
// Throws std::invalid_argument when fewer than 1000 samples are requested.
VarianceReport variance_probe(const InitScheme& scheme, const BaseNetSpec& base, const Rng& rng,
                              const VarianceProbeOptions& options = {});

// ---- equivalence oracle ----------------------------------------------------

enum class EquivalenceFault { none, head_bias, dense_embedding, adam };

std::string to_string(EquivalenceFault f);
EquivalenceFault equivalence_fault_from_string(const std::string& name);

struct EquivalenceConfig {
  BaseNetSpec base{3, {16, 16, 16}, 5, Activation::relu, true};
  std::size_t n_tasks = 4;
  std::size_t steps = 100;
  std::size_t batch = 8;
  double learning_rate = 0.05;
  OptimizerKind optimizer = OptimizerKind::sgd;
  EquivalenceFault fault = EquivalenceFault::none;
  // Probability that a task contributes data to a given step.
  double task_presence = 0.5;
  InitScheme f = InitScheme::default_base();

  void validate() const;
};

struct EquivalenceReport {
  std::string optimizer;
  std::string fault;
  // Entry k: max |generated phi_i - independent theta_i| after k updates.
  std::vector<double> max_abs_diff;

  [[nodiscard]] std::size_t steps() const { return max_abs_diff.empty() ? 0 : max_abs_diff.size() - 1; }
  [[nodiscard]] double max_diff() const;
};

// Trains a linear hypernetwork (one column per task) and n independent
// base networks on an identical synthetic stream of (state, action,
// advantage, return) batches and records how far they drift apart.
// Throws RefusalError for Adam outside the adam fault variant.
EquivalenceReport equivalence_oracle(const EquivalenceConfig& config, const Rng& rng);

// ---- init statistics -------------------------------------------------------

struct InitStats {
  std::string scheme;
  Shape shape;
  std::size_t draws = 0;
  double mean = 0.0;
  double variance = 0.0;
  double expected_variance = 0.0;
  // Standard error of `mean` under i.i.d. entries.
  double mean_stderr = 0.0;
  double min_row_norm = 0.0;
  double max_row_norm = 0.0;
  double min_singular = 0.0;
  double max_singular = 0.0;
};

// Moments of `n_draws` matrices drawn from a matrix scheme. Throws
// std::invalid_argument for fewer than 1000 sampled entries.
InitStats init_stats(const InitScheme& scheme, const Shape& shape, std::size_t n_draws, const Rng& rng);

}  // namespace hypermeta
