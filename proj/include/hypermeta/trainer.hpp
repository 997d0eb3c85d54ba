#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hypermeta/gridworld.hpp"
#include "hypermeta/model.hpp"
#include "hypermeta/optim.hpp"

namespace hypermeta {

struct TrainerConfig {
  double gamma = 0.95;
  double gae_lambda = 0.95;
  OptimizerConfig optimizer{OptimizerKind::adam, 1e-4};
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  bool normalize_advantages = true;
  // Rollout threads; each owns a disjoint subset of the environments.
  std::size_t workers = 1;
  std::size_t meta_episodes_per_update = 16;
  std::size_t total_env_steps = 960 * 10;
  // Evaluate every n updates (0: only after the final update).
  std::size_t eval_every = 0;
  std::size_t eval_meta_episodes = 48;
  std::size_t checkpoint_every = 0;
  std::uint64_t seed = 0;

  void validate() const;
  [[nodiscard]] std::size_t num_updates(std::size_t meta_len) const;
};

// Lock-step rollout of N meta-episodes of length T. Row index t*N + n.
struct RolloutBatch {
  std::size_t T = 0;
  std::size_t N = 0;
  std::size_t state_dim = 0;
  std::size_t feature_dim = 0;
  std::size_t embed_dim = 0;
  std::vector<double> states;      // [T*N x state_dim]
  std::vector<double> features;    // encoder inputs [T*N x feature_dim]
  std::vector<double> embeddings;  // [T*N x embed_dim], as seen while acting
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  std::vector<double> values;  // [(T+1)*N]; last row is the bootstrap (0)
  std::vector<double> log_probs;
  std::vector<std::uint8_t> episode_done;
  std::vector<std::uint8_t> meta_done;
  std::vector<std::size_t> task_ids;
  std::vector<double> meta_returns;  // undiscounted, per meta-episode

  [[nodiscard]] std::size_t rows() const { return T * N; }
  // Meta-episode n as a trajectory record.
  [[nodiscard]] MetaEpisode episode(std::size_t n, const GridWorldConfig& env) const;
};

struct RolloutOptions {
  bool greedy = false;
  std::size_t workers = 1;
};

// `rng` provides stream n for the action choices of environment n.
RolloutBatch rollout(Agent& agent, const GridWorldConfig& env, const std::vector<MdpDescriptor>& tasks,
                     const Rng& rng, const RolloutOptions& options = {});
// Single meta-episode convenience wrapper.
std::pair<MetaEpisode, RolloutBatch> rollout_meta_episode(Agent& agent, const GridWorldConfig& env,
                                                          const MdpDescriptor& task, const Rng& rng,
                                                          bool greedy = false);

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;  // value targets
};

// GAE over a [T x N] grid. values has T+1 rows. Propagation stops at
// meta_done; episode boundaries inside a meta-episode bootstrap normally.
Advantages compute_advantages(const std::vector<double>& rewards, const std::vector<double>& values,
                              const std::vector<std::uint8_t>& meta_done, std::size_t T, std::size_t N, double gamma,
                              double lambda);
Advantages compute_advantages(const RolloutBatch& batch, double gamma, double lambda);

struct LossStats {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
};

struct LossGraph {
  Var loss;
  LossStats stats;
};

// -mean(logp * A) + value_coef * mean((v - target)^2) - entropy_coef * mean(H),
// rebuilt end to end (encoder unrolled over the meta-episode).
LossGraph a2c_loss(Tape& tape, Agent& agent, const RolloutBatch& batch, const std::vector<double>& advantages,
                   const std::vector<double>& returns, const TrainerConfig& config);

// One gradient step. Throws NonFiniteError on a non-finite loss or update.
LossStats a2c_update(Agent& agent, Optimizer& optimizer, const RolloutBatch& batch, const TrainerConfig& config);

struct MetricsRow {
  std::size_t env_steps = 0;
  std::size_t update = 0;
  double mean_meta_return = 0.0;
  double return_stderr = 0.0;
  LossStats loss;
};

struct EvalRow {
  std::size_t update = 0;
  std::size_t env_steps = 0;
  std::string policy;  // "argmax" or "sample"
  double mean_meta_return = 0.0;
  double return_stderr = 0.0;
  double oracle_normalized = 0.0;
};

struct EvalResult {
  double mean = 0.0;
  double stderr_ = 0.0;
  double oracle_normalized = 0.0;
};

EvalResult evaluate(Agent& agent, const GridWorldConfig& env, std::size_t n_meta_episodes, const Rng& rng, bool greedy,
                    std::size_t workers = 1);

struct TrainResult {
  std::vector<MetricsRow> metrics;
  std::vector<EvalRow> evals;
  // Mean training meta-return over the last 1% of updates (at least one).
  double final_window_return = 0.0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainOutputs {
  // When set, metrics.csv, eval.csv and checkpoints are written here.
  std::optional<std::filesystem::path> dir;
};

// Throws TrainingError (after writing checkpoint_error.ckpt) on non-finite values.
TrainResult train(Agent& agent, const GridWorldConfig& env, const TrainerConfig& config,
                  const TrainOutputs& outputs = {});

double final_window_mean(const std::vector<double>& per_update_returns, double fraction = 0.01);

std::string metrics_header();
std::string format_metrics_row(const MetricsRow& row);
std::string eval_header();
std::string format_eval_row(const EvalRow& row);

}  // namespace hypermeta
