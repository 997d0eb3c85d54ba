#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hypermeta/rng.hpp"

namespace hypermeta {

enum class ObservationKind { coordinates, onehot_cell };
std::string to_string(ObservationKind k);
ObservationKind observation_kind_from_string(const std::string& name);

enum GridAction : std::size_t { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kStay = 4 };
inline constexpr std::size_t kGridActions = 5;

struct GridWorldConfig {
  std::size_t width = 5;
  std::size_t height = 5;
  std::size_t episode_len = 15;
  std::size_t episodes_per_meta = 4;
  double step_reward = -0.1;
  double goal_reward = 1.0;
  ObservationKind observation = ObservationKind::coordinates;

  void validate() const;
  [[nodiscard]] std::size_t observation_dim() const;
  [[nodiscard]] std::size_t meta_episode_len() const { return episode_len * episodes_per_meta; }
};

struct Cell {
  std::size_t x = 0;
  std::size_t y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

// One MDP of the family: the hidden goal cell.
struct MdpDescriptor {
  Cell goal;
  std::optional<std::size_t> task_id;
};

// Uniform distribution over every cell except the start.
class TaskDistribution {
 public:
  explicit TaskDistribution(const GridWorldConfig& config);

  [[nodiscard]] std::size_t size() const { return tasks_.size(); }
  [[nodiscard]] const MdpDescriptor& task(std::size_t id) const { return tasks_.at(id); }
  [[nodiscard]] const std::vector<MdpDescriptor>& tasks() const { return tasks_; }
  MdpDescriptor sample_task(Rng& rng) const;

 private:
  std::vector<MdpDescriptor> tasks_;
};

struct StepResult {
  std::vector<double> state;
  double reward = 0.0;
  bool episode_done = false;
  bool meta_done = false;
};

class GridWorld {
 public:
  explicit GridWorld(GridWorldConfig config);

  // Starts a new meta-episode on `task`.
  std::vector<double> reset(const MdpDescriptor& task);
  // Throws std::logic_error once the meta-episode is over.
  StepResult step(std::size_t action);

  [[nodiscard]] const GridWorldConfig& config() const { return config_; }
  [[nodiscard]] Cell position() const { return pos_; }
  [[nodiscard]] std::size_t episode_step() const { return t_; }
  [[nodiscard]] std::size_t episode_index() const { return episode_; }
  [[nodiscard]] bool finished() const { return finished_; }
  [[nodiscard]] std::vector<double> observe() const;

  static Cell start_cell() { return {}; }

 private:
  GridWorldConfig config_;
  MdpDescriptor task_;
  Cell pos_;
  std::size_t t_ = 0;
  std::size_t episode_ = 0;
  bool started_ = false;
  bool finished_ = false;
};

Cell move(const GridWorldConfig& config, Cell from, std::size_t action);

struct MetaStep {
  std::vector<double> state;
  std::size_t action = 0;
  double reward = 0.0;
  bool episode_done = false;
};

struct MetaEpisode {
  std::vector<MetaStep> steps;
  std::size_t episodes_per_meta = 0;
  MdpDescriptor task;

  [[nodiscard]] std::size_t episode_count() const;
  [[nodiscard]] bool complete() const { return episode_count() == episodes_per_meta && !steps.empty() && steps.back().episode_done; }
};

// Discounted sum over the whole meta-episode; throws if incomplete.
double meta_return(const MetaEpisode& tau, double gamma);
double discounted_sum(const std::vector<double>& rewards, double gamma);

// Goal-aware policy: shortest path (vertical moves first), then stay.
std::size_t oracle_action(Cell at, Cell goal);
double oracle_episode_return(const GridWorldConfig& config, Cell goal);
double oracle_meta_return(const GridWorldConfig& config, Cell goal);
// Mean undiscounted oracle meta-return over the task distribution.
double mean_oracle_meta_return(const GridWorldConfig& config);

// Rolls out a complete meta-episode with an arbitrary action rule.
template <typename Policy>
MetaEpisode run_meta_episode(GridWorld& env, const MdpDescriptor& task, Policy&& policy) {
  MetaEpisode tau;
  tau.task = task;
  tau.episodes_per_meta = env.config().episodes_per_meta;
  std::vector<double> s = env.reset(task);
  while (!env.finished()) {
    const std::size_t a = policy(env, s);
    StepResult r = env.step(a);
    tau.steps.push_back(MetaStep{s, a, r.reward, r.episode_done});
    s = std::move(r.state);
  }
  return tau;
}

}  // namespace hypermeta
