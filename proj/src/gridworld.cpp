#include "hypermeta/gridworld.hpp"

#include <cmath>
#include <stdexcept>

namespace hypermeta {

std::string to_string(ObservationKind k) { return k == ObservationKind::coordinates ? "coordinates" : "onehot_cell"; }

ObservationKind observation_kind_from_string(const std::string& name) {
  if (name == "coordinates") return ObservationKind::coordinates;
  if (name == "onehot_cell") return ObservationKind::onehot_cell;
  throw std::invalid_argument("unknown observation encoding '" + name + "'");
}

void GridWorldConfig::validate() const {
  if (width == 0 || height == 0) throw std::invalid_argument("grid dimensions must be positive");
  if (width * height < 2) throw std::invalid_argument("grid needs at least one cell besides the start");
  if (episode_len < 1) throw std::invalid_argument("episode_len must be >= 1");
  if (episodes_per_meta < 1) throw std::invalid_argument("episodes_per_meta must be >= 1");
  if (!std::isfinite(step_reward) || !std::isfinite(goal_reward)) throw std::invalid_argument("rewards must be finite");
}

std::size_t GridWorldConfig::observation_dim() const {
  return observation == ObservationKind::coordinates ? 3 : width * height + 1;
}

TaskDistribution::TaskDistribution(const GridWorldConfig& config) {
  config.validate();
  const Cell start = GridWorld::start_cell();
  for (std::size_t y = 0; y < config.height; ++y)
    for (std::size_t x = 0; x < config.width; ++x) {
      const Cell c{x, y};
      if (c == start) continue;
      tasks_.push_back(MdpDescriptor{c, tasks_.size()});
    }
  if (tasks_.empty()) throw std::invalid_argument("empty task set");
}

MdpDescriptor TaskDistribution::sample_task(Rng& rng) const { return tasks_[rng.below(tasks_.size())]; }

GridWorld::GridWorld(GridWorldConfig config) : config_(std::move(config)) { config_.validate(); }

std::vector<double> GridWorld::reset(const MdpDescriptor& task) {
  if (task.goal.x >= config_.width || task.goal.y >= config_.height)
    throw std::invalid_argument("goal cell lies outside the grid");
  task_ = task;
  pos_ = start_cell();
  t_ = 0;
  episode_ = 0;
  started_ = true;
  finished_ = false;
  return observe();
}

Cell move(const GridWorldConfig& config, Cell from, std::size_t action) {
  Cell c = from;
  switch (action) {
    case kUp:
      if (c.y + 1 < config.height) ++c.y;
      break;
    case kDown:
      if (c.y > 0) --c.y;
      break;
    case kLeft:
      if (c.x > 0) --c.x;
      break;
    case kRight:
      if (c.x + 1 < config.width) ++c.x;
      break;
    case kStay: break;
    default: throw std::out_of_range("grid action " + std::to_string(action) + " out of range");
  }
  return c;
}

StepResult GridWorld::step(std::size_t action) {
  if (!started_) throw std::logic_error("step before reset");
  if (finished_) throw std::logic_error("step after the meta-episode ended");
  pos_ = move(config_, pos_, action);
  StepResult r;
  r.reward = pos_ == task_.goal ? config_.goal_reward : config_.step_reward;
  ++t_;
  if (t_ == config_.episode_len) {
    r.episode_done = true;
    ++episode_;
    t_ = 0;
    pos_ = start_cell();
    if (episode_ == config_.episodes_per_meta) {
      finished_ = true;
      r.meta_done = true;
    }
  }
  r.state = observe();
  return r;
}

std::vector<double> GridWorld::observe() const {
  const double time = static_cast<double>(t_) / static_cast<double>(config_.episode_len);
  if (config_.observation == ObservationKind::coordinates) {
    const double x = config_.width > 1 ? static_cast<double>(pos_.x) / static_cast<double>(config_.width - 1) : 0.0;
    const double y = config_.height > 1 ? static_cast<double>(pos_.y) / static_cast<double>(config_.height - 1) : 0.0;
    return {x, y, time};
  }
  std::vector<double> s(config_.width * config_.height + 1, 0.0);
  s[pos_.y * config_.width + pos_.x] = 1.0;
  s.back() = time;
  return s;
}

std::size_t MetaEpisode::episode_count() const {
  std::size_t n = 0;
  for (const MetaStep& s : steps) n += s.episode_done ? 1 : 0;
  return n;
}

double discounted_sum(const std::vector<double>& rewards, double gamma) {
  double total = 0.0, g = 1.0;
  for (double r : rewards) {
    total += g * r;
    g *= gamma;
  }
  return total;
}

double meta_return(const MetaEpisode& tau, double gamma) {
  if (!tau.complete()) throw std::invalid_argument("meta_return: incomplete meta-episode");
  std::vector<double> rewards;
  rewards.reserve(tau.steps.size());
  for (const MetaStep& s : tau.steps) rewards.push_back(s.reward);
  return discounted_sum(rewards, gamma);
}

std::size_t oracle_action(Cell at, Cell goal) {
  if (at.y < goal.y) return kUp;
  if (at.y > goal.y) return kDown;
  if (at.x < goal.x) return kRight;
  if (at.x > goal.x) return kLeft;
  return kStay;
}

double oracle_episode_return(const GridWorldConfig& config, Cell goal) {
  GridWorldConfig one = config;
  one.episodes_per_meta = 1;
  GridWorld env(one);
  const MetaEpisode tau =
      run_meta_episode(env, MdpDescriptor{goal, std::nullopt},
                       [&](const GridWorld& e, const std::vector<double>&) { return oracle_action(e.position(), goal); });
  return meta_return(tau, 1.0);
}

double oracle_meta_return(const GridWorldConfig& config, Cell goal) {
  return oracle_episode_return(config, goal) * static_cast<double>(config.episodes_per_meta);
}

double mean_oracle_meta_return(const GridWorldConfig& config) {
  const TaskDistribution dist(config);
  double total = 0.0;
  for (const MdpDescriptor& t : dist.tasks()) total += oracle_meta_return(config, t.goal);
  return total / static_cast<double>(dist.size());
}

}  // namespace hypermeta
