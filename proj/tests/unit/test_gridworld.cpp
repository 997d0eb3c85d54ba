#include <map>

#include <gtest/gtest.h>

#include "hypermeta/gridworld.hpp"

using namespace hypermeta;

TEST(Tasks, UniformOverNonStartCells) {
  const GridWorldConfig cfg;
  const TaskDistribution dist(cfg);
  ASSERT_EQ(dist.size(), 24u);
  std::map<std::size_t, int> counts;
  Rng rng(0);
  for (int i = 0; i < 10000; ++i) ++counts[*dist.sample_task(rng).task_id];
  ASSERT_EQ(counts.size(), 24u);
  for (const auto& [id, n] : counts) {
    EXPECT_GT(n, 10000.0 / 24 * 0.7) << id;
    EXPECT_LT(n, 10000.0 / 24 * 1.3) << id;
    EXPECT_FALSE(dist.task(id).goal == GridWorld::start_cell());
  }
  Rng a(5), b(5);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(dist.sample_task(a).task_id, dist.sample_task(b).task_id);
}

TEST(Tasks, DegenerateGrid) {
  GridWorldConfig cfg;
  cfg.width = 1;
  cfg.height = 2;
  const TaskDistribution dist(cfg);
  ASSERT_EQ(dist.size(), 1u);
  EXPECT_EQ(dist.task(0).goal, (Cell{0, 1}));
  cfg.height = 1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(GridWorld, ObservationHidesGoal) {
  const GridWorldConfig cfg;
  const TaskDistribution dist(cfg);
  for (ObservationKind kind : {ObservationKind::coordinates, ObservationKind::onehot_cell}) {
    GridWorldConfig c = cfg;
    c.observation = kind;
    GridWorld env(c);
    const std::vector<double> first = env.reset(dist.task(0));
    EXPECT_EQ(first.size(), c.observation_dim());
    for (const MdpDescriptor& task : dist.tasks()) {
      EXPECT_EQ(env.reset(task), first);
      // Same action sequence, any goal: observations only change through position.
      GridWorld other(c);
      other.reset(dist.task(0));
      for (std::size_t a : {kRight, kUp, kUp, kLeft, kStay}) {
        const StepResult r = env.step(a);
        EXPECT_EQ(r.state, other.step(a).state);
      }
    }
  }
}

TEST(GridWorld, RewardsAndWalls) {
  GridWorldConfig cfg;
  GridWorld env(cfg);
  env.reset(MdpDescriptor{{1, 0}, std::nullopt});
  EXPECT_EQ(env.step(kLeft).reward, cfg.step_reward);
  EXPECT_EQ(env.position(), (Cell{0, 0}));
  EXPECT_EQ(env.step(kDown).reward, cfg.step_reward);
  EXPECT_EQ(env.position(), (Cell{0, 0}));
  EXPECT_EQ(env.step(kRight).reward, cfg.goal_reward);
  EXPECT_EQ(env.step(kStay).reward, cfg.goal_reward);
  EXPECT_EQ(move(cfg, {4, 4}, kUp), (Cell{4, 4}));
  EXPECT_EQ(move(cfg, {4, 4}, kRight), (Cell{4, 4}));
  EXPECT_THROW(move(cfg, {0, 0}, 5), std::out_of_range);
  EXPECT_THROW(env.reset(MdpDescriptor{{5, 0}, std::nullopt}), std::invalid_argument);
}

TEST(GridWorld, EpisodeStructure) {
  const GridWorldConfig cfg;
  GridWorld env(cfg);
  EXPECT_THROW(env.step(kUp), std::logic_error);
  const MetaEpisode tau = run_meta_episode(env, MdpDescriptor{{2, 3}, 7}, [](GridWorld&, const std::vector<double>&) {
    return std::size_t{kUp};
  });
  EXPECT_EQ(tau.steps.size(), cfg.meta_episode_len());
  EXPECT_EQ(tau.episode_count(), 4u);
  EXPECT_TRUE(tau.complete());
  EXPECT_TRUE(env.finished());
  EXPECT_THROW(env.step(kUp), std::logic_error);
  for (std::size_t t = 0; t < tau.steps.size(); ++t) {
    EXPECT_EQ(tau.steps[t].episode_done, (t + 1) % cfg.episode_len == 0);
    // Each episode restarts at the start cell.
    if (t % cfg.episode_len == 0) EXPECT_EQ(tau.steps[t].state, (std::vector<double>{0.0, 0.0, 0.0}));
  }
}

TEST(GridWorld, DeterministicDynamics) {
  const GridWorldConfig cfg;
  auto policy = [](GridWorld& env, const std::vector<double>&) { return (env.episode_step() * 7 + 3) % 5; };
  GridWorld a(cfg), b(cfg);
  const MetaEpisode ta = run_meta_episode(a, MdpDescriptor{{3, 1}, 0}, policy);
  const MetaEpisode tb = run_meta_episode(b, MdpDescriptor{{3, 1}, 0}, policy);
  ASSERT_EQ(ta.steps.size(), tb.steps.size());
  for (std::size_t t = 0; t < ta.steps.size(); ++t) {
    EXPECT_EQ(ta.steps[t].state, tb.steps[t].state);
    EXPECT_EQ(ta.steps[t].reward, tb.steps[t].reward);
  }
}

TEST(Oracle, FarCornerReturn) {
  const GridWorldConfig cfg;
  // 8 moves, the last one entering the goal, then 7 steps on the goal.
  EXPECT_NEAR(oracle_episode_return(cfg, {4, 4}), -0.1 * 7 + 1.0 * 8, 1e-12);
  EXPECT_NEAR(oracle_meta_return(cfg, {4, 4}), 4 * 7.3, 1e-12);
  EXPECT_NEAR(oracle_episode_return(cfg, {1, 0}), 15.0, 1e-12);
}

TEST(Oracle, BeatsRandomPolicies) {
  const GridWorldConfig cfg;
  const TaskDistribution dist(cfg);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const MdpDescriptor task = dist.sample_task(rng);
    GridWorld env(cfg);
    const MetaEpisode tau =
        run_meta_episode(env, task, [&](GridWorld&, const std::vector<double>&) { return rng.below(kGridActions); });
    EXPECT_LE(meta_return(tau, 1.0), oracle_meta_return(cfg, task.goal) + 1e-12);
  }
  double mean = 0.0;
  for (const MdpDescriptor& t : dist.tasks()) mean += oracle_meta_return(cfg, t.goal);
  EXPECT_NEAR(mean_oracle_meta_return(cfg), mean / 24.0, 1e-12);
}

TEST(Returns, DiscountedSum) {
  EXPECT_EQ(discounted_sum({0, 0, 0}, 0.9), 0.0);
  EXPECT_EQ(discounted_sum({1, 1, 1}, 1.0), 3.0);
  EXPECT_NEAR(discounted_sum({1, 0, 2}, 0.95), 2.805, 1e-12);
  MetaEpisode partial;
  partial.episodes_per_meta = 4;
  partial.steps.push_back(MetaStep{{}, 0, 1.0, false});
  EXPECT_THROW(meta_return(partial, 1.0), std::invalid_argument);
}
