#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "hypermeta/gradcheck.hpp"
#include "hypermeta/trainer.hpp"

using namespace hypermeta;
namespace fs = std::filesystem;

namespace {

AgentSpec tiny_spec(EncoderKind enc, Architecture arch = Architecture::hypernetwork) {
  AgentSpec s;
  s.architecture = arch;
  s.encoder = enc;
  s.gru_hidden = 8;
  s.embed_dim = 4;
  s.hidden = {8, 8, 4};
  return s;
}

Agent make_agent(const AgentSpec& s, std::uint64_t seed, const InitScheme& method) {
  Agent a(s);
  init_model(a, default_assignment(s, method), seed);
  return a;
}

InitScheme bias_method() { return InitScheme::bias_hyperinit(InitScheme::default_base()); }

std::vector<MdpDescriptor> first_tasks(const GridWorldConfig& env, std::size_t n) {
  const TaskDistribution dist(env);
  std::vector<MdpDescriptor> t;
  for (std::size_t i = 0; i < n; ++i) t.push_back(dist.task((5 * i + 2) % dist.size()));
  return t;
}

// Environment n of a batch as a batch of its own.
RolloutBatch env_slice(const RolloutBatch& b, std::size_t n) {
  RolloutBatch s;
  s.T = b.T;
  s.N = 1;
  s.state_dim = b.state_dim;
  s.feature_dim = b.feature_dim;
  s.embed_dim = b.embed_dim;
  auto copy_rows = [&](const std::vector<double>& src, std::vector<double>& dst, std::size_t width, std::size_t rows) {
    for (std::size_t t = 0; t < rows; ++t)
      for (std::size_t j = 0; j < width; ++j) dst.push_back(src[(t * b.N + n) * width + j]);
  };
  copy_rows(b.states, s.states, b.state_dim, b.T);
  copy_rows(b.features, s.features, b.feature_dim, b.T);
  copy_rows(b.embeddings, s.embeddings, b.embed_dim, b.T);
  copy_rows(b.rewards, s.rewards, 1, b.T);
  copy_rows(b.values, s.values, 1, b.T + 1);
  copy_rows(b.log_probs, s.log_probs, 1, b.T);
  for (std::size_t t = 0; t < b.T; ++t) {
    s.actions.push_back(b.actions[t * b.N + n]);
    s.episode_done.push_back(b.episode_done[t * b.N + n]);
    s.meta_done.push_back(b.meta_done[t * b.N + n]);
  }
  s.task_ids = {b.task_ids[n]};
  s.meta_returns = {b.meta_returns[n]};
  return s;
}

std::vector<Tensor> grads_of(Agent& agent) {
  std::vector<Tensor> g;
  for (Parameter* p : agent.parameters()) g.push_back(p->grad);
  return g;
}

void zero_grads(Agent& agent) {
  for (Parameter* p : agent.parameters()) p->zero_grad();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Advantages, LambdaZeroIsTdResidual) {
  const std::vector<double> r{1.0, -0.5, 2.0, 0.3}, v{0.2, 0.4, -0.1, 0.7, 0.0};
  const std::vector<std::uint8_t> done{0, 0, 0, 1};
  const Advantages a = compute_advantages(r, v, done, 4, 1, 0.9, 0.0);
  for (std::size_t t = 0; t < 4; ++t) {
    const double next = done[t] ? 0.0 : v[t + 1];
    EXPECT_DOUBLE_EQ(a.advantages[t], r[t] + 0.9 * next - v[t]);
    EXPECT_DOUBLE_EQ(a.returns[t], a.advantages[t] + v[t]);
  }
}

TEST(Advantages, RewardToGoStopsAtMetaBoundary) {
  // Two meta-episodes of length 2 back to back in one column.
  const std::vector<double> r{1.0, 2.0, 4.0, 8.0}, v(5, 0.0);
  const std::vector<std::uint8_t> done{0, 1, 0, 1};
  const Advantages a = compute_advantages(r, v, done, 4, 1, 1.0, 1.0);
  EXPECT_EQ(a.advantages, (std::vector<double>{3.0, 2.0, 12.0, 8.0}));
}

TEST(Advantages, HandCase) {
  const Advantages a = compute_advantages({1, 0, 1}, {0.5, 0.5, 0.5, 0.0}, {0, 0, 1}, 3, 1, 0.9, 0.8);
  EXPECT_NEAR(a.advantages[2], 0.5, 1e-12);
  EXPECT_NEAR(a.advantages[1], -0.05 + 0.72 * 0.5, 1e-12);
  EXPECT_NEAR(a.advantages[0], 0.95 + 0.72 * 0.31, 1e-12);
  EXPECT_NEAR(a.advantages[0], 1.1732, 1e-12);
  EXPECT_THROW(compute_advantages({1, 0}, {0, 0}, {0, 1}, 2, 1, 0.9, 0.8), ShapeError);
}

TEST(Advantages, ColumnsAreIndependent) {
  const GridWorldConfig env;
  Agent agent = make_agent(tiny_spec(EncoderKind::recurrent), 1, bias_method());
  RolloutBatch b = rollout(agent, env, first_tasks(env, 3), Rng(2));
  const Advantages before = compute_advantages(b, 0.95, 0.95);
  for (std::size_t t = 0; t < b.T; ++t) b.rewards[t * b.N + 1] += 3.0 * std::sin(static_cast<double>(t));
  const Advantages after = compute_advantages(b, 0.95, 0.95);
  for (std::size_t t = 0; t < b.T; ++t)
    for (std::size_t n : {0u, 2u}) {
      EXPECT_EQ(before.advantages[t * b.N + n], after.advantages[t * b.N + n]);
      EXPECT_EQ(before.returns[t * b.N + n], after.returns[t * b.N + n]);
    }
}

TEST(Loss, UniformPolicyEntropy) {
  const GridWorldConfig env;
  AgentSpec s = tiny_spec(EncoderKind::onehot);
  Agent agent(s);  // all-zero parameters: uniform policy, zero values
  const RolloutBatch b = rollout(agent, env, first_tasks(env, 2), Rng(3));
  const std::vector<double> zeros(b.rows(), 0.0);
  Tape tape;
  const LossGraph g = a2c_loss(tape, agent, b, zeros, zeros, TrainerConfig{});
  EXPECT_NEAR(g.stats.entropy, std::log(5.0), 1e-12);
  for (double lp : b.log_probs) EXPECT_NEAR(lp, -std::log(5.0), 1e-12);
}

TEST(Loss, ZeroAdvantageLeavesOnlyEntropyGradient) {
  const GridWorldConfig env;
  const AgentSpec s = tiny_spec(EncoderKind::onehot);
  Agent agent = make_agent(s, 4, InitScheme::weight_hyperinit(InitScheme::default_base()));
  const RolloutBatch b = rollout(agent, env, first_tasks(env, 2), Rng(5));
  // Value targets equal to the current critic output on the same rows.
  std::vector<double> returns;
  {
    Tape t;
    const PolicyOutput po = agent.policy(t, t.constant(Tensor(Shape{b.rows(), b.state_dim}, b.states)),
                                         t.constant(Tensor(Shape{b.rows(), b.embed_dim}, b.embeddings)));
    returns = po.value.value().values();
  }
  const std::vector<double> zeros(b.rows(), 0.0);
  TrainerConfig cfg;
  cfg.entropy_coef = 0.0;
  zero_grads(agent);
  {
    Tape t;
    const LossGraph g = a2c_loss(t, agent, b, zeros, returns, cfg);
    EXPECT_EQ(g.stats.value_loss, 0.0);
    t.backward(g.loss);
  }
  for (const Tensor& g : grads_of(agent))
    for (double v : g.data()) EXPECT_EQ(v, 0.0);
  cfg.entropy_coef = 0.01;
  zero_grads(agent);
  Tape t;
  t.backward(a2c_loss(t, agent, b, zeros, returns, cfg).loss);
  double norm = 0.0;
  for (const Tensor& g : grads_of(agent))
    for (double v : g.data()) norm += v * v;
  EXPECT_GT(norm, 0.0);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  GridWorldConfig env;
  env.episode_len = 3;
  env.episodes_per_meta = 1;
  for (Architecture arch : {Architecture::standard, Architecture::hypernetwork, Architecture::film}) {
    AgentSpec s = tiny_spec(EncoderKind::recurrent, arch);
    s.activation = Activation::tanh;
    const InitScheme method = arch == Architecture::film ? InitScheme::film_bias_hyperinit(InitScheme::default_base())
                                                         : InitScheme::weight_hyperinit(InitScheme::default_base());
    Agent agent = make_agent(s, 6, method);
    const RolloutBatch b = rollout(agent, env, first_tasks(env, 2), Rng(7));
    const std::vector<double> adv{0.7, -1.2, 0.4, 0.1, 0.9, -0.3}, ret{1.0, -0.5, 0.2, 0.0, 0.3, 0.8};
    const TrainerConfig cfg;
    const GradCheckResult r = grad_check_params(
        [&](Tape& t) { return a2c_loss(t, agent, b, adv, ret, cfg).loss; }, agent.parameters(), 1e-5, 400);
    EXPECT_LT(r.max_relative_error, 1e-5) << to_string(arch);
  }
}

TEST(Loss, NoGradientCrossesMetaEpisodes) {
  const GridWorldConfig env;
  const AgentSpec s = tiny_spec(EncoderKind::recurrent);
  Agent agent = make_agent(s, 8, InitScheme::weight_hyperinit(InitScheme::default_base()));
  const RolloutBatch b = rollout(agent, env, first_tasks(env, 3), Rng(9));
  const TrainerConfig cfg;
  const Advantages full = compute_advantages(b, cfg.gamma, cfg.gae_lambda);
  zero_grads(agent);
  {
    Tape t;
    t.backward(a2c_loss(t, agent, b, full.advantages, full.returns, cfg).loss);
  }
  const std::vector<Tensor> g_full = grads_of(agent);
  std::vector<Tensor> g_sum;
  for (std::size_t n = 0; n < b.N; ++n) {
    const RolloutBatch one = env_slice(b, n);
    const Advantages a = compute_advantages(one, cfg.gamma, cfg.gae_lambda);
    zero_grads(agent);
    Tape t;
    t.backward(a2c_loss(t, agent, one, a.advantages, a.returns, cfg).loss);
    const std::vector<Tensor> g = grads_of(agent);
    if (g_sum.empty()) g_sum = g;
    else
      for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = 0; j < g[i].size(); ++j) g_sum[i][j] += g[i][j];
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < g_full.size(); ++i)
    for (std::size_t j = 0; j < g_full[i].size(); ++j)
      worst = std::max(worst, std::abs(g_full[i][j] - g_sum[i][j] / static_cast<double>(b.N)));
  EXPECT_LT(worst, 1e-12);
}

TEST(Rollout, OneHotEmbeddingIsConstant) {
  const GridWorldConfig env;
  Agent agent = make_agent(tiny_spec(EncoderKind::onehot), 10, bias_method());
  const auto tasks = first_tasks(env, 3);
  const RolloutBatch b = rollout(agent, env, tasks, Rng(11));
  for (std::size_t t = 0; t < b.T; ++t)
    for (std::size_t n = 0; n < b.N; ++n)
      for (std::size_t k = 0; k < b.embed_dim; ++k)
        EXPECT_EQ(b.embeddings[(t * b.N + n) * b.embed_dim + k], k == *tasks[n].task_id ? 1.0 : 0.0);
}

TEST(Rollout, ReturnsWithinEnvelopeAndReplayable) {
  const GridWorldConfig env;
  const TaskDistribution dist(env);
  Agent agent = make_agent(tiny_spec(EncoderKind::recurrent), 12, bias_method());
  // Envelope: worst and best returns seen over 1000 uniform-random rollouts, and the oracle.
  double lo = 1e9;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed);
    GridWorld g(env);
    const MetaEpisode tau = run_meta_episode(g, dist.sample_task(rng), [&](GridWorld&, const std::vector<double>&) {
      return rng.below(kGridActions);
    });
    lo = std::min(lo, meta_return(tau, 1.0));
  }
  const auto tasks = first_tasks(env, 8);
  const RolloutBatch b = rollout(agent, env, tasks, Rng(13));
  for (std::size_t n = 0; n < b.N; ++n) {
    EXPECT_GE(b.meta_returns[n], -0.1 * static_cast<double>(env.meta_episode_len()));
    EXPECT_GE(b.meta_returns[n], lo - 3.0);
    EXPECT_LE(b.meta_returns[n], oracle_meta_return(env, tasks[n].goal) + 1e-12);
    EXPECT_NEAR(meta_return(b.episode(n, env), 1.0), b.meta_returns[n], 1e-9);
  }
  const RolloutBatch again = rollout(agent, env, tasks, Rng(13));
  EXPECT_EQ(again.actions, b.actions);
  EXPECT_EQ(again.values, b.values);
  const RolloutBatch threaded = rollout(agent, env, tasks, Rng(13), RolloutOptions{false, 3});
  EXPECT_EQ(threaded.actions, b.actions);
  for (std::size_t i = 0; i < b.log_probs.size(); ++i) EXPECT_NEAR(threaded.log_probs[i], b.log_probs[i], 1e-12) << i;
}

TEST(Train, SmokeRunWritesMetricsAndIsDeterministic) {
  const GridWorldConfig env;
  const AgentSpec s = tiny_spec(EncoderKind::recurrent);
  TrainerConfig cfg;
  cfg.meta_episodes_per_update = 4;
  cfg.total_env_steps = 10 * 4 * env.meta_episode_len();
  cfg.eval_every = 5;
  cfg.eval_meta_episodes = 8;
  cfg.checkpoint_every = 5;
  const fs::path root = fs::temp_directory_path() / "hypermeta_train_smoke";
  fs::remove_all(root);
  std::string first_metrics, first_eval;
  for (int run = 0; run < 2; ++run) {
    Agent agent = make_agent(s, 14, bias_method());
    const fs::path dir = root / std::to_string(run);
    const TrainResult r = train(agent, env, cfg, TrainOutputs{dir});
    EXPECT_GE(r.metrics.size(), 10u);
    const std::string metrics = read_file(dir / "metrics.csv");
    const std::string evals = read_file(dir / "eval.csv");
    std::size_t lines = 0;
    for (char c : metrics) lines += c == '\n';
    EXPECT_GE(lines, 11u);
    EXPECT_TRUE(fs::exists(dir / "checkpoint_final.ckpt"));
    EXPECT_TRUE(fs::exists(dir / "checkpoint_5.ckpt"));
    if (run == 0) {
      first_metrics = metrics;
      first_eval = evals;
    } else {
      EXPECT_EQ(metrics, first_metrics);
      EXPECT_EQ(evals, first_eval);
    }
  }
  fs::remove_all(root);
}

TEST(Train, FinalWindow) {
  std::vector<double> r(250);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = static_cast<double>(i);
  EXPECT_DOUBLE_EQ(final_window_mean(r), (247.0 + 248.0 + 249.0) / 3.0);
  EXPECT_DOUBLE_EQ(final_window_mean({4.0, 6.0}), 6.0);
  EXPECT_THROW(final_window_mean({}), std::invalid_argument);
}

TEST(Train, ConfigValidation) {
  TrainerConfig cfg;
  cfg.gamma = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = TrainerConfig{};
  cfg.meta_episodes_per_update = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
