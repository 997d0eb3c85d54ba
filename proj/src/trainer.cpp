#include "hypermeta/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "hypermeta/checkpoint.hpp"
#include "hypermeta/stats.hpp"

namespace hypermeta {

void TrainerConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw std::invalid_argument("gae_lambda must lie in [0, 1]");
  if (!(optimizer.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (entropy_coef < 0.0 || value_coef < 0.0) throw std::invalid_argument("loss coefficients must be >= 0");
  if (!(max_grad_norm > 0.0)) throw std::invalid_argument("max_grad_norm must be positive");
  if (workers == 0) throw std::invalid_argument("workers must be >= 1");
  if (meta_episodes_per_update == 0) throw std::invalid_argument("meta_episodes_per_update must be >= 1");
  if (total_env_steps == 0) throw std::invalid_argument("total_env_steps must be >= 1");
  if (eval_meta_episodes == 0) throw std::invalid_argument("eval_meta_episodes must be >= 1");
}

std::size_t TrainerConfig::num_updates(std::size_t meta_len) const {
  const std::size_t per = meta_len * meta_episodes_per_update;
  return std::max<std::size_t>(1, (total_env_steps + per - 1) / per);
}

MetaEpisode RolloutBatch::episode(std::size_t n, const GridWorldConfig& env) const {
  MetaEpisode tau;
  tau.episodes_per_meta = env.episodes_per_meta;
  const TaskDistribution dist(env);
  tau.task = dist.task(task_ids.at(n));
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t r = t * N + n;
    MetaStep s;
    s.state.assign(states.begin() + static_cast<std::ptrdiff_t>(r * state_dim),
                   states.begin() + static_cast<std::ptrdiff_t>((r + 1) * state_dim));
    s.action = actions[r];
    s.reward = rewards[r];
    s.episode_done = episode_done[r] != 0;
    tau.steps.push_back(std::move(s));
  }
  return tau;
}

// ---- rollout ------------------------------------------------------------

namespace {

Tensor rows_of(const std::vector<double>& flat, std::size_t first, std::size_t count, std::size_t width) {
  const auto b = flat.begin() + static_cast<std::ptrdiff_t>(first * width);
  return Tensor(Shape{count, width}, std::vector<double>(b, b + static_cast<std::ptrdiff_t>(count * width)));
}

std::size_t sample_categorical(std::span<const double> log_probs, Rng& rng) {
  const double u = rng.uniform();
  double c = 0.0;
  for (std::size_t a = 0; a < log_probs.size(); ++a) {
    c += std::exp(log_probs[a]);
    if (u < c) return a;
  }
  // Rounding left a sliver above the last cumulative value.
  std::size_t best = 0;
  for (std::size_t a = 1; a < log_probs.size(); ++a)
    if (log_probs[a] > log_probs[best]) best = a;
  return best;
}

std::size_t argmax(std::span<const double> xs) {
  return static_cast<std::size_t>(std::max_element(xs.begin(), xs.end()) - xs.begin());
}

void rollout_range(Agent& agent, const GridWorldConfig& env_config, const std::vector<MdpDescriptor>& tasks,
                   const Rng& rng, bool greedy, std::size_t lo, std::size_t hi, RolloutBatch& out) {
  const AgentSpec& spec = agent.spec();
  const std::size_t m = hi - lo, N = out.N, S = out.state_dim, I = out.feature_dim, K = out.embed_dim;
  const std::size_t A = spec.action_dim;
  std::vector<GridWorld> envs;
  std::vector<Rng> action_rng;
  std::vector<std::vector<double>> obs(m);
  for (std::size_t j = 0; j < m; ++j) {
    envs.emplace_back(env_config);
    obs[j] = envs[j].reset(tasks[lo + j]);
    action_rng.push_back(rng.stream(lo + j));
  }
  std::vector<std::optional<std::size_t>> prev_action(m);
  std::vector<double> prev_reward(m, 0.0);
  GruEncoder* enc = agent.encoder();
  Tensor hidden;
  if (enc) hidden = Tensor(Shape{m, enc->hidden_dim});
  Tensor onehot;
  if (!enc) {
    onehot = Tensor(Shape{m, K});
    for (std::size_t j = 0; j < m; ++j) onehot[j * K + tasks[lo + j].task_id.value()] = 1.0;
  }
  for (std::size_t t = 0; t < out.T; ++t) {
    Tape tape(GradMode::disabled);
    Tensor s(Shape{m, S});
    Tensor f(Shape{m, I});
    for (std::size_t j = 0; j < m; ++j) {
      const std::vector<double> feat = encoder_features(EncoderInput{obs[j], prev_action[j], prev_reward[j]}, A);
      std::copy(obs[j].begin(), obs[j].end(), s.data().begin() + static_cast<std::ptrdiff_t>(j * S));
      std::copy(feat.begin(), feat.end(), f.data().begin() + static_cast<std::ptrdiff_t>(j * I));
    }
    Var e;
    if (enc) {
      const BoundGru g = bind(tape, *enc);
      Var h = g.step(tape.constant(hidden), tape.constant(f));
      hidden = h.value();
      e = g.embed(h);
    } else {
      e = tape.constant(onehot);
    }
    const PolicyOutput po = agent.policy(tape, tape.constant(s), e);
    const Tensor ls = log_softmax(po.logits).value();
    const Tensor& v = po.value.value();
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t n = lo + j, r = t * N + n;
      const std::span<const double> row = ls.data().subspan(j * A, A);
      const std::size_t a = greedy ? argmax(row) : sample_categorical(row, action_rng[j]);
      std::copy(s.data().begin() + static_cast<std::ptrdiff_t>(j * S),
                s.data().begin() + static_cast<std::ptrdiff_t>((j + 1) * S),
                out.states.begin() + static_cast<std::ptrdiff_t>(r * S));
      std::copy(f.data().begin() + static_cast<std::ptrdiff_t>(j * I),
                f.data().begin() + static_cast<std::ptrdiff_t>((j + 1) * I),
                out.features.begin() + static_cast<std::ptrdiff_t>(r * I));
      const auto ev = e.value().data().subspan(j * K, K);
      std::copy(ev.begin(), ev.end(), out.embeddings.begin() + static_cast<std::ptrdiff_t>(r * K));
      out.actions[r] = a;
      out.log_probs[r] = row[a];
      out.values[r] = v[j];
      StepResult sr = envs[j].step(a);
      out.rewards[r] = sr.reward;
      out.episode_done[r] = sr.episode_done ? 1 : 0;
      out.meta_done[r] = sr.meta_done ? 1 : 0;
      out.meta_returns[n] += sr.reward;
      prev_action[j] = a;
      prev_reward[j] = sr.reward;
      obs[j] = std::move(sr.state);
    }
  }
}

}  // namespace

RolloutBatch rollout(Agent& agent, const GridWorldConfig& env, const std::vector<MdpDescriptor>& tasks, const Rng& rng,
                     const RolloutOptions& options) {
  if (tasks.empty()) throw std::invalid_argument("rollout: no tasks");
  const AgentSpec& spec = agent.spec();
  if (spec.state_dim != env.observation_dim()) throw ShapeError("rollout: agent state_dim does not match environment");
  if (spec.action_dim != kGridActions) throw ShapeError("rollout: agent action_dim does not match environment");
  RolloutBatch b;
  b.T = env.meta_episode_len();
  b.N = tasks.size();
  b.state_dim = spec.state_dim;
  b.feature_dim = spec.encoder_input_dim();
  b.embed_dim = spec.embedding_dim();
  const std::size_t R = b.rows();
  b.states.assign(R * b.state_dim, 0.0);
  b.features.assign(R * b.feature_dim, 0.0);
  b.embeddings.assign(R * b.embed_dim, 0.0);
  b.actions.assign(R, 0);
  b.rewards.assign(R, 0.0);
  b.values.assign((b.T + 1) * b.N, 0.0);
  b.log_probs.assign(R, 0.0);
  b.episode_done.assign(R, 0);
  b.meta_done.assign(R, 0);
  b.meta_returns.assign(b.N, 0.0);
  for (const MdpDescriptor& t : tasks) {
    if (!t.task_id) throw std::invalid_argument("rollout: tasks need ids");
    if (spec.encoder == EncoderKind::onehot && *t.task_id >= spec.n_tasks)
      throw std::out_of_range("rollout: task id exceeds the one-hot width");
    b.task_ids.push_back(*t.task_id);
  }
  const std::size_t workers = std::min(options.workers, b.N);
  if (workers <= 1) {
    rollout_range(agent, env, tasks, rng, options.greedy, 0, b.N, b);
    return b;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = b.N * w / workers, hi = b.N * (w + 1) / workers;
    pool.emplace_back([&, w, lo, hi] {
      try {
        rollout_range(agent, env, tasks, rng, options.greedy, lo, hi, b);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& th : pool) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return b;
}

std::pair<MetaEpisode, RolloutBatch> rollout_meta_episode(Agent& agent, const GridWorldConfig& env,
                                                          const MdpDescriptor& task, const Rng& rng, bool greedy) {
  RolloutBatch b = rollout(agent, env, {task}, rng, RolloutOptions{greedy, 1});
  MetaEpisode tau = b.episode(0, env);
  tau.task = task;
  return {std::move(tau), std::move(b)};
}

// ---- advantages ---------------------------------------------------------

Advantages compute_advantages(const std::vector<double>& rewards, const std::vector<double>& values,
                              const std::vector<std::uint8_t>& meta_done, std::size_t T, std::size_t N, double gamma,
                              double lambda) {
  if (rewards.size() != T * N || meta_done.size() != T * N || values.size() != (T + 1) * N)
    throw ShapeError("compute_advantages: inconsistent batch shapes");
  Advantages out;
  out.advantages.assign(T * N, 0.0);
  out.returns.assign(T * N, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    double gae = 0.0;
    for (std::size_t t = T; t-- > 0;) {
      const std::size_t r = t * N + n;
      const double cont = meta_done[r] ? 0.0 : 1.0;
      const double delta = rewards[r] + gamma * cont * values[(t + 1) * N + n] - values[r];
      gae = delta + gamma * lambda * cont * gae;
      out.advantages[r] = gae;
      out.returns[r] = gae + values[r];
    }
  }
  return out;
}

Advantages compute_advantages(const RolloutBatch& batch, double gamma, double lambda) {
  return compute_advantages(batch.rewards, batch.values, batch.meta_done, batch.T, batch.N, gamma, lambda);
}

// ---- loss ---------------------------------------------------------------

LossGraph a2c_loss(Tape& tape, Agent& agent, const RolloutBatch& batch, const std::vector<double>& advantages,
                   const std::vector<double>& returns, const TrainerConfig& config) {
  const std::size_t R = batch.rows();
  if (advantages.size() != R || returns.size() != R) throw ShapeError("a2c_loss: advantage / return length mismatch");
  Var e;
  if (GruEncoder* enc = agent.encoder()) {
    const BoundGru g = bind(tape, *enc);
    Var h = g.initial_hidden(tape, batch.N);
    std::vector<Var> steps;
    steps.reserve(batch.T);
    for (std::size_t t = 0; t < batch.T; ++t) {
      h = g.step(h, tape.constant(rows_of(batch.features, t * batch.N, batch.N, batch.feature_dim)));
      steps.push_back(g.embed(h));
    }
    e = concat_rows(steps);
  } else {
    e = tape.constant(rows_of(batch.embeddings, 0, R, batch.embed_dim));
  }
  const PolicyOutput po = agent.policy(tape, tape.constant(rows_of(batch.states, 0, R, batch.state_dim)), e);
  Var ls = log_softmax(po.logits);
  Var logp = pick(ls, batch.actions);
  Var entropy = mean(neg(row_sum(mul(exp(ls), ls))));
  Var policy_loss = neg(mean(mul(logp, tape.constant(Tensor(Shape{R}, advantages)))));
  Var value_loss = mean(square(sub(po.value, tape.constant(Tensor(Shape{R}, returns)))));
  Var loss = sub(add(policy_loss, scale(value_loss, config.value_coef)), scale(entropy, config.entropy_coef));
  LossGraph g;
  g.loss = loss;
  g.stats.loss = loss.value().item();
  g.stats.policy_loss = policy_loss.value().item();
  g.stats.value_loss = value_loss.value().item();
  g.stats.entropy = entropy.value().item();
  return g;
}

LossStats a2c_update(Agent& agent, Optimizer& optimizer, const RolloutBatch& batch, const TrainerConfig& config) {
  Advantages adv = compute_advantages(batch, config.gamma, config.gae_lambda);
  if (config.normalize_advantages && adv.advantages.size() > 1) {
    const double m = mean(adv.advantages);
    const double sd = std::sqrt(sample_variance(adv.advantages));
    for (double& a : adv.advantages) a = (a - m) / (sd + 1e-8);
  }
  optimizer.zero_grad();
  Tape tape;
  LossGraph g = a2c_loss(tape, agent, batch, adv.advantages, adv.returns, config);
  if (!std::isfinite(g.stats.loss)) throw NonFiniteError("a2c_update: non-finite loss");
  tape.backward(g.loss);
  g.stats.grad_norm = clip_grad_norm(optimizer.parameters(), config.max_grad_norm);
  if (!std::isfinite(g.stats.grad_norm)) throw NonFiniteError("a2c_update: non-finite gradient norm");
  optimizer.step();
  for (Parameter* p : optimizer.parameters()) require_finite(p->value, p->name);
  return g.stats;
}

// ---- evaluation and training -------------------------------------------

EvalResult evaluate(Agent& agent, const GridWorldConfig& env, std::size_t n_meta_episodes, const Rng& rng, bool greedy,
                    std::size_t workers) {
  const TaskDistribution dist(env);
  Rng task_rng = rng.stream("tasks");
  std::vector<MdpDescriptor> tasks;
  double oracle = 0.0;
  for (std::size_t i = 0; i < n_meta_episodes; ++i) {
    tasks.push_back(dist.sample_task(task_rng));
    oracle += oracle_meta_return(env, tasks.back().goal);
  }
  const RolloutBatch b = rollout(agent, env, tasks, rng.stream("actions"), RolloutOptions{greedy, workers});
  EvalResult r;
  r.mean = mean(b.meta_returns);
  r.stderr_ = standard_error(b.meta_returns);
  r.oracle_normalized = r.mean / (oracle / static_cast<double>(n_meta_episodes));
  return r;
}

double final_window_mean(const std::vector<double>& per_update_returns, double fraction) {
  if (per_update_returns.empty()) throw std::invalid_argument("final_window_mean: no updates");
  const auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(per_update_returns.size())));
  const std::size_t w = std::max<std::size_t>(1, std::min(n, per_update_returns.size()));
  return mean(std::span<const double>(per_update_returns).last(w));
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::string metrics_header() {
  return "env_steps,update,mean_meta_return,return_stderr,policy_loss,value_loss,entropy,grad_norm";
}

std::string format_metrics_row(const MetricsRow& r) {
  return std::to_string(r.env_steps) + "," + std::to_string(r.update) + "," + fmt(r.mean_meta_return) + "," +
         fmt(r.return_stderr) + "," + fmt(r.loss.policy_loss) + "," + fmt(r.loss.value_loss) + "," +
         fmt(r.loss.entropy) + "," + fmt(r.loss.grad_norm);
}

std::string eval_header() { return "update,env_steps,policy,mean_meta_return,return_stderr,oracle_normalized"; }

std::string format_eval_row(const EvalRow& r) {
  return std::to_string(r.update) + "," + std::to_string(r.env_steps) + "," + r.policy + "," +
         fmt(r.mean_meta_return) + "," + fmt(r.return_stderr) + "," + fmt(r.oracle_normalized);
}

TrainResult train(Agent& agent, const GridWorldConfig& env, const TrainerConfig& config, const TrainOutputs& outputs) {
  config.validate();
  env.validate();
  const TaskDistribution dist(env);
  const std::size_t T = env.meta_episode_len(), N = config.meta_episodes_per_update;
  const std::size_t updates = config.num_updates(T);
  Optimizer optimizer(config.optimizer, agent.parameters());
  const Rng root = Rng(config.seed).stream("train");
  const Rng eval_root = Rng(config.seed).stream("eval");

  std::ofstream metrics_csv, eval_csv;
  if (outputs.dir) {
    std::filesystem::create_directories(*outputs.dir);
    metrics_csv.open(*outputs.dir / "metrics.csv");
    eval_csv.open(*outputs.dir / "eval.csv");
    metrics_csv << metrics_header() << '\n';
    eval_csv << eval_header() << '\n';
  }
  auto save_checkpoint = [&](const std::string& file, std::size_t update) {
    if (!outputs.dir) return;
    Checkpoint ck;
    ck.add(agent.parameters());
    ck.add("trainer.update", Tensor::scalar(static_cast<double>(update)));
    ck.save(*outputs.dir / file);
  };

  TrainResult result;
  std::vector<double> per_update;
  std::size_t env_steps = 0;
  std::size_t eval_index = 0;
  auto run_eval = [&](std::size_t update) {
    for (bool greedy : {true, false}) {
      const EvalResult er =
          evaluate(agent, env, config.eval_meta_episodes, eval_root.stream(eval_index), greedy, config.workers);
      EvalRow row{update, env_steps, greedy ? "argmax" : "sample", er.mean, er.stderr_, er.oracle_normalized};
      if (outputs.dir) eval_csv << format_eval_row(row) << '\n';
      result.evals.push_back(std::move(row));
    }
    ++eval_index;
  };

  for (std::size_t u = 0; u < updates; ++u) {
    const Rng step_rng = root.stream(u);
    Rng task_rng = step_rng.stream("tasks");
    std::vector<MdpDescriptor> tasks;
    for (std::size_t n = 0; n < N; ++n) tasks.push_back(dist.sample_task(task_rng));
    const RolloutBatch batch = rollout(agent, env, tasks, step_rng.stream("actions"), RolloutOptions{false, config.workers});
    LossStats stats;
    try {
      stats = a2c_update(agent, optimizer, batch, config);
    } catch (const NonFiniteError& e) {
      save_checkpoint("checkpoint_error.ckpt", u);
      throw TrainingError(std::string("non-finite value at update ") + std::to_string(u) + ": " + e.what());
    }
    env_steps += batch.rows();
    MetricsRow row{env_steps, u, mean(batch.meta_returns), standard_error(batch.meta_returns), stats};
    if (outputs.dir) metrics_csv << format_metrics_row(row) << '\n';
    per_update.push_back(row.mean_meta_return);
    result.metrics.push_back(row);
    if (config.eval_every > 0 && (u + 1) % config.eval_every == 0 && u + 1 < updates) run_eval(u);
    if (config.checkpoint_every > 0 && (u + 1) % config.checkpoint_every == 0)
      save_checkpoint("checkpoint_" + std::to_string(u + 1) + ".ckpt", u + 1);
  }
  run_eval(updates - 1);
  save_checkpoint("checkpoint_final.ckpt", updates);
  result.final_window_return = final_window_mean(per_update);
  return result;
}

}  // namespace hypermeta
