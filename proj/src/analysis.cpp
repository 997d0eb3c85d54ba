#include "hypermeta/analysis.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace hypermeta {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

// Per-unit running sums for a pooled variance.
struct UnitMoments {
  Eigen::ArrayXd sum;
  Eigen::ArrayXd sumsq;
  double n = 0.0;

  explicit UnitMoments(std::size_t units) : sum(Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(units))), sumsq(sum) {}

  void add(const RowMatrix& x) {
    sum += x.colwise().sum().transpose().array();
    sumsq += x.array().square().colwise().sum().transpose();
    n += static_cast<double>(x.rows());
  }
  [[nodiscard]] double mean_variance() const {
    const Eigen::ArrayXd var = (sumsq - sum.square() / n) / (n - 1.0);
    return var.max(0.0).mean();
  }
};

RowMatrix normal_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  RowMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

double VarianceReport::final_ratio() const {
  return layer_variance.empty() ? 0.0 : safe_ratio(layer_variance.back(), input_variance);
}

bool VarianceReport::within_pass_band(const VarianceBands& bands) const {
  return std::all_of(layer_ratio.begin(), layer_ratio.end(),
                     [&](double r) { return r >= bands.pass_lo && r <= bands.pass_hi; });
}

bool VarianceReport::outside_fail_band(const VarianceBands& bands) const {
  const double r = final_ratio();
  return !(r >= bands.fail_lo && r <= bands.fail_hi);
}

VarianceReport variance_probe(const InitScheme& scheme, const BaseNetSpec& base, const Rng& rng,
                              const VarianceProbeOptions& options) {
  if (options.samples() < 1000) throw std::invalid_argument("variance_probe: need at least 1000 samples");
  base.validate();
  const ParamLayout layout = layout_for(base);
  std::vector<const LayoutEntry*> weights, biases;
  for (std::size_t l = 0; l < base.hidden.size(); ++l) {
    const std::string prefix = "actor.l" + std::to_string(l);
    weights.push_back(&layout.find(prefix + ".weight"));
    biases.push_back(&layout.find(prefix + ".bias"));
  }
  UnitMoments input(base.input_dim);
  std::vector<UnitMoments> layers;
  for (std::size_t w : base.hidden) layers.emplace_back(w);

  const std::size_t k = options.embed_dim;
  for (std::size_t d = 0; d < options.init_draws; ++d) {
    HypernetParams h = HypernetParams::make(layout, k);
    Rng init_rng = rng.stream("init").stream(d);
    init_hypernet(h, scheme, init_rng);
    const Eigen::Map<const RowMatrix> head(h.head_w.value.data().data(), layout.total_len, k);
    const Eigen::Map<const Eigen::VectorXd> head_b(h.head_b.value.data().data(), layout.total_len);
    Rng data_rng = rng.stream("data").stream(d);
    for (std::size_t m = 0; m < options.embeddings; ++m) {
      Eigen::VectorXd e(k);
      for (std::size_t q = 0; q < k; ++q) e[q] = data_rng.normal();
      const Eigen::VectorXd phi = head * e + head_b;
      RowMatrix x = normal_matrix(options.states, base.input_dim, data_rng);
      input.add(x);
      for (std::size_t l = 0; l < weights.size(); ++l) {
        const LayoutEntry& we = *weights[l];
        const Eigen::Map<const RowMatrix> w(phi.data() + we.offset, we.shape[0], we.shape[1]);
        const Eigen::Map<const Eigen::RowVectorXd> b(phi.data() + biases[l]->offset, we.shape[0]);
        RowMatrix z = x * w.transpose();
        z.rowwise() += b;
        x = base.activation == Activation::relu ? RowMatrix(z.cwiseMax(0.0)) : RowMatrix(z.array().tanh().matrix());
        layers[l].add(x);
      }
    }
  }
  VarianceReport r;
  r.scheme = scheme.describe();
  r.samples = options.samples();
  r.input_variance = input.mean_variance();
  double prev = r.input_variance;
  for (const UnitMoments& u : layers) {
    const double v = u.mean_variance();
    r.layer_variance.push_back(v);
    r.layer_ratio.push_back(safe_ratio(v, prev));
    prev = v;
  }
  return r;
}

// ---- equivalence oracle ----------------------------------------------------

std::string to_string(EquivalenceFault f) {
  switch (f) {
    case EquivalenceFault::none: return "none";
    case EquivalenceFault::head_bias: return "head_bias";
    case EquivalenceFault::dense_embedding: return "dense_embedding";
    case EquivalenceFault::adam: return "adam";
  }
  return "none";
}

EquivalenceFault equivalence_fault_from_string(const std::string& name) {
  for (EquivalenceFault f : {EquivalenceFault::none, EquivalenceFault::head_bias, EquivalenceFault::dense_embedding,
                             EquivalenceFault::adam})
    if (to_string(f) == name) return f;
  throw std::invalid_argument("unknown equivalence fault '" + name + "'");
}

void EquivalenceConfig::validate() const {
  base.validate();
  if (n_tasks == 0 || batch == 0) throw std::invalid_argument("equivalence: n_tasks and batch must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("equivalence: learning rate must be positive");
  if (!(task_presence > 0.0 && task_presence <= 1.0))
    throw std::invalid_argument("equivalence: task_presence must be in (0, 1]");
  f.validate();
  if (optimizer == OptimizerKind::adam && fault != EquivalenceFault::adam)
    throw RefusalError(
        "equivalence oracle: adaptive optimizers couple the per-task columns through their moment state; "
        "only SGD is supported (use fault 'adam' to demonstrate the failure)");
}

double EquivalenceReport::max_diff() const {
  double m = 0.0;
  for (double d : max_abs_diff) m = std::max(m, d);
  return m;
}

namespace {

struct TaskBatch {
  Tensor states;
  std::vector<std::size_t> actions;
  Tensor advantages;
  Tensor returns;
};

TaskBatch synthetic_batch(const EquivalenceConfig& c, Rng rng) {
  TaskBatch b{Tensor(Shape{c.batch, c.base.input_dim}), {}, Tensor(Shape{c.batch}), Tensor(Shape{c.batch})};
  for (double& v : b.states.data()) v = rng.uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < c.batch; ++i) {
    b.actions.push_back(rng.below(c.base.action_dim));
    b.advantages[i] = rng.normal();
    b.returns[i] = rng.normal();
  }
  return b;
}

Var task_loss(Tape& tape, Var phi, const ParamLayout& layout, const TaskBatch& b, Activation act) {
  const PolicyOutput o = base_forward(phi, layout, tape.constant(b.states), act);
  Var logp = pick(log_softmax(o.logits), b.actions);
  Var pg = neg(mean(mul(logp, tape.constant(b.advantages))));
  Var vl = mean(square(sub(o.value, tape.constant(b.returns))));
  return add(pg, scale(vl, 0.5));
}

}  // namespace

EquivalenceReport equivalence_oracle(const EquivalenceConfig& config, const Rng& rng) {
  config.validate();
  const ParamLayout layout = layout_for(config.base);
  const std::size_t n = config.n_tasks;
  const bool bias = config.fault == EquivalenceFault::head_bias;
  const bool dense = config.fault == EquivalenceFault::dense_embedding;
  const OptimizerKind opt = config.fault == EquivalenceFault::adam ? OptimizerKind::adam : OptimizerKind::sgd;

  HypernetParams h = HypernetParams::make(layout, n, {}, bias, "oracle");
  Rng init_rng = rng.stream("init");
  weight_hyperinit(h, config.f, init_rng);
  if (bias) {
    Rng bias_rng = rng.stream("bias");
    h.head_b.value = sample_base(config.f, layout, bias_rng);
    for (double& v : h.head_b.value.data()) v *= 0.1;
  }
  std::vector<Tensor> embeddings;
  Rng embed_rng = rng.stream("embeddings");
  for (std::size_t i = 0; i < n; ++i) {
    Tensor e(Shape{n});
    if (dense)
      for (double& v : e.data()) v = embed_rng.normal() / std::sqrt(static_cast<double>(n));
    else
      e[i] = 1.0;
    embeddings.push_back(std::move(e));
  }
  auto generated = [&](std::size_t i) {
    Tape tape(GradMode::disabled);
    return hypernet_forward(tape, h, tape.constant(embeddings[i])).value();
  };

  std::vector<Parameter> theta;
  theta.reserve(n);
  for (std::size_t i = 0; i < n; ++i) theta.emplace_back("task" + std::to_string(i), generated(i));
  OptimizerConfig oc{opt, config.learning_rate};
  std::vector<Parameter*> hyper_params{&h.head_w};
  if (bias) hyper_params.push_back(&h.head_b);
  Optimizer hyper_opt(oc, hyper_params);
  std::vector<Optimizer> task_opts;
  for (Parameter& p : theta) task_opts.emplace_back(oc, std::vector<Parameter*>{&p});

  EquivalenceReport report;
  report.optimizer = to_string(opt);
  report.fault = to_string(config.fault);
  auto record_diff = [&] {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor phi = generated(i);
      for (std::size_t j = 0; j < phi.size(); ++j) worst = std::max(worst, std::abs(phi[j] - theta[i].value[j]));
    }
    report.max_abs_diff.push_back(worst);
  };
  record_diff();

  for (std::size_t k = 0; k < config.steps; ++k) {
    Rng step_rng = rng.stream("steps").stream(k);
    std::vector<std::size_t> present;
    for (std::size_t i = 0; i < n; ++i)
      if (step_rng.uniform() < config.task_presence) present.push_back(i);
    if (present.empty()) present.push_back(step_rng.below(n));
    std::vector<TaskBatch> data;
    for (std::size_t i : present) data.push_back(synthetic_batch(config, rng.stream("data").stream(i).stream(k)));

    hyper_opt.zero_grad();
    {
      Tape tape;
      Var total;
      for (std::size_t q = 0; q < present.size(); ++q) {
        Var phi = hypernet_forward(tape, h, tape.constant(embeddings[present[q]]));
        Var l = task_loss(tape, phi, layout, data[q], config.base.activation);
        total = q == 0 ? l : add(total, l);
      }
      tape.backward(total);
    }
    hyper_opt.step();

    for (std::size_t q = 0; q < present.size(); ++q) {
      const std::size_t i = present[q];
      task_opts[i].zero_grad();
      Tape tape;
      tape.backward(task_loss(tape, tape.param(theta[i]), layout, data[q], config.base.activation));
      task_opts[i].step();
    }
    record_diff();
  }
  return report;
}

// ---- init statistics -------------------------------------------------------

InitStats init_stats(const InitScheme& scheme, const Shape& shape, std::size_t n_draws, const Rng& rng) {
  if (shape.size() != 2) throw ShapeError("init_stats: expected a 2-D shape");
  const std::size_t entries = n_draws * shape_size(shape);
  if (entries < 1000) throw std::invalid_argument("init_stats: need at least 1000 sampled entries");
  InitStats s;
  s.scheme = scheme.describe();
  s.shape = shape;
  s.draws = n_draws;
  s.min_row_norm = s.min_singular = std::numeric_limits<double>::infinity();
  double sum = 0.0, sumsq = 0.0;
  for (std::size_t d = 0; d < n_draws; ++d) {
    Rng draw = rng.stream(d);
    const Tensor w = sample_matrix(scheme, shape, scheme.gain, draw);
    const Eigen::Map<const RowMatrix> m(w.data().data(), shape[0], shape[1]);
    sum += m.sum();
    sumsq += m.squaredNorm();
    const Eigen::VectorXd norms = m.rowwise().norm();
    s.min_row_norm = std::min(s.min_row_norm, norms.minCoeff());
    s.max_row_norm = std::max(s.max_row_norm, norms.maxCoeff());
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
    s.min_singular = std::min(s.min_singular, sv.minCoeff());
    s.max_singular = std::max(s.max_singular, sv.maxCoeff());
  }
  const double cnt = static_cast<double>(entries);
  s.mean = sum / cnt;
  s.variance = (sumsq - sum * sum / cnt) / (cnt - 1.0);
  s.mean_stderr = std::sqrt(s.variance / cnt);
  const double g2 = scheme.gain * scheme.gain;
  switch (scheme.kind) {
    case SchemeKind::kaiming:
    case SchemeKind::normc: s.expected_variance = g2 / static_cast<double>(shape[1]); break;
    case SchemeKind::orthogonal: s.expected_variance = g2 / static_cast<double>(std::max(shape[0], shape[1])); break;
    default: throw std::invalid_argument("init_stats: " + to_string(scheme.kind) + " is not a matrix scheme");
  }
  return s;
}

}  // namespace hypermeta
