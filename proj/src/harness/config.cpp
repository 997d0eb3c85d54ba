#include "hypermeta/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace hypermeta::harness {

std::vector<std::string> method_names() {
  return {"kaiming", "normc", "orthogonal", "hfi", "weight_hyperinit", "bias_hyperinit", "film_bias_hyperinit"};
}

InitScheme method_scheme(const std::string& method, const InitScheme& base) {
  if (method == "kaiming") return InitScheme::kaiming();
  if (method == "normc") return InitScheme::normc(1.0);
  if (method == "orthogonal") return InitScheme::orthogonal(1.0);
  if (method == "hfi") return InitScheme::hfi();
  if (method == "weight_hyperinit") return InitScheme::weight_hyperinit(base);
  if (method == "bias_hyperinit") return InitScheme::bias_hyperinit(base);
  if (method == "film_bias_hyperinit") return InitScheme::film_bias_hyperinit(base);
  throw ConfigError("unknown init method '" + method + "'");
}

InitAssignment InitConfig::assignment(const AgentSpec& spec) const {
  InitAssignment a = default_assignment(spec, method_scheme(method, base));
  for (const auto& [group, scheme] : groups) {
    if (!a.count(group)) throw ConfigError("init.groups: '" + group + "' is not a parameter group of this architecture");
    a[group] = scheme;
  }
  return a;
}

// ---- RunConfig ------------------------------------------------------------

AgentSpec RunConfig::agent_spec() const {
  AgentSpec s;
  s.architecture = architecture;
  s.encoder = encoder;
  s.state_dim = env.observation_dim();
  s.action_dim = kGridActions;
  s.n_tasks = TaskDistribution(env).size();
  s.embed_dim = embed_dim;
  s.gru_hidden = gru_hidden;
  s.hidden = named_widths(size);
  s.activation = activation;
  s.hyper_hidden = hyper_hidden;
  s.hyper_head_bias = hyper_head_bias;
  return s;
}

double RunConfig::effective_learning_rate() const {
  if (learning_rate) return *learning_rate;
  return architecture == Architecture::standard ? 1e-3 : 1e-4;
}

TrainerConfig RunConfig::trainer_for(std::uint64_t seed) const {
  TrainerConfig t = trainer;
  t.optimizer.learning_rate = effective_learning_rate();
  t.seed = seed;
  return t;
}

void RunConfig::validate() const {
  auto wrap = [](const char* where, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string(where) + ": " + e.what());
    }
  };
  if (name.empty() || name.find('/') != std::string::npos) throw ConfigError("name: must be a non-empty directory name");
  wrap("size", [&] { named_widths(size); });
  wrap("env", [&] { env.validate(); });
  wrap("trainer", [&] { trainer.validate(); });
  if (!(effective_learning_rate() > 0.0)) throw ConfigError("trainer.learning_rate: must be positive");
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  const AgentSpec spec = agent_spec();
  wrap("agent", [&] { spec.validate(); });
  wrap("init", [&] {
    const InitScheme m = method_scheme(init.method, init.base);
    m.validate();
    if (architecture == Architecture::hypernetwork && m.kind == SchemeKind::film_bias_hyperinit)
      throw ConfigError("film_bias_hyperinit requires architecture film");
    if (architecture == Architecture::film &&
        (m.kind == SchemeKind::bias_hyperinit || m.kind == SchemeKind::weight_hyperinit || m.kind == SchemeKind::hfi))
      throw ConfigError(init.method + " is not defined for the film architecture");
    if (m.kind == SchemeKind::hfi && !hyper_hidden.empty()) throw ConfigError("hfi requires a linear hypernetwork");
    init.assignment(spec);
  });
  for (const std::string& s : analysis.schemes) wrap("analysis.schemes", [&] { method_scheme(s, init.base); });
  if (analysis.probe_seeds == 0) throw ConfigError("analysis.probe_seeds: must be positive");
  if (analysis.stats_shape.size() != 2) throw ConfigError("analysis.stats_shape: expected [rows, cols]");
  wrap("equivalence", [&] {
    EquivalenceConfig c = equivalence.oracle;
    c.optimizer = OptimizerKind::sgd;
    c.validate();
  });
  for (const std::string& s : sweep.sizes) wrap("sweep.sizes", [&] { named_widths(s); });
  for (const std::string& s : sweep.inits) wrap("sweep.inits", [&] { method_scheme(s, init.base); });
}

// ---- parsing ------------------------------------------------------------

namespace {

std::string where(const YAML::Node& n, const std::string& key) {
  const YAML::Mark m = n.Mark();
  if (m.is_null()) return key;
  return key + " (line " + std::to_string(m.line + 1) + ")";
}

template <typename T>
T as(const YAML::Node& n, const std::string& key) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(where(n, key) + ": invalid value '" + (n.IsScalar() ? n.Scalar() : std::string("<non-scalar>")) + "'");
  }
}

// Map node with key-usage bookkeeping so unknown keys can be reported.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(where(node_, path_.empty() ? "<root>" : path_) + ": expected a mapping");
  }

  [[nodiscard]] std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  YAML::Node take(const std::string& k) {
    seen_.insert(k);
    if (!node_ || !node_.IsMap()) return YAML::Node();
    return node_[k];
  }

  template <typename T>
  void get(const std::string& k, T& out) {
    YAML::Node n = take(k);
    if (n && !n.IsNull()) out = as<T>(n, key(k));
  }

  void get_size(const std::string& k, std::size_t& out) {
    YAML::Node n = take(k);
    if (!n || n.IsNull()) return;
    const long long v = as<long long>(n, key(k));
    if (v < 0) throw ConfigError(where(n, key(k)) + ": must be non-negative");
    out = static_cast<std::size_t>(v);
  }

  void get_sizes(const std::string& k, std::vector<std::size_t>& out) {
    YAML::Node n = take(k);
    if (!n || n.IsNull()) return;
    if (!n.IsSequence()) throw ConfigError(where(n, key(k)) + ": expected a list");
    out.clear();
    for (const YAML::Node& item : n) {
      const long long v = as<long long>(item, key(k));
      if (v < 0) throw ConfigError(where(item, key(k)) + ": must be non-negative");
      out.push_back(static_cast<std::size_t>(v));
    }
  }

  void get_strings(const std::string& k, std::vector<std::string>& out) {
    YAML::Node n = take(k);
    if (!n || n.IsNull()) return;
    if (!n.IsSequence()) throw ConfigError(where(n, key(k)) + ": expected a list");
    out.clear();
    for (const YAML::Node& item : n) out.push_back(as<std::string>(item, key(k)));
  }

  template <typename Enum, typename Fn>
  void get_enum(const std::string& k, Enum& out, Fn&& from_string) {
    YAML::Node n = take(k);
    if (!n || n.IsNull()) return;
    const std::string s = as<std::string>(n, key(k));
    try {
      out = from_string(s);
    } catch (const std::exception& e) {
      throw ConfigError(where(n, key(k)) + ": " + e.what());
    }
  }

  void get_band(const std::string& k, double& lo, double& hi) {
    YAML::Node n = take(k);
    if (!n || n.IsNull()) return;
    if (!n.IsSequence() || n.size() != 2) throw ConfigError(where(n, key(k)) + ": expected [low, high]");
    lo = as<double>(n[0], key(k));
    hi = as<double>(n[1], key(k));
    if (!(lo < hi)) throw ConfigError(where(n, key(k)) + ": low must be below high");
  }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const std::string k = kv.first.as<std::string>();
      if (!seen_.count(k)) throw ConfigError(where(kv.first, key(k)) + ": unknown key");
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

InitScheme parse_scheme(const YAML::Node& node, const std::string& path) {
  if (!node.IsMap()) throw ConfigError(where(node, path) + ": expected a scheme mapping");
  Section s(node, path);
  InitScheme out;
  s.get_enum("kind", out.kind, scheme_kind_from_string);
  s.get("gain", out.gain);
  double head = -1.0;
  s.get("head_gain", head);
  if (head >= 0.0) out.head_gain = head;
  s.get_enum("distribution", out.distribution, distribution_from_string);
  if (YAML::Node b = s.take("base"); b && !b.IsNull()) out.base = std::make_shared<const InitScheme>(parse_scheme(b, s.key("base")));
  s.finish();
  try {
    out.validate();
  } catch (const std::exception& e) {
    throw ConfigError(where(node, path) + ": " + e.what());
  }
  return out;
}

void parse_init(const YAML::Node& node, InitConfig& init) {
  if (!node || node.IsNull()) return;
  if (node.IsScalar()) {
    init.method = node.Scalar();
    return;
  }
  Section s(node, "init");
  s.get("method", init.method);
  if (YAML::Node b = s.take("base"); b && !b.IsNull()) init.base = parse_scheme(b, "init.base");
  if (YAML::Node g = s.take("groups"); g && !g.IsNull()) {
    if (!g.IsMap()) throw ConfigError(where(g, "init.groups") + ": expected a mapping");
    for (const auto& kv : g) {
      const std::string group = kv.first.as<std::string>();
      init.groups[group] = parse_scheme(kv.second, "init.groups." + group);
    }
  }
  s.finish();
}

}  // namespace

RunConfig parse_config(const std::string& yaml_text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
  RunConfig c;
  try {
    Section top(root, "");
    top.get("name", c.name);
    top.get_enum("architecture", c.architecture, architecture_from_string);
    top.get_enum("encoder", c.encoder, encoder_kind_from_string);
    top.get("size", c.size);
    parse_init(top.take("init"), c.init);

    Section agent(top.take("agent"), "agent");
    agent.get_size("embed_dim", c.embed_dim);
    agent.get_size("gru_hidden", c.gru_hidden);
    agent.get_enum("activation", c.activation, activation_from_string);
    agent.get_sizes("hyper_hidden", c.hyper_hidden);
    agent.get("hyper_head_bias", c.hyper_head_bias);
    agent.finish();

    Section env(top.take("env"), "env");
    env.get_size("width", c.env.width);
    env.get_size("height", c.env.height);
    env.get_size("episode_len", c.env.episode_len);
    env.get_size("episodes_per_meta", c.env.episodes_per_meta);
    env.get("step_reward", c.env.step_reward);
    env.get("goal_reward", c.env.goal_reward);
    env.get_enum("observation", c.env.observation, observation_kind_from_string);
    env.finish();

    Section tr(top.take("trainer"), "trainer");
    TrainerConfig& t = c.trainer;
    tr.get("gamma", t.gamma);
    tr.get("gae_lambda", t.gae_lambda);
    tr.get_enum("optimizer", t.optimizer.kind, optimizer_kind_from_string);
    if (YAML::Node lr = tr.take("learning_rate"); lr && !lr.IsNull()) c.learning_rate = as<double>(lr, "trainer.learning_rate");
    tr.get("entropy_coef", t.entropy_coef);
    tr.get("value_coef", t.value_coef);
    tr.get("max_grad_norm", t.max_grad_norm);
    tr.get("normalize_advantages", t.normalize_advantages);
    tr.get_size("workers", t.workers);
    tr.get_size("meta_episodes_per_update", t.meta_episodes_per_update);
    tr.get_size("total_env_steps", t.total_env_steps);
    tr.get_size("eval_every", t.eval_every);
    tr.get_size("eval_meta_episodes", t.eval_meta_episodes);
    tr.get_size("checkpoint_every", t.checkpoint_every);
    tr.finish();

    if (YAML::Node seeds = top.take("seeds"); seeds && !seeds.IsNull()) {
      if (!seeds.IsSequence()) throw ConfigError(where(seeds, "seeds") + ": expected a list");
      c.seeds.clear();
      for (const YAML::Node& s : seeds) c.seeds.push_back(as<std::uint64_t>(s, "seeds"));
    }
    if (YAML::Node out = top.take("output_dir"); out && !out.IsNull()) c.output_dir = as<std::string>(out, "output_dir");

    Section an(top.take("analysis"), "analysis");
    an.get_strings("schemes", c.analysis.schemes);
    an.get_size("probe_seeds", c.analysis.probe_seeds);
    an.get_size("embed_dim", c.analysis.probe.embed_dim);
    an.get_size("init_draws", c.analysis.probe.init_draws);
    an.get_size("embeddings", c.analysis.probe.embeddings);
    an.get_size("states", c.analysis.probe.states);
    an.get_band("pass_band", c.analysis.bands.pass_lo, c.analysis.bands.pass_hi);
    an.get_band("fail_band", c.analysis.bands.fail_lo, c.analysis.bands.fail_hi);
    an.get_sizes("stats_shape", c.analysis.stats_shape);
    an.get_size("stats_draws", c.analysis.stats_draws);
    an.finish();

    Section eq(top.take("equivalence"), "equivalence");
    EquivalenceConfig& o = c.equivalence.oracle;
    eq.get_sizes("hidden", o.base.hidden);
    eq.get_size("n_tasks", o.n_tasks);
    eq.get_size("steps", o.steps);
    eq.get_size("batch", o.batch);
    eq.get("learning_rate", o.learning_rate);
    eq.get_enum("optimizer", o.optimizer, optimizer_kind_from_string);
    eq.get("task_presence", o.task_presence);
    std::vector<std::string> faults;
    eq.get_strings("faults", faults);
    if (!faults.empty()) {
      c.equivalence.faults.clear();
      for (const std::string& f : faults) {
        try {
          c.equivalence.faults.push_back(equivalence_fault_from_string(f));
        } catch (const std::exception& e) {
          throw ConfigError(std::string("equivalence.faults: ") + e.what());
        }
      }
    }
    eq.finish();

    Section sw(top.take("sweep"), "sweep");
    std::vector<std::string> archs;
    sw.get_strings("architectures", archs);
    for (const std::string& a : archs) {
      try {
        c.sweep.architectures.push_back(architecture_from_string(a));
      } catch (const std::exception& e) {
        throw ConfigError(std::string("sweep.architectures: ") + e.what());
      }
    }
    sw.get_strings("sizes", c.sweep.sizes);
    sw.get_strings("inits", c.sweep.inits);
    sw.finish();

    top.finish();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

// ---- serialisation --------------------------------------------------------

namespace {

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, r.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

void emit_scheme(YAML::Emitter& out, const InitScheme& s) {
  out << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << to_string(s.kind);
  out << YAML::Key << "gain" << YAML::Value << num(s.gain);
  if (s.head_gain) out << YAML::Key << "head_gain" << YAML::Value << num(*s.head_gain);
  out << YAML::Key << "distribution" << YAML::Value << to_string(s.distribution);
  if (s.base) {
    out << YAML::Key << "base" << YAML::Value;
    emit_scheme(out, *s.base);
  }
  out << YAML::EndMap;
}

template <typename Seq>
void emit_flow(YAML::Emitter& out, const Seq& items) {
  out << YAML::Flow << YAML::BeginSeq;
  for (const auto& i : items) out << i;
  out << YAML::EndSeq;
}

}  // namespace

std::string serialize_config(const RunConfig& c) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << c.name;
  out << YAML::Key << "architecture" << YAML::Value << to_string(c.architecture);
  out << YAML::Key << "encoder" << YAML::Value << to_string(c.encoder);
  out << YAML::Key << "size" << YAML::Value << c.size;

  out << YAML::Key << "init" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "method" << YAML::Value << c.init.method;
  out << YAML::Key << "base" << YAML::Value;
  emit_scheme(out, c.init.base);
  if (!c.init.groups.empty()) {
    out << YAML::Key << "groups" << YAML::Value << YAML::BeginMap;
    for (const auto& [g, s] : c.init.groups) {
      out << YAML::Key << g << YAML::Value;
      emit_scheme(out, s);
    }
    out << YAML::EndMap;
  }
  out << YAML::EndMap;

  out << YAML::Key << "agent" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "embed_dim" << YAML::Value << c.embed_dim;
  out << YAML::Key << "gru_hidden" << YAML::Value << c.gru_hidden;
  out << YAML::Key << "activation" << YAML::Value << to_string(c.activation);
  out << YAML::Key << "hyper_hidden" << YAML::Value;
  emit_flow(out, c.hyper_hidden);
  out << YAML::Key << "hyper_head_bias" << YAML::Value << c.hyper_head_bias;
  out << YAML::EndMap;

  out << YAML::Key << "env" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "width" << YAML::Value << c.env.width;
  out << YAML::Key << "height" << YAML::Value << c.env.height;
  out << YAML::Key << "episode_len" << YAML::Value << c.env.episode_len;
  out << YAML::Key << "episodes_per_meta" << YAML::Value << c.env.episodes_per_meta;
  out << YAML::Key << "step_reward" << YAML::Value << num(c.env.step_reward);
  out << YAML::Key << "goal_reward" << YAML::Value << num(c.env.goal_reward);
  out << YAML::Key << "observation" << YAML::Value << to_string(c.env.observation);
  out << YAML::EndMap;

  const TrainerConfig& t = c.trainer;
  out << YAML::Key << "trainer" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "gamma" << YAML::Value << num(t.gamma);
  out << YAML::Key << "gae_lambda" << YAML::Value << num(t.gae_lambda);
  out << YAML::Key << "optimizer" << YAML::Value << to_string(t.optimizer.kind);
  if (c.learning_rate) out << YAML::Key << "learning_rate" << YAML::Value << num(*c.learning_rate);
  out << YAML::Key << "entropy_coef" << YAML::Value << num(t.entropy_coef);
  out << YAML::Key << "value_coef" << YAML::Value << num(t.value_coef);
  out << YAML::Key << "max_grad_norm" << YAML::Value << num(t.max_grad_norm);
  out << YAML::Key << "normalize_advantages" << YAML::Value << t.normalize_advantages;
  out << YAML::Key << "workers" << YAML::Value << t.workers;
  out << YAML::Key << "meta_episodes_per_update" << YAML::Value << t.meta_episodes_per_update;
  out << YAML::Key << "total_env_steps" << YAML::Value << t.total_env_steps;
  out << YAML::Key << "eval_every" << YAML::Value << t.eval_every;
  out << YAML::Key << "eval_meta_episodes" << YAML::Value << t.eval_meta_episodes;
  out << YAML::Key << "checkpoint_every" << YAML::Value << t.checkpoint_every;
  out << YAML::EndMap;

  out << YAML::Key << "seeds" << YAML::Value;
  emit_flow(out, c.seeds);
  if (c.output_dir) out << YAML::Key << "output_dir" << YAML::Value << c.output_dir->string();

  const AnalysisConfig& a = c.analysis;
  out << YAML::Key << "analysis" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "schemes" << YAML::Value;
  emit_flow(out, a.schemes);
  out << YAML::Key << "probe_seeds" << YAML::Value << a.probe_seeds;
  out << YAML::Key << "embed_dim" << YAML::Value << a.probe.embed_dim;
  out << YAML::Key << "init_draws" << YAML::Value << a.probe.init_draws;
  out << YAML::Key << "embeddings" << YAML::Value << a.probe.embeddings;
  out << YAML::Key << "states" << YAML::Value << a.probe.states;
  out << YAML::Key << "pass_band" << YAML::Value;
  emit_flow(out, std::vector<std::string>{num(a.bands.pass_lo), num(a.bands.pass_hi)});
  out << YAML::Key << "fail_band" << YAML::Value;
  emit_flow(out, std::vector<std::string>{num(a.bands.fail_lo), num(a.bands.fail_hi)});
  out << YAML::Key << "stats_shape" << YAML::Value;
  emit_flow(out, a.stats_shape);
  out << YAML::Key << "stats_draws" << YAML::Value << a.stats_draws;
  out << YAML::EndMap;

  const EquivalenceConfig& o = c.equivalence.oracle;
  out << YAML::Key << "equivalence" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "hidden" << YAML::Value;
  emit_flow(out, o.base.hidden);
  out << YAML::Key << "n_tasks" << YAML::Value << o.n_tasks;
  out << YAML::Key << "steps" << YAML::Value << o.steps;
  out << YAML::Key << "batch" << YAML::Value << o.batch;
  out << YAML::Key << "learning_rate" << YAML::Value << num(o.learning_rate);
  out << YAML::Key << "optimizer" << YAML::Value << to_string(o.optimizer);
  out << YAML::Key << "task_presence" << YAML::Value << num(o.task_presence);
  std::vector<std::string> faults;
  for (EquivalenceFault f : c.equivalence.faults) faults.push_back(to_string(f));
  out << YAML::Key << "faults" << YAML::Value;
  emit_flow(out, faults);
  out << YAML::EndMap;

  out << YAML::Key << "sweep" << YAML::Value << YAML::BeginMap;
  std::vector<std::string> archs;
  for (Architecture arch : c.sweep.architectures) archs.push_back(to_string(arch));
  out << YAML::Key << "architectures" << YAML::Value;
  emit_flow(out, archs);
  out << YAML::Key << "sizes" << YAML::Value;
  emit_flow(out, c.sweep.sizes);
  out << YAML::Key << "inits" << YAML::Value;
  emit_flow(out, c.sweep.inits);
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace hypermeta::harness
