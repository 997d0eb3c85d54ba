#include "hypermeta/model.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace hypermeta {

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::standard: return "standard";
    case Architecture::hypernetwork: return "hypernetwork";
    case Architecture::film: return "film";
  }
  return "?";
}

Architecture architecture_from_string(const std::string& name) {
  for (Architecture a : {Architecture::standard, Architecture::hypernetwork, Architecture::film})
    if (to_string(a) == name) return a;
  throw std::invalid_argument("unknown architecture '" + name + "'");
}

std::string to_string(EncoderKind k) { return k == EncoderKind::onehot ? "onehot" : "recurrent"; }

EncoderKind encoder_kind_from_string(const std::string& name) {
  if (name == "onehot") return EncoderKind::onehot;
  if (name == "recurrent") return EncoderKind::recurrent;
  throw std::invalid_argument("unknown encoder '" + name + "'");
}

void AgentSpec::validate() const {
  if (state_dim == 0 || action_dim == 0) throw std::invalid_argument("agent: state and action dims must be positive");
  if (encoder == EncoderKind::onehot && n_tasks == 0) throw std::invalid_argument("agent: n_tasks must be positive");
  if (encoder == EncoderKind::recurrent && (embed_dim == 0 || gru_hidden == 0))
    throw std::invalid_argument("agent: encoder sizes must be positive");
  base_spec().validate();
  for (std::size_t w : hyper_hidden)
    if (w == 0) throw std::invalid_argument("agent: zero-width hypernetwork layer");
  if (architecture == Architecture::standard && !hyper_hidden.empty())
    throw std::invalid_argument("agent: hyper_hidden applies only to hypernetwork and film architectures");
}

BaseNetSpec AgentSpec::base_spec() const {
  BaseNetSpec b;
  b.input_dim = state_dim;
  b.hidden = hidden;
  b.action_dim = action_dim;
  b.activation = activation;
  return b;
}

// ---- groups -------------------------------------------------------------

namespace {

const InitScheme& lookup(const InitAssignment& a, const std::string& group) {
  auto it = a.find(group);
  if (it == a.end()) throw std::invalid_argument("init: parameter group '" + group + "' has no scheme");
  return it->second;
}

bool film_uses_bias_hyperinit(const InitAssignment& a) {
  auto it = a.find("film.modulation");
  return it != a.end() && it->second.kind == SchemeKind::film_bias_hyperinit;
}

}  // namespace

std::vector<std::string> required_groups(const AgentSpec& spec, const InitAssignment& assignment) {
  std::vector<std::string> g;
  if (spec.encoder == EncoderKind::recurrent) {
    g.emplace_back("encoder.gru");
    g.emplace_back("encoder.proj");
  }
  switch (spec.architecture) {
    case Architecture::standard:
      g.emplace_back("standard.actor");
      g.emplace_back("standard.critic");
      break;
    case Architecture::hypernetwork:
      if (!spec.hyper_hidden.empty()) g.emplace_back("hyper.hidden");
      g.emplace_back("hyper.head.actor");
      g.emplace_back("hyper.head.critic");
      break;
    case Architecture::film:
      if (!spec.hyper_hidden.empty()) g.emplace_back("film.hidden");
      if (!film_uses_bias_hyperinit(assignment)) g.emplace_back("film.base");
      g.emplace_back("film.modulation");
      break;
  }
  return g;
}

InitAssignment default_assignment(const AgentSpec& spec, const InitScheme& method) {
  InitAssignment a;
  if (spec.encoder == EncoderKind::recurrent) {
    a["encoder.gru"] = InitScheme::orthogonal(1.0);
    a["encoder.proj"] = InitScheme::kaiming(InitScheme::kReluGain, Distribution::uniform);
  }
  switch (spec.architecture) {
    case Architecture::standard:
      a["standard.actor"] = InitScheme::normc(InitScheme::kReluGain, 0.01);
      a["standard.critic"] = InitScheme::normc(InitScheme::kReluGain, 1.0);
      break;
    case Architecture::hypernetwork:
      if (!spec.hyper_hidden.empty()) a["hyper.hidden"] = InitScheme::kaiming(InitScheme::kReluGain, Distribution::uniform);
      a["hyper.head.actor"] = method;
      a["hyper.head.critic"] = method;
      break;
    case Architecture::film:
      if (!spec.hyper_hidden.empty()) a["film.hidden"] = InitScheme::kaiming(InitScheme::kReluGain, Distribution::uniform);
      a["film.modulation"] = method;
      if (method.kind != SchemeKind::film_bias_hyperinit) a["film.base"] = InitScheme::default_base();
      break;
  }
  return a;
}

// ---- manifest -----------------------------------------------------------

nlohmann::ordered_json scheme_to_json(const InitScheme& s) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(s.kind);
  j["gain"] = s.gain;
  j["head_gain"] = s.head_gain ? nlohmann::ordered_json(*s.head_gain) : nlohmann::ordered_json(nullptr);
  j["distribution"] = to_string(s.distribution);
  j["base"] = s.base ? scheme_to_json(*s.base) : nlohmann::ordered_json(nullptr);
  return j;
}

InitScheme scheme_from_json(const nlohmann::ordered_json& j) {
  InitScheme s;
  s.kind = scheme_kind_from_string(j.at("kind").get<std::string>());
  s.gain = j.at("gain").get<double>();
  if (!j.at("head_gain").is_null()) s.head_gain = j.at("head_gain").get<double>();
  s.distribution = distribution_from_string(j.at("distribution").get<std::string>());
  if (!j.at("base").is_null()) s.base = std::make_shared<const InitScheme>(scheme_from_json(j.at("base")));
  s.validate();
  return s;
}

nlohmann::ordered_json InitManifest::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  auto& arr = j["groups"] = nlohmann::ordered_json::array();
  for (const ManifestGroup& g : groups) {
    nlohmann::ordered_json e;
    e["group"] = g.group;
    e["scheme"] = scheme_to_json(g.scheme);
    e["describe"] = g.scheme.describe();
    e["stream"] = g.stream;
    e["note"] = g.note;
    arr.push_back(std::move(e));
  }
  return j;
}

InitManifest InitManifest::from_json(const nlohmann::ordered_json& j) {
  InitManifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& e : j.at("groups"))
    m.groups.push_back(ManifestGroup{e.at("group").get<std::string>(), scheme_from_json(e.at("scheme")),
                                     e.at("stream").get<std::string>(), e.at("note").get<std::string>()});
  return m;
}

// ---- agent --------------------------------------------------------------

Agent::Agent(AgentSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const std::size_t k = spec_.embedding_dim();
  switch (spec_.architecture) {
    case Architecture::standard:
      standard_ = StandardParams::make(spec_.state_dim, k, spec_.hidden, spec_.action_dim, spec_.activation);
      break;
    case Architecture::hypernetwork:
      hyper_ = HypernetParams::make(layout_for(spec_.base_spec()), k, spec_.hyper_hidden, spec_.hyper_head_bias, "hyper");
      break;
    case Architecture::film: film_ = FilmParams::make(spec_.base_spec(), k, spec_.hyper_hidden); break;
  }
  if (spec_.encoder == EncoderKind::recurrent)
    encoder_ = GruEncoder::make(spec_.encoder_input_dim(), spec_.gru_hidden, spec_.embed_dim, "encoder");
}

std::vector<Parameter*> Agent::policy_parameters() {
  if (standard_) return standard_->parameters();
  if (hyper_) return hyper_->parameters();
  return film_->parameters();
}

std::vector<Parameter*> Agent::encoder_parameters() {
  return encoder_ ? encoder_->parameters() : std::vector<Parameter*>{};
}

std::vector<Parameter*> Agent::parameters() {
  std::vector<Parameter*> ps = encoder_parameters();
  for (Parameter* p : policy_parameters()) ps.push_back(p);
  return ps;
}

std::size_t Agent::parameter_count() {
  std::size_t n = 0;
  for (Parameter* p : parameters()) n += p->value.size();
  return n;
}

PolicyOutput Agent::policy(Tape& tape, Var state, Var e) {
  if (standard_) return standard_forward(tape, *standard_, state, e);
  if (hyper_) return hyper_policy_forward(bind(tape, *hyper_), *hyper_, e, state, spec_.activation);
  return film_forward(tape, *film_, e, state);
}

// ---- initialisation -----------------------------------------------------

namespace {

std::pair<std::size_t, std::size_t> head_range(const ParamLayout& layout, HeadKind head) {
  std::size_t begin = layout.total_len, end = 0;
  for (const LayoutEntry& e : layout.entries)
    if (e.head == head) {
      begin = std::min(begin, e.offset);
      end = std::max(end, e.end());
    }
  return {begin, std::max(begin, end)};
}

const char* kHfiNote = "weight rows ~ N(0, gain^2/(cond_dim*fan_in*embedding_variance)); bias rows and head bias zero";

std::string init_hyper_head(HypernetParams& h, HeadKind head, const InitScheme& s, Rng& rng) {
  HypernetParams tmp = h;
  std::string note;
  switch (s.kind) {
    case SchemeKind::kaiming:
    case SchemeKind::normc:
    case SchemeKind::orthogonal:
      default_head_init(tmp, s, rng);
      note = "head rows drawn per head block with fan-in = hypernetwork input width";
      break;
    case SchemeKind::hfi:
      hfi_init(tmp, s.gain, rng);
      note = kHfiNote;
      break;
    case SchemeKind::weight_hyperinit:
      weight_hyperinit(tmp, *s.base, rng);
      note = "head weight columns are independent base samples; head bias zero";
      break;
    case SchemeKind::bias_hyperinit:
      bias_hyperinit(tmp, *s.base, rng);
      note = "head weight zero; head bias is one shared base sample";
      break;
    case SchemeKind::film_bias_hyperinit:
      throw std::invalid_argument("film_bias_hyperinit applies to the film architecture only");
  }
  const auto [begin, end] = head_range(h.target, head);
  const std::size_t k = h.cond_dim();
  std::copy(tmp.head_w.value.data().begin() + static_cast<std::ptrdiff_t>(begin * k),
            tmp.head_w.value.data().begin() + static_cast<std::ptrdiff_t>(end * k),
            h.head_w.value.data().begin() + static_cast<std::ptrdiff_t>(begin * k));
  std::copy(tmp.head_b.value.data().begin() + static_cast<std::ptrdiff_t>(begin),
            tmp.head_b.value.data().begin() + static_cast<std::ptrdiff_t>(end),
            h.head_b.value.data().begin() + static_cast<std::ptrdiff_t>(begin));
  if (!h.use_head_bias) {
    for (std::size_t i = begin; i < end; ++i)
      if (h.head_b.value[i] != 0.0)
        throw std::invalid_argument(to_string(s.kind) + " needs a hypernetwork head bias, which is disabled");
  }
  return note;
}

void init_standard_head(StandardParams& p, HeadKind head, const InitScheme& s, Rng& rng) {
  if (s.needs_base() || s.kind == SchemeKind::hfi)
    throw std::invalid_argument(to_string(s.kind) + " is not applicable to the standard architecture");
  const Tensor phi = sample_base(s, p.layout, rng);
  const auto [begin, end] = head_range(p.layout, head);
  for (std::size_t i = begin; i < end; ++i) p.flat.value[i] = phi[i];
}

}  // namespace

InitManifest init_model(Agent& agent, const InitAssignment& assignment, std::uint64_t seed) {
  const AgentSpec& spec = agent.spec();
  const std::vector<std::string> groups = required_groups(spec, assignment);
  for (const auto& [name, scheme] : assignment)
    if (std::find(groups.begin(), groups.end(), name) == groups.end())
      throw std::invalid_argument("init: unknown parameter group '" + name + "' for this architecture");
  const Rng root = Rng(seed).stream("init");
  InitManifest manifest;
  manifest.seed = seed;
  for (const std::string& group : groups) {
    const InitScheme& s = lookup(assignment, group);
    s.validate();
    Rng rng = root.stream(group);
    std::string note;
    if (group == "encoder.gru") {
      GruEncoder& enc = *agent.encoder();
      for (Parameter* w : enc.recurrent_weights()) w->value = sample_matrix(s, w->value.shape(), s.gain, rng);
      for (Parameter* b : enc.recurrent_biases()) b->value.fill(0.0);
      note = "biases zero";
    } else if (group == "encoder.proj") {
      GruEncoder& enc = *agent.encoder();
      enc.proj_w.value = sample_matrix(s, enc.proj_w.value.shape(), s.gain, rng);
      enc.proj_b.value.fill(0.0);
      note = "bias zero";
    } else if (group == "standard.actor" || group == "standard.critic") {
      init_standard_head(*agent.standard(), group == "standard.actor" ? HeadKind::actor : HeadKind::critic, s, rng);
      note = "weights by scheme, biases zero";
    } else if (group == "hyper.hidden" || group == "film.hidden") {
      if (s.kind != SchemeKind::kaiming && s.kind != SchemeKind::normc && s.kind != SchemeKind::orthogonal)
        throw std::invalid_argument(group + ": expected a matrix scheme");
      HypernetParams& h = group == "hyper.hidden" ? *agent.hyper() : agent.film()->modulation;
      for (std::size_t l = 0; l < h.hidden_w.size(); ++l) {
        h.hidden_w[l].value = sample_matrix(s, h.hidden_w[l].value.shape(), s.gain, rng);
        h.hidden_b[l].value.fill(0.0);
      }
      note = "biases zero";
    } else if (group == "hyper.head.actor" || group == "hyper.head.critic") {
      note = init_hyper_head(*agent.hyper(), group == "hyper.head.actor" ? HeadKind::actor : HeadKind::critic, s, rng);
    } else if (group == "film.base") {
      if (s.needs_base() || s.kind == SchemeKind::hfi) throw std::invalid_argument("film.base: expected a matrix scheme");
      FilmParams& film = *agent.film();
      const ParamLayout full = layout_for(film.spec);
      const Tensor phi = sample_base(s, full, rng);
      for (const LayoutEntry& e : film.weight_layout.entries) {
        const LayoutEntry& src = full.find(e.name);
        for (std::size_t i = 0; i < e.size(); ++i) film.base_weights.value[e.offset + i] = phi[src.offset + i];
      }
      note = "base weights by scheme";
    } else if (group == "film.modulation") {
      FilmParams& film = *agent.film();
      if (s.kind == SchemeKind::film_bias_hyperinit) {
        film_bias_hyperinit(film, *s.base, rng);
        note = "base weights and modulation biases from one base sample; scales one";
      } else if (s.kind == SchemeKind::kaiming || s.kind == SchemeKind::normc || s.kind == SchemeKind::orthogonal) {
        default_head_init(film.modulation, s, rng);
        note = "modulation head by scheme, head bias zero";
      } else {
        throw std::invalid_argument("film.modulation: " + to_string(s.kind) + " is not applicable to FiLM");
      }
    }
    manifest.groups.push_back(ManifestGroup{group, s, "init/" + group, note});
  }
  return manifest;
}

// ---- closed-form counts -------------------------------------------------

namespace {

struct StackCount {
  std::size_t weights = 0;
  std::size_t outs = 0;
};

StackCount stack_count(std::size_t input, const std::vector<std::size_t>& hidden, std::size_t out) {
  StackCount c;
  std::size_t in = input;
  for (std::size_t w : hidden) {
    c.weights += in * w;
    c.outs += w;
    in = w;
  }
  c.weights += in * out;
  c.outs += out;
  return c;
}

StackCount both_heads(const BaseNetSpec& s) {
  StackCount c;
  if (s.actor) {
    const StackCount a = stack_count(s.input_dim, s.hidden, s.action_dim);
    c.weights += a.weights;
    c.outs += a.outs;
  }
  if (s.critic) {
    const StackCount v = stack_count(s.input_dim, s.hidden, 1);
    c.weights += v.weights;
    c.outs += v.outs;
  }
  return c;
}

std::size_t hyper_count(std::size_t k, const std::vector<std::size_t>& hidden, std::size_t targets, bool bias) {
  std::size_t n = 0, in = k;
  for (std::size_t w : hidden) {
    n += in * w + w;
    in = w;
  }
  return n + targets * in + (bias ? targets : 0);
}

}  // namespace

std::size_t base_param_count(const BaseNetSpec& spec) {
  const StackCount c = both_heads(spec);
  return c.weights + c.outs;
}

std::size_t expected_parameter_count(const AgentSpec& spec) {
  const std::size_t k = spec.embedding_dim();
  std::size_t n = 0;
  if (spec.encoder == EncoderKind::recurrent) {
    const std::size_t h = spec.gru_hidden, i = spec.encoder_input_dim();
    n += 3 * (h * i + h * h + 2 * h) + spec.embed_dim * h + spec.embed_dim;
  }
  const BaseNetSpec base = spec.base_spec();
  switch (spec.architecture) {
    case Architecture::standard: {
      BaseNetSpec s = base;
      s.input_dim += k;
      n += base_param_count(s);
      break;
    }
    case Architecture::hypernetwork:
      n += hyper_count(k, spec.hyper_hidden, base_param_count(base), spec.hyper_head_bias);
      break;
    case Architecture::film: {
      const StackCount c = both_heads(base);
      n += c.weights + hyper_count(k, spec.hyper_hidden, 2 * c.outs, true);
      break;
    }
  }
  return n;
}

}  // namespace hypermeta
