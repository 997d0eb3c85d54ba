#include "hypermeta/networks.hpp"

#include <stdexcept>

namespace hypermeta {

namespace {

struct LayerSlots {
  const LayoutEntry* weight = nullptr;
  const LayoutEntry* bias = nullptr;
  const LayoutEntry* scale = nullptr;
};

std::vector<LayerSlots> layer_slots(const ParamLayout& layout, HeadKind head) {
  std::vector<LayerSlots> slots;
  for (const LayoutEntry& e : layout.entries) {
    if (e.head != head) continue;
    if (slots.size() <= e.layer) slots.resize(e.layer + 1);
    LayerSlots& s = slots[e.layer];
    switch (e.kind) {
      case ParamKind::weight: s.weight = &e; break;
      case ParamKind::bias: s.bias = &e; break;
      case ParamKind::scale: s.scale = &e; break;
    }
  }
  return slots;
}

Var as_rows(Var x) { return x.shape().size() == 1 ? reshape(x, Shape{1, x.size()}) : x; }

Var value_column(Var v) { return reshape(v, Shape{v.shape()[0]}); }

}  // namespace

Var activate(Var x, Activation a) { return a == Activation::relu ? relu(x) : tanh(x); }

BaseLayers split_layers(Var phi, const ParamLayout& layout) {
  if (phi.size() != layout.total_len)
    throw ShapeError("base network: parameter vector has " + std::to_string(phi.size()) + " values, layout needs " +
                     std::to_string(layout.total_len));
  BaseLayers layers;
  for (HeadKind head : {HeadKind::actor, HeadKind::critic}) {
    auto& stack = head == HeadKind::actor ? layers.actor : layers.critic;
    for (const LayerSlots& s : layer_slots(layout, head)) {
      LayerVars lv;
      if (s.weight) lv.weight = slice(phi, s.weight->offset, s.weight->shape);
      if (s.bias) lv.bias = slice(phi, s.bias->offset, s.bias->shape);
      stack.push_back(lv);
    }
  }
  return layers;
}

PolicyOutput run_layers(const BaseLayers& layers, Var state, Activation activation) {
  Var x0 = as_rows(state);
  auto run = [&](const std::vector<LayerVars>& stack) {
    Var x = x0;
    for (std::size_t l = 0; l < stack.size(); ++l) {
      x = linear(x, stack[l].weight, stack[l].bias);
      if (l + 1 < stack.size()) x = activate(x, activation);
    }
    return x;
  };
  PolicyOutput out;
  if (!layers.actor.empty()) out.logits = run(layers.actor);
  if (!layers.critic.empty()) out.value = value_column(run(layers.critic));
  return out;
}

PolicyOutput base_forward(Var phi, const ParamLayout& layout, Var state, Activation activation) {
  return run_layers(split_layers(phi, layout), state, activation);
}

// ---- hypernetwork -------------------------------------------------------

HypernetParams HypernetParams::make(ParamLayout target, std::size_t embed_dim, std::vector<std::size_t> hidden_widths,
                                    bool use_head_bias, const std::string& prefix) {
  if (embed_dim == 0) throw std::invalid_argument("hypernetwork: embedding dimension must be positive");
  HypernetParams h;
  h.target = std::move(target);
  h.embed_dim = embed_dim;
  std::size_t in = embed_dim;
  for (std::size_t l = 0; l < hidden_widths.size(); ++l) {
    const std::size_t w = hidden_widths[l];
    if (w == 0) throw std::invalid_argument("hypernetwork: zero-width hidden layer");
    h.hidden_w.emplace_back(prefix + ".hidden" + std::to_string(l) + ".weight", Tensor(Shape{w, in}));
    h.hidden_b.emplace_back(prefix + ".hidden" + std::to_string(l) + ".bias", Tensor(Shape{w}));
    in = w;
  }
  h.head_w = Parameter(prefix + ".head.weight", Tensor(Shape{h.target.total_len, in}));
  h.head_b = Parameter(prefix + ".head.bias", Tensor(Shape{h.target.total_len}));
  h.use_head_bias = use_head_bias;
  return h;
}

std::vector<Parameter*> HypernetParams::parameters() {
  std::vector<Parameter*> ps;
  for (std::size_t l = 0; l < hidden_w.size(); ++l) {
    ps.push_back(&hidden_w[l]);
    ps.push_back(&hidden_b[l]);
  }
  ps.push_back(&head_w);
  if (use_head_bias) ps.push_back(&head_b);
  return ps;
}

BoundHypernet bind(Tape& tape, HypernetParams& h) {
  BoundHypernet b;
  for (std::size_t l = 0; l < h.hidden_w.size(); ++l)
    b.hidden.push_back({tape.param(h.hidden_w[l]), tape.param(h.hidden_b[l])});
  b.head_w = tape.param(h.head_w);
  if (h.use_head_bias) b.head_b = tape.param(h.head_b);
  return b;
}

Var hypernet_condition(const BoundHypernet& h, Var e, Activation hidden_activation) {
  Var x = as_rows(e);
  for (const LayerVars& l : h.hidden) x = activate(linear(x, l.weight, l.bias), hidden_activation);
  return x;
}

Var hypernet_forward(Tape& tape, HypernetParams& h, Var e) {
  const std::size_t e_dim = e.shape().back();
  if (e_dim != h.embed_dim)
    throw ShapeError("hypernetwork: embedding has " + std::to_string(e_dim) + " values, expected " +
                     std::to_string(h.embed_dim));
  const BoundHypernet b = bind(tape, h);
  Var phi = linear(hypernet_condition(b, e, h.hidden_activation), b.head_w, b.head_b);
  return e.shape().size() == 1 ? reshape(phi, Shape{h.target.total_len}) : phi;
}

PolicyOutput hyper_policy_forward(const BoundHypernet& bound, const HypernetParams& h, Var e, Var state,
                                  Activation activation) {
  Var e2 = as_rows(e);
  Var s2 = as_rows(state);
  if (e2.shape()[1] != h.embed_dim) throw ShapeError("hypernetwork: embedding width mismatch");
  if (e2.shape()[0] != s2.shape()[0]) throw ShapeError("hypernetwork: embedding and state batch differ");
  Var cond = hypernet_condition(bound, e2, h.hidden_activation);
  auto run = [&](HeadKind head) {
    const auto slots = layer_slots(h.target, head);
    Var x = s2;
    for (std::size_t l = 0; l < slots.size(); ++l) {
      const LayoutEntry& w = *slots[l].weight;
      const LayoutEntry& b = *slots[l].bias;
      x = generated_linear(cond, bound.head_w, bound.head_b, w.offset, b.offset, w.shape[0], w.shape[1], x);
      if (l + 1 < slots.size()) x = activate(x, activation);
    }
    return x;
  };
  PolicyOutput out;
  if (h.target.has_head(HeadKind::actor)) out.logits = run(HeadKind::actor);
  if (h.target.has_head(HeadKind::critic)) out.value = value_column(run(HeadKind::critic));
  return out;
}

// ---- standard -----------------------------------------------------------

StandardParams StandardParams::make(std::size_t state_dim, std::size_t embed_dim, std::vector<std::size_t> hidden,
                                    std::size_t action_dim, Activation activation) {
  StandardParams p;
  p.spec.input_dim = state_dim + embed_dim;
  p.spec.hidden = std::move(hidden);
  p.spec.action_dim = action_dim;
  p.spec.activation = activation;
  p.layout = layout_for(p.spec);
  p.flat = Parameter("standard.flat", Tensor(Shape{p.layout.total_len}));
  return p;
}

PolicyOutput standard_forward(Tape& tape, StandardParams& theta, Var state, Var e) {
  Var s2 = as_rows(state);
  Var e2 = as_rows(e);
  if (s2.shape()[1] + e2.shape()[1] != theta.spec.input_dim)
    throw ShapeError("standard policy: state and embedding widths do not match the network input");
  return base_forward(tape.param(theta.flat), theta.layout, concat({s2, e2}), theta.spec.activation);
}

// ---- FiLM ---------------------------------------------------------------

FilmParams FilmParams::make(const BaseNetSpec& spec, std::size_t embed_dim, std::vector<std::size_t> hyper_hidden) {
  FilmParams f;
  f.spec = spec;
  f.weight_layout = weight_layout_for(spec);
  f.base_weights = Parameter("film.base.weights", Tensor(Shape{f.weight_layout.total_len}));
  f.modulation = HypernetParams::make(modulation_layout_for(spec), embed_dim, std::move(hyper_hidden), true, "film");
  return f;
}

std::vector<Parameter*> FilmParams::parameters() {
  std::vector<Parameter*> ps{&base_weights};
  for (Parameter* p : modulation.parameters()) ps.push_back(p);
  return ps;
}

BoundFilm bind(Tape& tape, FilmParams& film) {
  BoundFilm b;
  b.weights = split_layers(tape.param(film.base_weights), film.weight_layout);
  b.modulation = bind(tape, film.modulation);
  return b;
}

PolicyOutput film_forward(const BoundFilm& bound, const FilmParams& film, Var e, Var state) {
  Var e2 = as_rows(e);
  Var s2 = as_rows(state);
  if (e2.shape()[1] != film.modulation.embed_dim) throw ShapeError("FiLM: embedding width mismatch");
  Var cond = hypernet_condition(bound.modulation, e2, film.modulation.hidden_activation);
  Var mod = linear(cond, bound.modulation.head_w, bound.modulation.head_b);
  auto run = [&](HeadKind head) {
    const auto slots = layer_slots(film.modulation.target, head);
    const auto& weights = head == HeadKind::actor ? bound.weights.actor : bound.weights.critic;
    if (slots.size() != weights.size()) throw ShapeError("FiLM: modulation layout does not match base layers");
    Var x = s2;
    for (std::size_t l = 0; l < slots.size(); ++l) {
      const std::size_t width = slots[l].scale->size();
      Var z = linear(x, weights[l].weight, Var{});
      Var gamma = slice_cols(mod, slots[l].scale->offset, width);
      Var beta = slice_cols(mod, slots[l].bias->offset, width);
      x = add(mul(z, gamma), beta);
      if (l + 1 < slots.size()) x = activate(x, film.spec.activation);
    }
    return x;
  };
  PolicyOutput out;
  if (film.spec.actor) out.logits = run(HeadKind::actor);
  if (film.spec.critic) out.value = value_column(run(HeadKind::critic));
  return out;
}

PolicyOutput film_forward(Tape& tape, FilmParams& film, Var e, Var state) {
  return film_forward(bind(tape, film), film, e, state);
}

// ---- encoders -----------------------------------------------------------

TaskEmbedding encode_onehot(std::size_t task_id, std::size_t n_tasks) {
  if (task_id >= n_tasks)
    throw std::out_of_range("one-hot encoder: task " + std::to_string(task_id) + " out of range for " +
                            std::to_string(n_tasks) + " tasks");
  TaskEmbedding e{std::vector<double>(n_tasks, 0.0)};
  e.values[task_id] = 1.0;
  return e;
}

std::vector<double> encoder_features(const EncoderInput& in, std::size_t action_dim) {
  std::vector<double> f = in.state;
  f.resize(in.state.size() + action_dim + 1, 0.0);
  if (in.prev_action) {
    if (*in.prev_action >= action_dim) throw std::out_of_range("encoder: previous action out of range");
    f[in.state.size() + *in.prev_action] = 1.0;
  }
  f.back() = in.prev_reward;
  return f;
}

GruEncoder GruEncoder::make(std::size_t input_dim, std::size_t hidden_dim, std::size_t embed_dim,
                            const std::string& prefix) {
  if (input_dim == 0 || hidden_dim == 0 || embed_dim == 0)
    throw std::invalid_argument("recurrent encoder: dimensions must be positive");
  GruEncoder g;
  g.input_dim = input_dim;
  g.hidden_dim = hidden_dim;
  g.embed_dim = embed_dim;
  const std::string p = prefix + ".gru.";
  g.w_ir = Parameter(p + "w_ir", Tensor(Shape{hidden_dim, input_dim}));
  g.w_iz = Parameter(p + "w_iz", Tensor(Shape{hidden_dim, input_dim}));
  g.w_in = Parameter(p + "w_in", Tensor(Shape{hidden_dim, input_dim}));
  g.w_hr = Parameter(p + "w_hr", Tensor(Shape{hidden_dim, hidden_dim}));
  g.w_hz = Parameter(p + "w_hz", Tensor(Shape{hidden_dim, hidden_dim}));
  g.w_hn = Parameter(p + "w_hn", Tensor(Shape{hidden_dim, hidden_dim}));
  for (auto [param, name] : std::initializer_list<std::pair<Parameter*, const char*>>{
           {&g.b_ir, "b_ir"}, {&g.b_iz, "b_iz"}, {&g.b_in, "b_in"}, {&g.b_hr, "b_hr"}, {&g.b_hz, "b_hz"}, {&g.b_hn, "b_hn"}})
    *param = Parameter(p + name, Tensor(Shape{hidden_dim}));
  g.proj_w = Parameter(prefix + ".proj.weight", Tensor(Shape{embed_dim, hidden_dim}));
  g.proj_b = Parameter(prefix + ".proj.bias", Tensor(Shape{embed_dim}));
  return g;
}

std::vector<Parameter*> GruEncoder::parameters() {
  return {&w_ir, &w_iz, &w_in, &w_hr, &w_hz, &w_hn, &b_ir, &b_iz, &b_in, &b_hr, &b_hz, &b_hn, &proj_w, &proj_b};
}

std::vector<Parameter*> GruEncoder::recurrent_weights() { return {&w_ir, &w_iz, &w_in, &w_hr, &w_hz, &w_hn}; }

std::vector<Parameter*> GruEncoder::recurrent_biases() { return {&b_ir, &b_iz, &b_in, &b_hr, &b_hz, &b_hn}; }

BoundGru bind(Tape& tape, GruEncoder& enc) {
  BoundGru b;
  b.enc = &enc;
  b.w_ir = tape.param(enc.w_ir);
  b.w_iz = tape.param(enc.w_iz);
  b.w_in = tape.param(enc.w_in);
  b.w_hr = tape.param(enc.w_hr);
  b.w_hz = tape.param(enc.w_hz);
  b.w_hn = tape.param(enc.w_hn);
  b.b_ir = tape.param(enc.b_ir);
  b.b_iz = tape.param(enc.b_iz);
  b.b_in = tape.param(enc.b_in);
  b.b_hr = tape.param(enc.b_hr);
  b.b_hz = tape.param(enc.b_hz);
  b.b_hn = tape.param(enc.b_hn);
  b.proj_w = tape.param(enc.proj_w);
  b.proj_b = tape.param(enc.proj_b);
  return b;
}

Var BoundGru::initial_hidden(Tape& tape, std::size_t batch) const {
  return tape.constant(Tensor(Shape{batch, enc->hidden_dim}));
}

Var BoundGru::step(Var hidden, Var features) const {
  if (features.shape().back() != enc->input_dim) throw ShapeError("recurrent encoder: feature width mismatch");
  Var r = sigmoid(add(linear(features, w_ir, b_ir), linear(hidden, w_hr, b_hr)));
  Var z = sigmoid(add(linear(features, w_iz, b_iz), linear(hidden, w_hz, b_hz)));
  Var n = tanh(add(linear(features, w_in, b_in), mul(r, linear(hidden, w_hn, b_hn))));
  // (1 - z) * n + z * h
  return add(n, mul(z, sub(hidden, n)));
}

Var BoundGru::embed(Var hidden) const { return linear(hidden, proj_w, proj_b); }

TaskEmbedding gru_encode(GruEncoder& enc, std::span<const EncoderInput> prefix, std::size_t action_dim) {
  Tape tape(GradMode::disabled);
  const BoundGru b = bind(tape, enc);
  Var h = b.initial_hidden(tape, 1);
  for (const EncoderInput& in : prefix) {
    std::vector<double> f = encoder_features(in, action_dim);
    const std::size_t n = f.size();
    h = b.step(h, tape.constant(Tensor(Shape{1, n}, std::move(f))));
  }
  return TaskEmbedding{b.embed(h).value().values()};
}

}  // namespace hypermeta
