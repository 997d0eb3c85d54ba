#include <cmath>

#include <gtest/gtest.h>

#include "hypermeta/gradcheck.hpp"
#include "hypermeta/networks.hpp"
#include "hypermeta/rng.hpp"

using namespace hypermeta;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = scale * rng.uniform(-1.0, 1.0);
  return t;
}

BaseNetSpec small_spec() {
  BaseNetSpec s;
  s.input_dim = 3;
  s.hidden = {4, 5, 3};
  s.action_dim = 5;
  return s;
}

// Conventional evaluation of one stack: h = act(W h + b) per layer.
std::vector<double> reference_mlp(const std::vector<Tensor>& parts, std::size_t first, std::size_t layers,
                                  std::vector<double> x, Activation act) {
  for (std::size_t l = 0; l < layers; ++l) {
    const Tensor& w = parts[first + 2 * l];
    const Tensor& b = parts[first + 2 * l + 1];
    std::vector<double> y(w.dim(0));
    for (std::size_t o = 0; o < w.dim(0); ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < w.dim(1); ++i) acc += w.at(o, i) * x[i];
      y[o] = acc + b[o];
      if (l + 1 < layers) y[o] = act == Activation::relu ? std::max(0.0, y[o]) : std::tanh(y[o]);
    }
    x = std::move(y);
  }
  return x;
}

}  // namespace

TEST(Layout, HandCountedActorOnly) {
  BaseNetSpec s;
  s.input_dim = 2;
  s.hidden = {3};
  s.action_dim = 2;
  s.critic = false;
  const ParamLayout l = layout_for(s);
  ASSERT_EQ(l.entries.size(), 4u);
  EXPECT_EQ(l.entries[0].shape, (Shape{3, 2}));
  EXPECT_EQ(l.entries[1].shape, (Shape{3}));
  EXPECT_EQ(l.entries[2].shape, (Shape{2, 3}));
  EXPECT_EQ(l.entries[3].shape, (Shape{2}));
  EXPECT_EQ(l.total_len, 6u + 3u + 6u + 2u);
  EXPECT_EQ(l.entries[2].fan_in, 3u);
  EXPECT_EQ(l.entries[0].kind, ParamKind::weight);
  EXPECT_EQ(l.entries[1].kind, ParamKind::bias);
}

TEST(Layout, ExtraSmallHandCount) {
  BaseNetSpec s;
  s.input_dim = 5;
  s.hidden = named_widths("XS");
  s.action_dim = 4;
  s.critic = false;
  const std::size_t expected = 5 * 64 + 64 + 64 * 64 + 64 + 64 * 32 + 32 + 32 * 4 + 4;
  EXPECT_EQ(expected, 6756u);
  EXPECT_EQ(layout_for(s).total_len, expected);
  const ParamLayout a = layout_for(s), b = layout_for(s);
  ASSERT_EQ(a.entries.size(), b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    EXPECT_EQ(a.entries[i].name, b.entries[i].name);
    EXPECT_EQ(a.entries[i].offset, b.entries[i].offset);
  }
}

TEST(Layout, Errors) {
  BaseNetSpec s = small_spec();
  s.hidden = {};
  EXPECT_THROW(layout_for(s), std::invalid_argument);
  s.hidden = {4, 0, 2};
  EXPECT_THROW(layout_for(s), std::invalid_argument);
}

TEST(Layout, NamedSizes) {
  EXPECT_EQ(named_widths("XS"), (std::vector<std::size_t>{64, 64, 32}));
  EXPECT_EQ(named_widths("S"), (std::vector<std::size_t>{128, 64, 64}));
  EXPECT_EQ(named_widths("M"), (std::vector<std::size_t>{128, 128, 64}));
  EXPECT_EQ(named_widths("L"), (std::vector<std::size_t>{256, 128, 128}));
  EXPECT_EQ(named_widths("XL"), (std::vector<std::size_t>{256, 256, 128}));
  EXPECT_EQ(named_widths("XXL"), (std::vector<std::size_t>{1024, 512, 512}));
  EXPECT_THROW(named_widths("XXXL"), std::invalid_argument);
}

TEST(Layout, OffsetsContiguousAndRoundTrip) {
  const ParamLayout l = layout_for(small_spec());
  std::size_t at = 0;
  for (const LayoutEntry& e : l.entries) {
    EXPECT_EQ(e.offset, at);
    at = e.end();
  }
  EXPECT_EQ(at, l.total_len);
  Rng rng(3);
  const Tensor phi = random_tensor({l.total_len}, rng);
  const std::vector<Tensor> parts = unflatten(phi, l);
  EXPECT_EQ(flatten(parts, l), phi);
  for (std::size_t i = 0; i < parts.size(); ++i) EXPECT_EQ(parts[i].shape(), l.entries[i].shape);
  EXPECT_THROW(unflatten(Tensor(Shape{l.total_len + 1}), l), ShapeError);
}

TEST(BaseForward, ZeroParametersGiveUniformPolicy) {
  const ParamLayout l = layout_for(small_spec());
  Tape tape;
  const PolicyOutput out = base_forward(tape.constant(Tensor(Shape{l.total_len})), l,
                                        tape.constant(Tensor::vector({0.3, -0.2, 1.0})), Activation::relu);
  for (double v : out.logits.value().data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(out.value.value().item(), 0.0);
}

TEST(BaseForward, MatchesConventionalMlp) {
  const BaseNetSpec s = small_spec();
  const ParamLayout l = layout_for(s);
  Rng rng(5);
  const Tensor phi = random_tensor({l.total_len}, rng);
  const std::vector<Tensor> parts = unflatten(phi, l);
  const std::vector<double> x{0.4, -0.9, 0.25};
  Tape tape;
  const PolicyOutput out = base_forward(tape.constant(phi), l, tape.constant(Tensor::vector(x)), Activation::relu);
  const std::vector<double> logits = reference_mlp(parts, 0, 4, x, Activation::relu);
  const std::vector<double> value = reference_mlp(parts, 8, 4, x, Activation::relu);
  for (std::size_t a = 0; a < logits.size(); ++a) EXPECT_NEAR(out.logits.value()[a], logits[a], 1e-12);
  EXPECT_NEAR(out.value.value().item(), value[0], 1e-12);
}

TEST(BaseForward, Gradient) {
  const BaseNetSpec s = small_spec();
  const ParamLayout l = layout_for(s);
  Rng rng(6);
  const Tensor state = random_tensor({2, 3}, rng);
  const GradCheckResult r = grad_check(
      [&](Tape& t, const std::vector<Var>& v) {
        const PolicyOutput o = base_forward(v[0], l, t.constant(state), Activation::tanh);
        return add(sum(mul(o.logits, o.logits)), sum(o.value));
      },
      {random_tensor({l.total_len}, rng)});
  EXPECT_LT(r.max_relative_error, 1e-5);
}

TEST(BaseForward, LengthMismatch) {
  const ParamLayout l = layout_for(small_spec());
  Tape tape;
  EXPECT_THROW(base_forward(tape.constant(Tensor(Shape{l.total_len - 1})), l,
                            tape.constant(Tensor::vector({0, 0, 0})), Activation::relu),
               ShapeError);
}

TEST(Hypernet, ZeroWeightReturnsBias) {
  HypernetParams h = HypernetParams::make(layout_for(small_spec()), 4);
  Rng rng(7);
  h.head_b.value = random_tensor({h.target.total_len}, rng);
  for (const std::vector<double>& e : {std::vector<double>{1, 0, 0, 0}, {0.3, -2, 5, 1e3}}) {
    Tape tape;
    EXPECT_EQ(hypernet_forward(tape, h, tape.constant(Tensor::vector(e))).value(), h.head_b.value);
  }
}

TEST(Hypernet, OneHotSelectsColumn) {
  HypernetParams h = HypernetParams::make(layout_for(small_spec()), 4, {}, false);
  Rng rng(8);
  h.head_w.value = random_tensor({h.target.total_len, 4}, rng);
  Tape tape;
  const Tensor phi = hypernet_forward(tape, h, tape.constant(Tensor::vector(encode_onehot(2, 4).values))).value();
  for (std::size_t j = 0; j < h.target.total_len; ++j) EXPECT_EQ(phi[j], h.head_w.value.at(j, 2));
}

TEST(Hypernet, ZeroEmbeddingReturnsBias) {
  HypernetParams h = HypernetParams::make(layout_for(small_spec()), 3);
  Rng rng(9);
  h.head_w.value = random_tensor({h.target.total_len, 3}, rng);
  h.head_b.value = random_tensor({h.target.total_len}, rng);
  Tape tape;
  EXPECT_EQ(hypernet_forward(tape, h, tape.constant(Tensor(Shape{3}))).value(), h.head_b.value);
  EXPECT_THROW(hypernet_forward(tape, h, tape.constant(Tensor(Shape{4}))), ShapeError);
}

TEST(Hypernet, OneHotBiasFreeEqualsStandaloneMlp) {
  const BaseNetSpec s = small_spec();
  HypernetParams h = HypernetParams::make(layout_for(s), 4, {}, false);
  Rng rng(10);
  h.head_w.value = random_tensor({h.target.total_len, 4}, rng);
  const Tensor state = random_tensor({1, 3}, rng);
  for (std::size_t i = 0; i < 4; ++i) {
    Tensor column(Shape{h.target.total_len});
    for (std::size_t j = 0; j < column.size(); ++j) column[j] = h.head_w.value.at(j, i);
    Tape tape;
    Var e = tape.constant(Tensor::vector(encode_onehot(i, 4).values));
    const PolicyOutput gen = base_forward(hypernet_forward(tape, h, e), h.target, tape.constant(state), Activation::relu);
    const PolicyOutput ref = base_forward(tape.constant(column), h.target, tape.constant(state), Activation::relu);
    EXPECT_EQ(gen.logits.value(), ref.logits.value());
    EXPECT_EQ(gen.value.value(), ref.value.value());
  }
}

TEST(Hypernet, FusedMatchesComposed) {
  const BaseNetSpec s = small_spec();
  for (const std::vector<std::size_t>& hidden : {std::vector<std::size_t>{}, {6}}) {
    HypernetParams h = HypernetParams::make(layout_for(s), 3, hidden);
    Rng rng(11);
    for (Parameter* p : h.parameters()) p->value = random_tensor(p->value.shape(), rng, 0.5);
    const Tensor e = random_tensor({4, 3}, rng), state = random_tensor({4, 3}, rng);
    Tape tape;
    const PolicyOutput fused =
        hyper_policy_forward(bind(tape, h), h, tape.constant(e), tape.constant(state), Activation::relu);
    const Tensor phi = hypernet_forward(tape, h, tape.constant(e)).value();
    ASSERT_EQ(phi.shape(), (Shape{4, h.target.total_len}));
    for (std::size_t r = 0; r < 4; ++r) {
      Var row = slice(tape.constant(phi), r * h.target.total_len, Shape{h.target.total_len});
      Var sr = slice(tape.constant(state), r * 3, Shape{3});
      const PolicyOutput ref = base_forward(row, h.target, sr, Activation::relu);
      for (std::size_t a = 0; a < 5; ++a)
        EXPECT_NEAR(fused.logits.value().at(r, a), ref.logits.value()[a], 1e-12);
      EXPECT_NEAR(fused.value.value()[r], ref.value.value()[0], 1e-12);
    }
  }
}

TEST(Hypernet, FusedGradient) {
  const BaseNetSpec s = small_spec();
  HypernetParams h = HypernetParams::make(layout_for(s), 3, {5});
  Rng rng(12);
  for (Parameter* p : h.parameters()) p->value = random_tensor(p->value.shape(), rng, 0.5);
  const Tensor state = random_tensor({3, 3}, rng), e = random_tensor({3, 3}, rng);
  const GradCheckResult r = grad_check_params(
      [&](Tape& t) {
        const PolicyOutput o = hyper_policy_forward(bind(t, h), h, t.constant(e), t.constant(state), Activation::tanh);
        return add(sum(square(o.logits)), sum(o.value));
      },
      h.parameters());
  EXPECT_LT(r.max_relative_error, 1e-5);
}

TEST(Hypernet, HeadBiasGradientEqualsPhiGradient) {
  const BaseNetSpec s = small_spec();
  HypernetParams h = HypernetParams::make(layout_for(s), 3);
  Rng rng(13);
  for (Parameter* p : h.parameters()) p->value = random_tensor(p->value.shape(), rng, 0.5);
  const Tensor e = random_tensor({3}, rng), state = random_tensor({2, 3}, rng);
  h.head_b.zero_grad();
  Tape tape;
  Var phi = hypernet_forward(tape, h, tape.constant(e));
  const PolicyOutput o = base_forward(phi, h.target, tape.constant(state), Activation::relu);
  Var loss = add(sum(square(o.logits)), sum(o.value));
  tape.backward(loss);
  EXPECT_EQ(tape.grad(phi), h.head_b.grad);
}

TEST(Standard, ZeroWeightsUniformPolicy) {
  StandardParams p = StandardParams::make(3, 4, {8, 8, 4}, 5, Activation::relu);
  Tape tape;
  const PolicyOutput o = standard_forward(tape, p, tape.constant(Tensor::vector({1, 2, 3})),
                                          tape.constant(Tensor::vector({0, 1, 0, 0})));
  for (double v : o.logits.value().data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(o.value.value().item(), 0.0);
}

TEST(Standard, ConstantEmbeddingIsPlainMlp) {
  StandardParams p = StandardParams::make(3, 2, {4, 4, 3}, 5, Activation::relu);
  Rng rng(14);
  p.flat.value = random_tensor(p.flat.value.shape(), rng);
  const std::vector<Tensor> parts = unflatten(p.flat.value, p.layout);
  const std::vector<double> e{0.5, -0.25};
  for (int trial = 0; trial < 3; ++trial) {
    const std::vector<double> s{rng.uniform(), rng.uniform(), rng.uniform()};
    Tape tape;
    const PolicyOutput o = standard_forward(tape, p, tape.constant(Tensor::vector(s)), tape.constant(Tensor::vector(e)));
    std::vector<double> x = s;
    x.insert(x.end(), e.begin(), e.end());
    const std::vector<double> ref = reference_mlp(parts, 0, 4, x, Activation::relu);
    for (std::size_t a = 0; a < ref.size(); ++a) EXPECT_NEAR(o.logits.value()[a], ref[a], 1e-12);
  }
  Tape tape;
  EXPECT_THROW(standard_forward(tape, p, tape.constant(Tensor::vector({1, 2})), tape.constant(Tensor::vector(e))),
               ShapeError);
}

TEST(Standard, Gradient) {
  StandardParams p = StandardParams::make(3, 2, {4, 4, 3}, 5, Activation::tanh);
  Rng rng(15);
  p.flat.value = random_tensor(p.flat.value.shape(), rng);
  const Tensor s = random_tensor({3, 3}, rng), e = random_tensor({3, 2}, rng);
  const GradCheckResult r = grad_check_params(
      [&](Tape& t) {
        const PolicyOutput o = standard_forward(t, p, t.constant(s), t.constant(e));
        return add(sum(square(o.logits)), sum(o.value));
      },
      p.parameters());
  EXPECT_LT(r.max_relative_error, 1e-5);
}

namespace {

void set_identity_modulation(FilmParams& f) {
  f.modulation.head_w.value.fill(0.0);
  f.modulation.head_b.value.fill(0.0);
  for (const LayoutEntry& e : f.modulation.target.entries)
    if (e.kind == ParamKind::scale)
      for (std::size_t i = e.offset; i < e.end(); ++i) f.modulation.head_b.value[i] = 1.0;
}

}  // namespace

TEST(Film, IdentityModulationEqualsBaseMlp) {
  const BaseNetSpec s = small_spec();
  FilmParams f = FilmParams::make(s, 3);
  Rng rng(16);
  f.base_weights.value = random_tensor(f.base_weights.value.shape(), rng);
  set_identity_modulation(f);
  // Plain MLP with the same weights and zero biases.
  const ParamLayout full = layout_for(s);
  Tensor phi(Shape{full.total_len});
  for (const LayoutEntry& e : f.weight_layout.entries) {
    const LayoutEntry& dst = full.find(e.name);
    for (std::size_t i = 0; i < e.size(); ++i) phi[dst.offset + i] = f.base_weights.value[e.offset + i];
  }
  const Tensor state = random_tensor({4, 3}, rng), e = random_tensor({4, 3}, rng);
  Tape tape;
  const PolicyOutput a = film_forward(tape, f, tape.constant(e), tape.constant(state));
  const PolicyOutput b = base_forward(tape.constant(phi), full, tape.constant(state), Activation::relu);
  EXPECT_EQ(a.logits.value(), b.logits.value());
  EXPECT_EQ(a.value.value(), b.value.value());
}

TEST(Film, ZeroScalesLeaveOnlyBiases) {
  const BaseNetSpec s = small_spec();
  FilmParams f = FilmParams::make(s, 2);
  Rng rng(17);
  f.base_weights.value = random_tensor(f.base_weights.value.shape(), rng);
  f.modulation.head_w.value.fill(0.0);
  f.modulation.head_b.value = random_tensor(f.modulation.head_b.value.shape(), rng);
  for (const LayoutEntry& e : f.modulation.target.entries)
    if (e.kind == ParamKind::scale)
      for (std::size_t i = e.offset; i < e.end(); ++i) f.modulation.head_b.value[i] = 0.0;
  const LayoutEntry& out_bias = f.modulation.target.find("actor.l3.bias");
  for (int trial = 0; trial < 3; ++trial) {
    Tape tape;
    const PolicyOutput o =
        film_forward(tape, f, tape.constant(random_tensor({2}, rng)), tape.constant(random_tensor({3}, rng)));
    for (std::size_t a = 0; a < 5; ++a) EXPECT_EQ(o.logits.value()[a], f.modulation.head_b.value[out_bias.offset + a]);
  }
}

TEST(Film, Gradient) {
  const BaseNetSpec s = small_spec();
  FilmParams f = FilmParams::make(s, 3);
  Rng rng(18);
  for (Parameter* p : f.parameters()) p->value = random_tensor(p->value.shape(), rng, 0.7);
  const Tensor state = random_tensor({2, 3}, rng), e = random_tensor({2, 3}, rng);
  const GradCheckResult r = grad_check_params(
      [&](Tape& t) {
        const PolicyOutput o = film_forward(t, f, t.constant(e), t.constant(state));
        return add(sum(square(o.logits)), sum(o.value));
      },
      f.parameters());
  EXPECT_LT(r.max_relative_error, 1e-5);
  Tape tape;
  EXPECT_THROW(film_forward(tape, f, tape.constant(Tensor(Shape{2})), tape.constant(state)), ShapeError);
}

TEST(OneHot, Examples) {
  EXPECT_EQ(encode_onehot(2, 4).values, (std::vector<double>{0, 0, 1, 0}));
  EXPECT_EQ(encode_onehot(0, 1).values, (std::vector<double>{1}));
  for (std::size_t n = 1; n < 30; ++n)
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = encode_onehot(i, n).values;
      double total = 0.0;
      for (double x : v) total += x;
      EXPECT_EQ(total, 1.0);
    }
  EXPECT_THROW(encode_onehot(4, 4), std::out_of_range);
}

namespace {

std::vector<EncoderInput> random_prefix(Rng& rng, std::size_t len) {
  std::vector<EncoderInput> p;
  for (std::size_t t = 0; t < len; ++t) {
    EncoderInput in;
    in.state = {rng.uniform(), rng.uniform(), rng.uniform()};
    if (t > 0) in.prev_action = rng.below(5);
    in.prev_reward = rng.uniform(-1, 1);
    p.push_back(in);
  }
  return p;
}

GruEncoder random_gru(Rng& rng) {
  GruEncoder g = GruEncoder::make(3 + 5 + 1, 6, 4);
  for (Parameter* p : g.parameters()) p->value = random_tensor(p->value.shape(), rng, 0.6);
  return g;
}

}  // namespace

TEST(Gru, ZeroWeightsGiveConstantEmbedding) {
  Rng rng(19);
  GruEncoder g = random_gru(rng);
  for (Parameter* p : g.recurrent_weights()) p->value.fill(0.0);
  for (Parameter* p : g.recurrent_biases()) p->value.fill(0.0);
  const auto prefix = random_prefix(rng, 8);
  const TaskEmbedding first = gru_encode(g, std::span(prefix).first(0), 5);
  EXPECT_EQ(first.values, g.proj_b.value.values());
  for (std::size_t t = 1; t <= prefix.size(); ++t)
    EXPECT_EQ(gru_encode(g, std::span(prefix).first(t), 5).values, first.values);
}

TEST(Gru, DeterministicAndHistoryDependent) {
  Rng rng(20);
  GruEncoder g = random_gru(rng);
  auto prefix = random_prefix(rng, 6);
  const TaskEmbedding a = gru_encode(g, prefix, 5);
  EXPECT_EQ(a.values, gru_encode(g, prefix, 5).values);
  prefix[1].prev_reward += 1.0;
  EXPECT_NE(a.values, gru_encode(g, prefix, 5).values);
}

TEST(Gru, GradientThroughTenSteps) {
  Rng rng(21);
  GruEncoder g = random_gru(rng);
  const auto prefix = random_prefix(rng, 10);
  const GradCheckResult r = grad_check_params(
      [&](Tape& t) {
        const BoundGru b = bind(t, g);
        Var h = b.initial_hidden(t, 1);
        for (const EncoderInput& in : prefix) {
          std::vector<double> f = encoder_features(in, 5);
          h = b.step(h, t.constant(Tensor(Shape{1, f.size()}, f)));
        }
        return sum(square(b.embed(h)));
      },
      g.parameters());
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(Gru, FeatureLayout) {
  EncoderInput in{{0.5, 0.25, 0.0}, 3, -0.1};
  EXPECT_EQ(encoder_features(in, 5), (std::vector<double>{0.5, 0.25, 0.0, 0, 0, 0, 1, 0, -0.1}));
  in.prev_action.reset();
  EXPECT_EQ(encoder_features(in, 5), (std::vector<double>{0.5, 0.25, 0.0, 0, 0, 0, 0, 0, -0.1}));
}
