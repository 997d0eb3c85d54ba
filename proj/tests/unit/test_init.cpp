#include <cmath>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "hypermeta/init.hpp"
#include "hypermeta/model.hpp"

using namespace hypermeta;

namespace {

double variance(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data()) m += v;
  m /= static_cast<double>(t.size());
  double s = 0.0;
  for (double v : t.data()) s += (v - m) * (v - m);
  return s / static_cast<double>(t.size() - 1);
}

double row_norm(const Tensor& w, std::size_t r) {
  double s = 0.0;
  for (std::size_t c = 0; c < w.dim(1); ++c) s += w.at(r, c) * w.at(r, c);
  return std::sqrt(s);
}

Eigen::MatrixXd as_eigen(const Tensor& w) {
  Eigen::MatrixXd m(w.dim(0), w.dim(1));
  for (std::size_t r = 0; r < w.dim(0); ++r)
    for (std::size_t c = 0; c < w.dim(1); ++c) m(r, c) = w.at(r, c);
  return m;
}

BaseNetSpec base_spec() {
  BaseNetSpec s;
  s.input_dim = 3;
  s.hidden = {6, 5, 4};
  s.action_dim = 5;
  return s;
}

Tensor column(const Tensor& w, std::size_t i) {
  Tensor c(Shape{w.dim(0)});
  for (std::size_t j = 0; j < w.dim(0); ++j) c[j] = w.at(j, i);
  return c;
}

}  // namespace

TEST(Kaiming, NormalVariance) {
  Rng rng(1);
  const Tensor w = kaiming_init({1000, 100}, std::sqrt(2.0), Distribution::normal, rng);
  EXPECT_NEAR(variance(w), 0.02, 0.02 * 0.05);
}

TEST(Kaiming, ZeroGainAndUniformSupport) {
  Rng rng(2);
  const Tensor zero = kaiming_init({7, 9}, 0.0, Distribution::normal, rng);
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);
  const double bound = std::sqrt(2.0) * std::sqrt(3.0 / 50.0);
  const Tensor u = kaiming_init({400, 50}, std::sqrt(2.0), Distribution::uniform, rng);
  for (double v : u.data()) {
    EXPECT_LE(v, bound);
    EXPECT_GE(v, -bound);
  }
  EXPECT_NEAR(variance(u), 2.0 / 50.0, 2.0 / 50.0 * 0.05);
  EXPECT_THROW(kaiming_init({3}, 1.0, Distribution::normal, rng), ShapeError);
}

TEST(Normc, RowNormsEqualGain) {
  Rng rng(3);
  const Tensor w = normc_init({20, 7}, 1.7, rng);
  for (std::size_t r = 0; r < 20; ++r) EXPECT_NEAR(row_norm(w, r), 1.7, 1e-12);
}

TEST(Normc, EntryVariance) {
  Rng rng(4);
  const Tensor w = normc_init({4, 1000}, 1.0, rng);
  EXPECT_NEAR(variance(w), 1e-3, 1e-4);
}

TEST(Normc, Deterministic) {
  Rng a(5), b(5);
  EXPECT_EQ(normc_init({5, 6}, 1.0, a), normc_init({5, 6}, 1.0, b));
  EXPECT_THROW(normc_init({2, 2, 2}, 1.0, a), ShapeError);
}

TEST(Orthogonal, SquareIsScaledOrthonormal) {
  Rng rng(6);
  const Eigen::MatrixXd w = as_eigen(orthogonal_init({12, 12}, 1.5, rng));
  EXPECT_LT((w.transpose() * w - 2.25 * Eigen::MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Orthogonal, WideAndTall) {
  Rng rng(7);
  const Eigen::MatrixXd wide = as_eigen(orthogonal_init({2, 5}, 2.0, rng));
  EXPECT_LT((wide * wide.transpose() - 4.0 * Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-10);
  const Eigen::MatrixXd tall = as_eigen(orthogonal_init({9, 3}, 1.0, rng));
  EXPECT_LT((tall.transpose() * tall - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-10);
  Rng a(8), b(8);
  EXPECT_EQ(orthogonal_init({4, 6}, 1.0, a), orthogonal_init({4, 6}, 1.0, b));
}

TEST(Scheme, Validation) {
  EXPECT_NO_THROW(InitScheme::bias_hyperinit(InitScheme::default_base()).validate());
  InitScheme missing;
  missing.kind = SchemeKind::weight_hyperinit;
  EXPECT_THROW(missing.validate(), std::invalid_argument);
  InitScheme extra = InitScheme::kaiming();
  extra.base = std::make_shared<const InitScheme>(InitScheme::normc());
  EXPECT_THROW(extra.validate(), std::invalid_argument);
  EXPECT_THROW(InitScheme::bias_hyperinit(InitScheme::hfi()).validate(), std::invalid_argument);
  EXPECT_THROW(InitScheme::normc(-1.0).validate(), std::invalid_argument);
  EXPECT_THROW(scheme_kind_from_string("xavier"), std::invalid_argument);
  for (SchemeKind k : {SchemeKind::kaiming, SchemeKind::normc, SchemeKind::orthogonal, SchemeKind::hfi,
                       SchemeKind::weight_hyperinit, SchemeKind::bias_hyperinit, SchemeKind::film_bias_hyperinit})
    EXPECT_EQ(scheme_kind_from_string(to_string(k)), k);
}

TEST(Scheme, HeadGainAppliesToOutputLayers) {
  const InitScheme s = InitScheme::normc(1.0, 0.01);
  const ParamLayout l = layout_for(base_spec());
  Rng rng(9);
  const std::vector<Tensor> parts = unflatten(sample_base(s, l, rng), l);
  for (std::size_t i = 0; i < l.entries.size(); ++i) {
    const LayoutEntry& e = l.entries[i];
    if (e.kind == ParamKind::bias) {
      for (double v : parts[i].data()) EXPECT_EQ(v, 0.0);
      continue;
    }
    const double expected = e.output_layer ? 0.01 : 1.0;
    for (std::size_t r = 0; r < e.shape[0]; ++r) EXPECT_NEAR(row_norm(parts[i], r), expected, 1e-12) << e.name;
  }
}

TEST(Hfi, VarianceFormulaAndHeadBias) {
  EXPECT_DOUBLE_EQ(hfi_weight_variance(std::sqrt(2.0), 1, 1, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(hfi_weight_variance(std::sqrt(2.0), 10, 64, 1.0), 2.0 / 640.0);
  HypernetParams h = HypernetParams::make(layout_for(base_spec()), 10);
  h.head_b.value.fill(3.0);
  Rng rng(10);
  hfi_init(h, std::sqrt(2.0), rng);
  for (double v : h.head_b.value.data()) EXPECT_EQ(v, 0.0);
  for (const LayoutEntry& e : h.target.entries)
    for (std::size_t j = e.offset; j < e.end(); ++j)
      for (std::size_t q = 0; q < 10; ++q)
        if (e.kind == ParamKind::bias) EXPECT_EQ(h.head_w.value.at(j, q), 0.0);
}

TEST(Hfi, WeightVarianceMatchesFanIn) {
  BaseNetSpec s;
  s.input_dim = 40;
  s.hidden = {200, 100, 50};
  s.action_dim = 5;
  HypernetParams h = HypernetParams::make(layout_for(s), 10);
  Rng rng(11);
  hfi_init(h, std::sqrt(2.0), rng);
  const LayoutEntry& e = h.target.find("actor.l1.weight");
  double ss = 0.0;
  for (std::size_t j = e.offset; j < e.end(); ++j)
    for (std::size_t q = 0; q < 10; ++q) ss += h.head_w.value.at(j, q) * h.head_w.value.at(j, q);
  const double var = ss / static_cast<double>(e.size() * 10);
  EXPECT_NEAR(var, 2.0 / (10.0 * 200.0), 0.05 * 2.0 / 2000.0);
}

TEST(Hfi, RejectsNonLinearHypernetwork) {
  HypernetParams h = HypernetParams::make(layout_for(base_spec()), 4, {8});
  Rng rng(12);
  EXPECT_THROW(hfi_init(h, std::sqrt(2.0), rng), std::invalid_argument);
}

TEST(WeightHyperInit, OneHotReturnsRecordedSample) {
  HypernetParams h = HypernetParams::make(layout_for(base_spec()), 5);
  h.head_b.value.fill(1.0);
  Rng rng(13);
  const std::vector<Tensor> samples = weight_hyperinit(h, InitScheme::default_base(), rng);
  ASSERT_EQ(samples.size(), 5u);
  for (double v : h.head_b.value.data()) EXPECT_EQ(v, 0.0);
  for (std::size_t i = 0; i < 5; ++i) {
    Tape tape;
    Var e = tape.constant(Tensor::vector(encode_onehot(i, 5).values));
    EXPECT_EQ(hypernet_forward(tape, h, e).value(), samples[i]);
  }
  EXPECT_NE(samples[0], samples[1]);
}

TEST(WeightHyperInit, ColumnsSatisfyNormc) {
  HypernetParams h = HypernetParams::make(layout_for(base_spec()), 3);
  Rng rng(14);
  weight_hyperinit(h, InitScheme::normc(1.3), rng);
  for (std::size_t i = 0; i < 3; ++i) {
    const std::vector<Tensor> parts = unflatten(column(h.head_w.value, i), h.target);
    for (std::size_t p = 0; p < parts.size(); ++p)
      if (h.target.entries[p].kind == ParamKind::weight)
        for (std::size_t r = 0; r < parts[p].dim(0); ++r) EXPECT_NEAR(row_norm(parts[p], r), 1.3, 1e-12);
  }
}

TEST(BiasHyperInit, EveryEmbeddingGivesSharedPhi) {
  HypernetParams h = HypernetParams::make(layout_for(base_spec()), 10);
  Rng rng(15);
  const Tensor phi = bias_hyperinit(h, InitScheme::default_base(), rng);
  for (double v : h.head_w.value.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(h.head_b.value, phi);
  Rng er(16);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor e(Shape{10});
    for (double& v : e.data()) v = 10.0 * er.normal();
    Tape tape;
    EXPECT_EQ(hypernet_forward(tape, h, tape.constant(e)).value(), phi);
  }
  const std::vector<Tensor> parts = unflatten(phi, h.target);
  for (std::size_t p = 0; p < parts.size(); ++p)
    if (h.target.entries[p].kind == ParamKind::weight)
      for (std::size_t r = 0; r < parts[p].dim(0); ++r) EXPECT_NEAR(row_norm(parts[p], r), std::sqrt(2.0), 1e-12);
}

TEST(FilmBiasHyperInit, Contracts) {
  FilmParams f = FilmParams::make(base_spec(), 4);
  Rng rng(17);
  const Tensor phi = film_bias_hyperinit(f, InitScheme::default_base(), rng);
  for (double v : f.modulation.head_w.value.data()) EXPECT_EQ(v, 0.0);
  for (const LayoutEntry& e : f.modulation.target.entries)
    if (e.kind == ParamKind::scale)
      for (std::size_t i = e.offset; i < e.end(); ++i) EXPECT_EQ(f.modulation.head_b.value[i], 1.0);
  const ParamLayout full = layout_for(base_spec());
  Rng sr(18);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor e(Shape{4}), s(Shape{3});
    for (double& v : e.data()) v = sr.normal();
    for (double& v : s.data()) v = sr.normal();
    Tape tape;
    const PolicyOutput a = film_forward(tape, f, tape.constant(e), tape.constant(s));
    const PolicyOutput b = base_forward(tape.constant(phi), full, tape.constant(s), Activation::relu);
    EXPECT_EQ(a.logits.value(), b.logits.value());
    EXPECT_EQ(a.value.value(), b.value.value());
  }
}

TEST(FilmBiasHyperInit, RejectsNonFilmLayout) {
  FilmParams f = FilmParams::make(base_spec(), 4);
  f.modulation = HypernetParams::make(layout_for(base_spec()), 4);
  Rng rng(19);
  EXPECT_THROW(film_bias_hyperinit(f, InitScheme::default_base(), rng), std::invalid_argument);
}

TEST(InitHypernet, DeterministicAndHiddenKaiming) {
  const ParamLayout l = layout_for(base_spec());
  for (const InitScheme& s : {InitScheme::kaiming(), InitScheme::normc(), InitScheme::orthogonal(),
                              InitScheme::weight_hyperinit(InitScheme::default_base()),
                              InitScheme::bias_hyperinit(InitScheme::default_base())}) {
    HypernetParams a = HypernetParams::make(l, 4, {8}), b = HypernetParams::make(l, 4, {8});
    Rng ra(20), rb(20);
    init_hypernet(a, s, ra);
    init_hypernet(b, s, rb);
    EXPECT_EQ(a.head_w.value, b.head_w.value) << s.describe();
    EXPECT_EQ(a.head_b.value, b.head_b.value);
    EXPECT_EQ(a.hidden_w[0].value, b.hidden_w[0].value);
    const double bound = std::sqrt(2.0) * std::sqrt(3.0 / 4.0);
    for (double v : a.hidden_w[0].value.data()) EXPECT_LE(std::abs(v), bound);
  }
  HypernetParams h = HypernetParams::make(l, 4);
  Rng rng(21);
  EXPECT_THROW(init_hypernet(h, InitScheme::film_bias_hyperinit(InitScheme::default_base()), rng),
               std::invalid_argument);
}

namespace {

AgentSpec tiny_agent(Architecture arch) {
  AgentSpec s;
  s.architecture = arch;
  s.gru_hidden = 6;
  s.embed_dim = 4;
  s.hidden = {8, 8, 4};
  return s;
}

}  // namespace

TEST(InitModel, DefaultAssignmentTable) {
  const AgentSpec s = tiny_agent(Architecture::hypernetwork);
  const InitAssignment a = default_assignment(s, InitScheme::bias_hyperinit(InitScheme::default_base()));
  EXPECT_EQ(a.at("encoder.gru").kind, SchemeKind::orthogonal);
  EXPECT_EQ(a.at("encoder.proj").kind, SchemeKind::kaiming);
  EXPECT_EQ(a.at("encoder.proj").distribution, Distribution::uniform);
  EXPECT_EQ(a.at("hyper.head.actor").kind, SchemeKind::bias_hyperinit);
  EXPECT_DOUBLE_EQ(*a.at("hyper.head.critic").base->head_gain, std::sqrt(2.0));
  const InitAssignment st = default_assignment(tiny_agent(Architecture::standard), InitScheme::normc());
  EXPECT_DOUBLE_EQ(*st.at("standard.actor").head_gain, 0.01);
  EXPECT_EQ(st.at("encoder.proj").distribution, Distribution::uniform);
}

TEST(InitModel, ReproducibleAndManifestRoundTrip) {
  for (Architecture arch : {Architecture::standard, Architecture::hypernetwork, Architecture::film}) {
    const AgentSpec s = tiny_agent(arch);
    const InitScheme method = arch == Architecture::film ? InitScheme::film_bias_hyperinit(InitScheme::default_base())
                                                         : InitScheme::bias_hyperinit(InitScheme::default_base());
    Agent a(s), b(s);
    const InitManifest ma = init_model(a, default_assignment(s, method), 7);
    const InitManifest mb = init_model(b, default_assignment(s, method), 7);
    const auto pa = a.parameters(), pb = b.parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);
    EXPECT_EQ(ma.dump(), mb.dump());
    EXPECT_EQ(InitManifest::from_json(nlohmann::ordered_json::parse(ma.dump())).dump(), ma.dump());
    EXPECT_EQ(a.parameter_count(), expected_parameter_count(s));
    Agent c(s);
    init_model(c, default_assignment(s, method), 8);
    EXPECT_NE(c.parameters().front()->value, pa.front()->value);
  }
}

TEST(InitModel, MissingOrUnknownGroup) {
  const AgentSpec s = tiny_agent(Architecture::hypernetwork);
  Agent a(s);
  InitAssignment asg = default_assignment(s, InitScheme::kaiming());
  asg.erase("hyper.head.critic");
  EXPECT_THROW(init_model(a, asg, 0), std::invalid_argument);
  asg = default_assignment(s, InitScheme::kaiming());
  asg["bogus"] = InitScheme::normc();
  EXPECT_THROW(init_model(a, asg, 0), std::invalid_argument);
}

TEST(InitModel, BiasHyperInitPolicyIsTaskIndependent) {
  AgentSpec s = tiny_agent(Architecture::hypernetwork);
  s.encoder = EncoderKind::onehot;
  s.n_tasks = 6;
  Agent a(s);
  init_model(a, default_assignment(s, InitScheme::bias_hyperinit(InitScheme::default_base())), 3);
  Tensor state(Shape{6, 3}, std::vector<double>(18, 0.4));
  Tensor e(Shape{6, 6});
  for (std::size_t i = 0; i < 6; ++i) e.at(i, i) = 1.0;
  Tape tape;
  const PolicyOutput o = a.policy(tape, tape.constant(state), tape.constant(e));
  for (std::size_t i = 1; i < 6; ++i)
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(o.logits.value().at(i, k), o.logits.value().at(0, k), 1e-12);
}
