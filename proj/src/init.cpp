#include "hypermeta/init.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

namespace hypermeta {

std::string to_string(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::kaiming: return "kaiming";
    case SchemeKind::normc: return "normc";
    case SchemeKind::orthogonal: return "orthogonal";
    case SchemeKind::hfi: return "hfi";
    case SchemeKind::weight_hyperinit: return "weight_hyperinit";
    case SchemeKind::bias_hyperinit: return "bias_hyperinit";
    case SchemeKind::film_bias_hyperinit: return "film_bias_hyperinit";
  }
  return "?";
}

SchemeKind scheme_kind_from_string(const std::string& name) {
  for (SchemeKind k : {SchemeKind::kaiming, SchemeKind::normc, SchemeKind::orthogonal, SchemeKind::hfi,
                       SchemeKind::weight_hyperinit, SchemeKind::bias_hyperinit, SchemeKind::film_bias_hyperinit})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown init scheme '" + name + "'");
}

std::string to_string(Distribution d) { return d == Distribution::uniform ? "uniform" : "normal"; }

Distribution distribution_from_string(const std::string& name) {
  if (name == "uniform") return Distribution::uniform;
  if (name == "normal") return Distribution::normal;
  throw std::invalid_argument("unknown distribution '" + name + "'");
}

InitScheme InitScheme::kaiming(double gain, Distribution d) {
  InitScheme s;
  s.kind = SchemeKind::kaiming;
  s.gain = gain;
  s.distribution = d;
  return s;
}

InitScheme InitScheme::normc(double gain, std::optional<double> head_gain) {
  InitScheme s;
  s.kind = SchemeKind::normc;
  s.gain = gain;
  s.head_gain = head_gain;
  return s;
}

InitScheme InitScheme::orthogonal(double gain) {
  InitScheme s;
  s.kind = SchemeKind::orthogonal;
  s.gain = gain;
  return s;
}

InitScheme InitScheme::hfi(double gain) {
  InitScheme s;
  s.kind = SchemeKind::hfi;
  s.gain = gain;
  return s;
}

namespace {

InitScheme wrap(SchemeKind kind, InitScheme f) {
  InitScheme s;
  s.kind = kind;
  s.gain = f.head_gain.value_or(f.gain);
  s.base = std::make_shared<const InitScheme>(std::move(f));
  s.validate();
  return s;
}

}  // namespace

InitScheme InitScheme::weight_hyperinit(InitScheme f) { return wrap(SchemeKind::weight_hyperinit, std::move(f)); }
InitScheme InitScheme::bias_hyperinit(InitScheme f) { return wrap(SchemeKind::bias_hyperinit, std::move(f)); }
InitScheme InitScheme::film_bias_hyperinit(InitScheme f) {
  return wrap(SchemeKind::film_bias_hyperinit, std::move(f));
}

InitScheme InitScheme::default_base() { return normc(kReluGain, kReluGain); }

bool InitScheme::needs_base() const {
  return kind == SchemeKind::weight_hyperinit || kind == SchemeKind::bias_hyperinit ||
         kind == SchemeKind::film_bias_hyperinit;
}

void InitScheme::validate() const {
  if (needs_base() && !base) throw std::invalid_argument(to_string(kind) + " requires a base scheme");
  if (!needs_base() && base) throw std::invalid_argument(to_string(kind) + " does not take a base scheme");
  if (base) {
    if (base->needs_base() || base->kind == SchemeKind::hfi)
      throw std::invalid_argument("base scheme must be kaiming, normc or orthogonal");
    base->validate();
  }
  if (!(gain >= 0.0) || (head_gain && !(*head_gain >= 0.0)))
    throw std::invalid_argument("init gain must be non-negative");
}

double InitScheme::gain_for(const LayoutEntry& entry) const {
  return entry.output_layer && head_gain ? *head_gain : gain;
}

std::string InitScheme::describe() const {
  std::ostringstream os;
  os << to_string(kind);
  if (base) {
    os << '(' << base->describe() << ')';
    return os.str();
  }
  os << "[gain=" << gain;
  if (head_gain) os << ",head_gain=" << *head_gain;
  if (kind == SchemeKind::kaiming) os << ',' << to_string(distribution);
  os << ']';
  return os.str();
}

// ---- matrix schemes -----------------------------------------------------

namespace {

void require_matrix_shape(const Shape& shape, const char* who) {
  if (shape.size() != 2) throw ShapeError(std::string(who) + ": expected a 2-D shape, got " + shape_string(shape));
}

}  // namespace

Tensor kaiming_init(const Shape& shape, double gain, Distribution distribution, Rng& rng) {
  require_matrix_shape(shape, "kaiming_init");
  Tensor t(shape);
  const double fan_in = static_cast<double>(shape[1]);
  if (distribution == Distribution::normal) {
    const double std = gain / std::sqrt(fan_in);
    for (double& v : t.data()) v = std * rng.normal();
  } else {
    const double bound = gain * std::sqrt(3.0 / fan_in);
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
  }
  return t;
}

Tensor normc_init(const Shape& shape, double gain, Rng& rng) {
  require_matrix_shape(shape, "normc_init");
  Tensor t(shape);
  for (double& v : t.data()) v = rng.normal();
  const std::size_t rows = shape[0], cols = shape[1];
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sq += t[r * cols + c] * t[r * cols + c];
    const double f = gain / std::sqrt(sq);
    for (std::size_t c = 0; c < cols; ++c) t[r * cols + c] *= f;
  }
  return t;
}

Tensor orthogonal_init(const Shape& shape, double gain, Rng& rng) {
  require_matrix_shape(shape, "orthogonal_init");
  const std::size_t rows = shape[0], cols = shape[1];
  const bool transpose = rows < cols;
  const Eigen::Index m = static_cast<Eigen::Index>(transpose ? cols : rows);
  const Eigen::Index n = static_cast<Eigen::Index>(transpose ? rows : cols);
  Eigen::MatrixXd a(m, n);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m, n);
  const Eigen::MatrixXd& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  Tensor t(shape);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = transpose ? q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i))
                                 : q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      t[i * cols + j] = gain * v;
    }
  return t;
}

Tensor sample_matrix(const InitScheme& scheme, const Shape& shape, double gain, Rng& rng) {
  switch (scheme.kind) {
    case SchemeKind::kaiming: return kaiming_init(shape, gain, scheme.distribution, rng);
    case SchemeKind::normc: return normc_init(shape, gain, rng);
    case SchemeKind::orthogonal: return orthogonal_init(shape, gain, rng);
    default: throw std::invalid_argument(to_string(scheme.kind) + " is not a matrix scheme");
  }
}

Tensor sample_base(const InitScheme& f, const ParamLayout& layout, Rng& rng) {
  Tensor phi(Shape{layout.total_len});
  for (const LayoutEntry& e : layout.entries) {
    switch (e.kind) {
      case ParamKind::weight: {
        const Tensor w = sample_matrix(f, e.shape, f.gain_for(e), rng);
        std::copy(w.data().begin(), w.data().end(), phi.data().begin() + static_cast<std::ptrdiff_t>(e.offset));
        break;
      }
      case ParamKind::bias: break;
      case ParamKind::scale:
        for (std::size_t i = 0; i < e.size(); ++i) phi[e.offset + i] = 1.0;
        break;
    }
  }
  return phi;
}

// ---- hypernetwork schemes -----------------------------------------------

double hfi_weight_variance(double gain, std::size_t cond_dim, std::size_t fan_in, double embedding_variance) {
  return gain * gain / (static_cast<double>(cond_dim) * static_cast<double>(fan_in) * embedding_variance);
}

void hfi_init(HypernetParams& h, double gain, Rng& rng, const HfiOptions& options) {
  if (!h.is_linear()) throw std::invalid_argument("hfi_init: only linear hypernetworks are supported");
  if (!(options.embedding_variance > 0.0)) throw std::invalid_argument("hfi_init: embedding variance must be positive");
  const std::size_t k = h.cond_dim();
  Tensor& w = h.head_w.value;
  w.fill(0.0);
  for (const LayoutEntry& e : h.target.entries) {
    if (e.kind != ParamKind::weight) continue;
    const double var = hfi_weight_variance(gain, k, e.fan_in, options.embedding_variance);
    const double std = std::sqrt(var);
    const double bound = std::sqrt(3.0 * var);
    for (std::size_t j = e.offset; j < e.end(); ++j)
      for (std::size_t q = 0; q < k; ++q)
        w[j * k + q] = options.distribution == Distribution::normal ? std * rng.normal() : rng.uniform(-bound, bound);
  }
  h.head_b.value.fill(0.0);
}

std::vector<Tensor> weight_hyperinit(HypernetParams& h, const InitScheme& f, Rng& rng) {
  const std::size_t k = h.cond_dim();
  std::vector<Tensor> samples;
  Tensor& w = h.head_w.value;
  for (std::size_t i = 0; i < k; ++i) {
    Rng col = rng.stream(i);
    samples.push_back(sample_base(f, h.target, col));
    const Tensor& phi = samples.back();
    for (std::size_t j = 0; j < h.target.total_len; ++j) w[j * k + i] = phi[j];
  }
  h.head_b.value.fill(0.0);
  return samples;
}

Tensor bias_hyperinit(HypernetParams& h, const InitScheme& f, Rng& rng) {
  h.head_w.value.fill(0.0);
  Tensor phi = sample_base(f, h.target, rng);
  h.head_b.value = phi;
  return phi;
}

Tensor film_bias_hyperinit(FilmParams& film, const InitScheme& f, Rng& rng) {
  HypernetParams& h = film.modulation;
  for (const LayoutEntry& e : h.target.entries)
    if (e.kind == ParamKind::weight) throw std::invalid_argument("film_bias_hyperinit: expected a FiLM modulation layout");
  const ParamLayout full = layout_for(film.spec);
  Tensor phi = sample_base(f, full, rng);
  for (const LayoutEntry& e : film.weight_layout.entries) {
    const LayoutEntry& src = full.find(e.name);
    for (std::size_t i = 0; i < e.size(); ++i) film.base_weights.value[e.offset + i] = phi[src.offset + i];
  }
  h.head_w.value.fill(0.0);
  Tensor& b = h.head_b.value;
  for (const LayoutEntry& e : h.target.entries) {
    if (e.kind == ParamKind::scale) {
      for (std::size_t i = 0; i < e.size(); ++i) b[e.offset + i] = 1.0;
    } else {
      const LayoutEntry& src = full.find(e.name);
      for (std::size_t i = 0; i < e.size(); ++i) b[e.offset + i] = phi[src.offset + i];
    }
  }
  return phi;
}

void default_head_init(HypernetParams& h, const InitScheme& scheme, Rng& rng) {
  const std::size_t k = h.cond_dim();
  Tensor& w = h.head_w.value;
  for (HeadKind head : {HeadKind::actor, HeadKind::critic}) {
    std::size_t begin = h.target.total_len, end = 0;
    for (const LayoutEntry& e : h.target.entries)
      if (e.head == head) {
        begin = std::min(begin, e.offset);
        end = std::max(end, e.end());
      }
    if (end <= begin) continue;
    Rng block_rng = rng.stream(to_string(head));
    const Tensor block = sample_matrix(scheme, Shape{end - begin, k}, scheme.gain, block_rng);
    std::copy(block.data().begin(), block.data().end(), w.data().begin() + static_cast<std::ptrdiff_t>(begin * k));
  }
  h.head_b.value.fill(0.0);
}

void init_hypernet_hidden(HypernetParams& h, Rng& rng) {
  for (std::size_t l = 0; l < h.hidden_w.size(); ++l) {
    Rng layer = rng.stream(l);
    h.hidden_w[l].value =
        kaiming_init(h.hidden_w[l].value.shape(), InitScheme::kReluGain, Distribution::uniform, layer);
    h.hidden_b[l].value.fill(0.0);
  }
}

void init_hypernet(HypernetParams& h, const InitScheme& scheme, Rng& rng) {
  scheme.validate();
  Rng hidden = rng.stream("hidden");
  init_hypernet_hidden(h, hidden);
  Rng head = rng.stream("head");
  switch (scheme.kind) {
    case SchemeKind::kaiming:
    case SchemeKind::normc:
    case SchemeKind::orthogonal: default_head_init(h, scheme, head); break;
    case SchemeKind::hfi: hfi_init(h, scheme.gain, head); break;
    case SchemeKind::weight_hyperinit: weight_hyperinit(h, *scheme.base, head); break;
    case SchemeKind::bias_hyperinit: bias_hyperinit(h, *scheme.base, head); break;
    case SchemeKind::film_bias_hyperinit:
      throw std::invalid_argument("film_bias_hyperinit applies to FiLM policies, not hypernetworks");
  }
}

}  // namespace hypermeta
