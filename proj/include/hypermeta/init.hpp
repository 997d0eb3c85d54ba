#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hypermeta/layout.hpp"
#include "hypermeta/networks.hpp"
#include "hypermeta/rng.hpp"

namespace hypermeta {

enum class SchemeKind { kaiming, normc, orthogonal, hfi, weight_hyperinit, bias_hyperinit, film_bias_hyperinit };
enum class Distribution { uniform, normal };

std::string to_string(SchemeKind kind);
SchemeKind scheme_kind_from_string(const std::string& name);
std::string to_string(Distribution d);
Distribution distribution_from_string(const std::string& name);

// Parameter-sampling rule. The HyperInit kinds wrap a base scheme `f`
// describing how a single base network would be initialised; `head_gain`
// (when set) replaces `gain` for the output layer of each base stack.
struct InitScheme {
  SchemeKind kind = SchemeKind::normc;
  double gain = 1.0;
  std::optional<double> head_gain;
  Distribution distribution = Distribution::normal;
  std::shared_ptr<const InitScheme> base;

  static InitScheme kaiming(double gain = kReluGain, Distribution d = Distribution::normal);
  static InitScheme normc(double gain = 1.0, std::optional<double> head_gain = std::nullopt);
  static InitScheme orthogonal(double gain = 1.0);
  static InitScheme hfi(double gain = kReluGain);
  static InitScheme weight_hyperinit(InitScheme f);
  static InitScheme bias_hyperinit(InitScheme f);
  static InitScheme film_bias_hyperinit(InitScheme f);
  // normc with gain sqrt(2) in every layer, heads included.
  static InitScheme default_base();

  // Throws std::invalid_argument when base presence does not match kind.
  void validate() const;
  [[nodiscard]] bool needs_base() const;
  [[nodiscard]] double gain_for(const LayoutEntry& entry) const;
  [[nodiscard]] std::string describe() const;

  static constexpr double kReluGain = 1.4142135623730951;
};

// Matrices are [out x in]; fan-in is the second dimension.
Tensor kaiming_init(const Shape& shape, double gain, Distribution distribution, Rng& rng);
// i.i.d. standard normals, then each output unit's incoming weight
// vector (a row) rescaled to Euclidean norm `gain`.
Tensor normc_init(const Shape& shape, double gain, Rng& rng);
// QR of a Gaussian matrix with signs fixed by diag(R). Columns are
// orthonormal when out >= in, rows otherwise; scaled by gain.
Tensor orthogonal_init(const Shape& shape, double gain, Rng& rng);

// Draw from a matrix scheme (kaiming, normc or orthogonal).
Tensor sample_matrix(const InitScheme& scheme, const Shape& shape, double gain, Rng& rng);

// One flat base-network vector phi ~ f: weight entries drawn by f,
// biases zero, scales one.
Tensor sample_base(const InitScheme& f, const ParamLayout& layout, Rng& rng);

struct HfiOptions {
  // Assumed variance of each embedding coordinate.
  double embedding_variance = 1.0;
  Distribution distribution = Distribution::normal;
};

// Variance assigned to head rows that generate base weights with the given
// fan-in: gain^2 / (cond_dim * fan_in * embedding_variance).
double hfi_weight_variance(double gain, std::size_t cond_dim, std::size_t fan_in, double embedding_variance);

// Hyperfan-in for a linear hypernetwork: weight-generating rows get
// hfi_weight_variance(), bias-generating rows and head_b are zero.
void hfi_init(HypernetParams& h, double gain, Rng& rng, const HfiOptions& options = {});

// Column i of head_w is an independent sample phi^i ~ f; head_b = 0.
// Returns the samples.
std::vector<Tensor> weight_hyperinit(HypernetParams& h, const InitScheme& f, Rng& rng);

// head_w = 0, head_b = phi_shared ~ f. Returns phi_shared.
Tensor bias_hyperinit(HypernetParams& h, const InitScheme& f, Rng& rng);

// phi ~ f; base weights <- weight entries of phi; head_w = 0; head_b
// bias slices <- bias entries of phi; head_b scale slices <- 1. Returns phi.
Tensor film_bias_hyperinit(FilmParams& film, const InitScheme& f, Rng& rng);

// Generic scheme applied to the head matrix, one block per head stack
// (actor rows, critic rows); head_b = 0.
void default_head_init(HypernetParams& h, const InitScheme& scheme, Rng& rng);

// Kaiming uniform hidden hypernetwork layers, zero hidden biases.
void init_hypernet_hidden(HypernetParams& h, Rng& rng);

// Full hypernetwork initialisation for any scheme except film_bias_hyperinit.
void init_hypernet(HypernetParams& h, const InitScheme& scheme, Rng& rng);

}  // namespace hypermeta
