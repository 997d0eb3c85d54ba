#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hypermeta/analysis.hpp"
#include "hypermeta/gridworld.hpp"
#include "hypermeta/model.hpp"
#include "hypermeta/trainer.hpp"

namespace hypermeta::harness {

// Malformed or invalid configuration. The message carries the YAML
// position when one is known.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Named initialisation methods accepted in configs: kaiming, normc,
// orthogonal, hfi, weight_hyperinit, bias_hyperinit, film_bias_hyperinit.
std::vector<std::string> method_names();
InitScheme method_scheme(const std::string& method, const InitScheme& base = InitScheme::default_base());

struct InitConfig {
  std::string method = "bias_hyperinit";
  InitScheme base = InitScheme::default_base();
  // Per-group replacements applied on top of the default assignment.
  std::map<std::string, InitScheme> groups;

  [[nodiscard]] InitAssignment assignment(const AgentSpec& spec) const;
};

struct AnalysisConfig {
  std::vector<std::string> schemes{"kaiming", "normc", "hfi", "bias_hyperinit", "weight_hyperinit"};
  std::size_t probe_seeds = 10;
  VarianceProbeOptions probe;
  VarianceBands bands;
  std::vector<std::size_t> stats_shape{64, 64};
  std::size_t stats_draws = 50;
};

struct EquivalenceSection {
  EquivalenceConfig oracle;
  std::vector<EquivalenceFault> faults{EquivalenceFault::none, EquivalenceFault::head_bias,
                                       EquivalenceFault::dense_embedding, EquivalenceFault::adam};
};

struct SweepConfig {
  std::vector<Architecture> architectures;
  std::vector<std::string> sizes;
  std::vector<std::string> inits;
};

struct RunConfig {
  std::string name = "run";
  Architecture architecture = Architecture::hypernetwork;
  EncoderKind encoder = EncoderKind::recurrent;
  std::string size = "XS";
  InitConfig init;
  // Agent fields not covered above (hidden widths come from `size`).
  std::size_t embed_dim = 10;
  std::size_t gru_hidden = 64;
  Activation activation = Activation::relu;
  std::vector<std::size_t> hyper_hidden;
  bool hyper_head_bias = true;
  GridWorldConfig env;
  TrainerConfig trainer;
  // Unset: 1e-3 for the standard architecture, 1e-4 otherwise.
  std::optional<double> learning_rate;
  std::vector<std::uint64_t> seeds{0};
  std::optional<std::filesystem::path> output_dir;
  AnalysisConfig analysis;
  EquivalenceSection equivalence;
  SweepConfig sweep;

  void validate() const;
  [[nodiscard]] AgentSpec agent_spec() const;
  [[nodiscard]] double effective_learning_rate() const;
  // Trainer settings for one seed, learning rate resolved.
  [[nodiscard]] TrainerConfig trainer_for(std::uint64_t seed) const;
};

// Throws ConfigError on syntax errors, unknown keys and invalid values.
RunConfig parse_config(const std::string& yaml_text, const std::string& source = "<string>");
RunConfig load_config(const std::filesystem::path& path);
// Every field written explicitly; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& config);

}  // namespace hypermeta::harness
