#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hypermeta/init.hpp"
#include "hypermeta/networks.hpp"

namespace hypermeta {

enum class Architecture { standard, hypernetwork, film };
enum class EncoderKind { onehot, recurrent };

std::string to_string(Architecture a);
Architecture architecture_from_string(const std::string& name);
std::string to_string(EncoderKind k);
EncoderKind encoder_kind_from_string(const std::string& name);

struct AgentSpec {
  Architecture architecture = Architecture::hypernetwork;
  EncoderKind encoder = EncoderKind::recurrent;
  std::size_t state_dim = 3;
  std::size_t action_dim = 5;
  // Size of the one-hot embedding in onehot mode.
  std::size_t n_tasks = 24;
  // Recurrent encoder output width.
  std::size_t embed_dim = 10;
  std::size_t gru_hidden = 64;
  std::vector<std::size_t> hidden{64, 64, 32};
  Activation activation = Activation::relu;
  std::vector<std::size_t> hyper_hidden;
  bool hyper_head_bias = true;

  void validate() const;
  [[nodiscard]] std::size_t embedding_dim() const { return encoder == EncoderKind::onehot ? n_tasks : embed_dim; }
  // Encoder features per step: state, previous action one-hot, previous reward.
  [[nodiscard]] std::size_t encoder_input_dim() const { return state_dim + action_dim + 1; }
  // Policy (base) network for the hypernetwork and FiLM architectures.
  [[nodiscard]] BaseNetSpec base_spec() const;
};

// Parameter group name -> scheme. Groups depend on the architecture; see
// required_groups().
using InitAssignment = std::map<std::string, InitScheme>;

std::vector<std::string> required_groups(const AgentSpec& spec, const InitAssignment& assignment = {});
// Standard-architecture defaults plus `method` for the hypernetwork head
// (both actor and critic slices) or the FiLM modulation head.
InitAssignment default_assignment(const AgentSpec& spec, const InitScheme& method);

struct ManifestGroup {
  std::string group;
  InitScheme scheme;
  std::string stream;
  std::string note;
};

// Record of how each parameter group was initialised.
struct InitManifest {
  std::uint64_t seed = 0;
  std::vector<ManifestGroup> groups;

  [[nodiscard]] nlohmann::ordered_json to_json() const;
  static InitManifest from_json(const nlohmann::ordered_json& j);
  [[nodiscard]] std::string dump() const { return to_json().dump(2); }
};

nlohmann::ordered_json scheme_to_json(const InitScheme& s);
InitScheme scheme_from_json(const nlohmann::ordered_json& j);

class Agent {
 public:
  explicit Agent(AgentSpec spec);

  [[nodiscard]] const AgentSpec& spec() const { return spec_; }
  std::vector<Parameter*> parameters();
  std::vector<Parameter*> policy_parameters();
  std::vector<Parameter*> encoder_parameters();
  [[nodiscard]] std::size_t parameter_count();

  // Policy over batched states [n x state_dim] and embeddings [n x embedding_dim].
  PolicyOutput policy(Tape& tape, Var state, Var e);

  StandardParams* standard() { return standard_ ? &*standard_ : nullptr; }
  HypernetParams* hyper() { return hyper_ ? &*hyper_ : nullptr; }
  FilmParams* film() { return film_ ? &*film_ : nullptr; }
  GruEncoder* encoder() { return encoder_ ? &*encoder_ : nullptr; }

 private:
  AgentSpec spec_;
  std::optional<StandardParams> standard_;
  std::optional<HypernetParams> hyper_;
  std::optional<FilmParams> film_;
  std::optional<GruEncoder> encoder_;
};

// Applies every group's scheme from stream "init/<group>" of Rng(seed).
// Throws std::invalid_argument on unassigned or unknown groups.
InitManifest init_model(Agent& agent, const InitAssignment& assignment, std::uint64_t seed);

// Closed-form parameter counts.
std::size_t base_param_count(const BaseNetSpec& spec);
std::size_t expected_parameter_count(const AgentSpec& spec);

}  // namespace hypermeta
