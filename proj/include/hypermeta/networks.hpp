#pragma once

#include <optional>
#include <span>
#include <vector>

#include "hypermeta/autodiff.hpp"
#include "hypermeta/layout.hpp"

namespace hypermeta {

// logits [n x actions]; value [n]. Either may be invalid when the
// corresponding head is absent.
struct PolicyOutput {
  Var logits;
  Var value;
};

struct LayerVars {
  Var weight;  // [out x in]
  Var bias;    // [out]
};

struct BaseLayers {
  std::vector<LayerVars> actor;
  std::vector<LayerVars> critic;
};

Var activate(Var x, Activation a);

// Views each entry of a flat vector as a tensor on the tape.
BaseLayers split_layers(Var phi, const ParamLayout& layout);
PolicyOutput run_layers(const BaseLayers& layers, Var state, Activation activation);

// Evaluates the base policy whose parameters are the flat vector phi.
// state is [n x input_dim] or a single [input_dim] vector.
PolicyOutput base_forward(Var phi, const ParamLayout& layout, Var state, Activation activation);

// ---- hypernetwork -------------------------------------------------------

// phi = head_w . x + head_b, where x is e passed through optional hidden
// layers (x == e for a linear hypernetwork). Rows of head_w follow
// `target`, so actor and critic parameters come from separate row blocks.
struct HypernetParams {
  ParamLayout target;
  std::size_t embed_dim = 0;
  std::vector<Parameter> hidden_w;
  std::vector<Parameter> hidden_b;
  Parameter head_w;  // [total_len x cond_dim]
  Parameter head_b;  // [total_len]; unused when !use_head_bias
  bool use_head_bias = true;
  Activation hidden_activation = Activation::relu;

  static HypernetParams make(ParamLayout target, std::size_t embed_dim, std::vector<std::size_t> hidden_widths = {},
                             bool use_head_bias = true, const std::string& prefix = "hyper");

  [[nodiscard]] bool is_linear() const { return hidden_w.empty(); }
  [[nodiscard]] std::size_t cond_dim() const { return head_w.value.dim(1); }
  std::vector<Parameter*> parameters();
};

struct BoundHypernet {
  std::vector<LayerVars> hidden;
  Var head_w;
  Var head_b;  // invalid without a head bias
};

BoundHypernet bind(Tape& tape, HypernetParams& h);
// Final hidden activation x for embeddings e [n x embed_dim].
Var hypernet_condition(const BoundHypernet& h, Var e, Activation hidden_activation);
// Materialised phi: [total_len] for e [embed_dim], [n x total_len] for a batch.
Var hypernet_forward(Tape& tape, HypernetParams& h, Var e);
// Base policy with generated parameters, without materialising phi.
PolicyOutput hyper_policy_forward(const BoundHypernet& bound, const HypernetParams& h, Var e, Var state,
                                  Activation activation);

// ---- standard architecture ---------------------------------------------

// An MLP over concat(state, e); separate actor and critic stacks.
struct StandardParams {
  BaseNetSpec spec;  // input_dim already includes the embedding
  ParamLayout layout;
  Parameter flat;

  static StandardParams make(std::size_t state_dim, std::size_t embed_dim, std::vector<std::size_t> hidden,
                             std::size_t action_dim, Activation activation);
  std::vector<Parameter*> parameters() { return {&flat}; }
};

PolicyOutput standard_forward(Tape& tape, StandardParams& theta, Var state, Var e);

// ---- FiLM ---------------------------------------------------------------

// Base network owns its weights; the hypernetwork produces a scale and a
// bias vector per layer: y = act(scale * (W x) + bias).
struct FilmParams {
  BaseNetSpec spec;
  ParamLayout weight_layout;
  Parameter base_weights;
  HypernetParams modulation;

  static FilmParams make(const BaseNetSpec& spec, std::size_t embed_dim, std::vector<std::size_t> hyper_hidden = {});
  std::vector<Parameter*> parameters();
};

struct BoundFilm {
  BaseLayers weights;  // biases invalid
  BoundHypernet modulation;
};

BoundFilm bind(Tape& tape, FilmParams& film);
PolicyOutput film_forward(const BoundFilm& bound, const FilmParams& film, Var e, Var state);
PolicyOutput film_forward(Tape& tape, FilmParams& film, Var e, Var state);

// ---- task encoders ------------------------------------------------------

struct TaskEmbedding {
  std::vector<double> values;
};

TaskEmbedding encode_onehot(std::size_t task_id, std::size_t n_tasks);

// One encoder step: current state, previous action (none at the start of
// a meta-episode) and previous reward.
struct EncoderInput {
  std::vector<double> state;
  std::optional<std::size_t> prev_action;
  double prev_reward = 0.0;
};

std::vector<double> encoder_features(const EncoderInput& in, std::size_t action_dim);

// Single-layer gated recurrent cell followed by a linear projection.
struct GruEncoder {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t embed_dim = 0;
  // Input-side and hidden-side weights for reset, update, candidate gates.
  Parameter w_ir, w_iz, w_in, w_hr, w_hz, w_hn;
  Parameter b_ir, b_iz, b_in, b_hr, b_hz, b_hn;
  Parameter proj_w, proj_b;

  static GruEncoder make(std::size_t input_dim, std::size_t hidden_dim, std::size_t embed_dim,
                         const std::string& prefix = "encoder");
  std::vector<Parameter*> parameters();
  std::vector<Parameter*> recurrent_weights();
  std::vector<Parameter*> recurrent_biases();
};

struct BoundGru {
  const GruEncoder* enc = nullptr;
  Var w_ir, w_iz, w_in, w_hr, w_hz, w_hn;
  Var b_ir, b_iz, b_in, b_hr, b_hz, b_hn;
  Var proj_w, proj_b;

  [[nodiscard]] Var initial_hidden(Tape& tape, std::size_t batch) const;
  // Next hidden state from hidden [n x H] and features [n x I].
  [[nodiscard]] Var step(Var hidden, Var features) const;
  [[nodiscard]] Var embed(Var hidden) const;
};

BoundGru bind(Tape& tape, GruEncoder& enc);

// Embedding after consuming `prefix`; the initial-hidden projection for an
// empty prefix.
TaskEmbedding gru_encode(GruEncoder& enc, std::span<const EncoderInput> prefix, std::size_t action_dim);

}  // namespace hypermeta
