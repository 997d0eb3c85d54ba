#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "hypermeta/tensor.hpp"

namespace hypermeta {

enum class Activation { relu, tanh };
enum class ParamKind { weight, bias, scale };
enum class HeadKind { actor, critic };

std::string to_string(Activation a);
std::string to_string(ParamKind k);
std::string to_string(HeadKind h);
Activation activation_from_string(const std::string& name);

// Policy (base) network: an MLP with an actor head (action logits)
// and/or a critic head (scalar value), each a separate stack of layers.
struct BaseNetSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t action_dim = 0;
  Activation activation = Activation::relu;
  bool actor = true;
  bool critic = true;

  void validate() const;
};

// Named base sizes: XS, S, M, L, XL, XXL.
std::vector<std::size_t> named_widths(std::string_view size_name);
std::vector<std::string> size_names();

struct LayoutEntry {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
  ParamKind kind = ParamKind::weight;
  // Input width of the base layer this entry belongs to.
  std::size_t fan_in = 0;
  HeadKind head = HeadKind::actor;
  std::size_t layer = 0;
  bool output_layer = false;

  [[nodiscard]] std::size_t size() const { return shape_size(shape); }
  [[nodiscard]] std::size_t end() const { return offset + size(); }
};

// Ordered slices of one flat parameter vector.
struct ParamLayout {
  std::vector<LayoutEntry> entries;
  std::size_t total_len = 0;

  [[nodiscard]] const LayoutEntry& find(std::string_view name) const;
  [[nodiscard]] bool has_head(HeadKind head) const;
  // Appends an entry at the current end of the vector.
  void append(LayoutEntry entry);
};

// Weight then bias for each layer, actor stack first, then critic.
ParamLayout layout_for(const BaseNetSpec& spec);
// Weights only (for base networks whose biases come from elsewhere).
ParamLayout weight_layout_for(const BaseNetSpec& spec);
// Per-layer scale and bias vectors matching each layer width.
ParamLayout modulation_layout_for(const BaseNetSpec& spec);

std::vector<Tensor> unflatten(const Tensor& flat, const ParamLayout& layout);
Tensor flatten(const std::vector<Tensor>& parts, const ParamLayout& layout);

}  // namespace hypermeta
