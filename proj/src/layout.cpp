#include "hypermeta/layout.hpp"

#include <algorithm>
#include <stdexcept>

namespace hypermeta {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

std::string to_string(ParamKind k) {
  switch (k) {
    case ParamKind::weight: return "weight";
    case ParamKind::bias: return "bias";
    case ParamKind::scale: return "scale";
  }
  return "?";
}

std::string to_string(HeadKind h) { return h == HeadKind::actor ? "actor" : "critic"; }

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

void BaseNetSpec::validate() const {
  if (input_dim == 0) throw std::invalid_argument("base network: input_dim must be positive");
  if (hidden.empty()) throw std::invalid_argument("base network: at least one hidden layer is required");
  for (std::size_t w : hidden)
    if (w == 0) throw std::invalid_argument("base network: zero-width layer");
  if (actor && action_dim == 0) throw std::invalid_argument("base network: action_dim must be positive");
  if (!actor && !critic) throw std::invalid_argument("base network: needs an actor or a critic head");
}

std::vector<std::size_t> named_widths(std::string_view size_name) {
  if (size_name == "XS") return {64, 64, 32};
  if (size_name == "S") return {128, 64, 64};
  if (size_name == "M") return {128, 128, 64};
  if (size_name == "L") return {256, 128, 128};
  if (size_name == "XL") return {256, 256, 128};
  if (size_name == "XXL") return {1024, 512, 512};
  throw std::invalid_argument("unknown base size '" + std::string(size_name) + "'");
}

std::vector<std::string> size_names() { return {"XS", "S", "M", "L", "XL", "XXL"}; }

const LayoutEntry& ParamLayout::find(std::string_view name) const {
  for (const LayoutEntry& e : entries)
    if (e.name == name) return e;
  throw std::out_of_range("layout has no entry '" + std::string(name) + "'");
}

bool ParamLayout::has_head(HeadKind head) const {
  return std::any_of(entries.begin(), entries.end(), [&](const LayoutEntry& e) { return e.head == head; });
}

void ParamLayout::append(LayoutEntry entry) {
  entry.offset = total_len;
  total_len += entry.size();
  entries.push_back(std::move(entry));
}

namespace {

enum class Parts { weights_and_biases, weights, modulation };

ParamLayout build(const BaseNetSpec& spec, Parts parts) {
  spec.validate();
  ParamLayout layout;
  auto stack = [&](HeadKind head, std::size_t out_dim) {
    std::size_t in = spec.input_dim;
    const std::size_t n_layers = spec.hidden.size() + 1;
    for (std::size_t l = 0; l < n_layers; ++l) {
      const bool last = l + 1 == n_layers;
      const std::size_t out = last ? out_dim : spec.hidden[l];
      const std::string prefix = to_string(head) + ".l" + std::to_string(l) + ".";
      auto entry = [&](const std::string& suffix, Shape shape, ParamKind kind) {
        LayoutEntry e;
        e.name = prefix + suffix;
        e.shape = std::move(shape);
        e.kind = kind;
        e.fan_in = in;
        e.head = head;
        e.layer = l;
        e.output_layer = last;
        layout.append(std::move(e));
      };
      if (parts == Parts::modulation) {
        entry("scale", Shape{out}, ParamKind::scale);
        entry("bias", Shape{out}, ParamKind::bias);
      } else {
        entry("weight", Shape{out, in}, ParamKind::weight);
        if (parts == Parts::weights_and_biases) entry("bias", Shape{out}, ParamKind::bias);
      }
      in = out;
    }
  };
  if (spec.actor) stack(HeadKind::actor, spec.action_dim);
  if (spec.critic) stack(HeadKind::critic, 1);
  return layout;
}

}  // namespace

ParamLayout layout_for(const BaseNetSpec& spec) { return build(spec, Parts::weights_and_biases); }
ParamLayout weight_layout_for(const BaseNetSpec& spec) { return build(spec, Parts::weights); }
ParamLayout modulation_layout_for(const BaseNetSpec& spec) { return build(spec, Parts::modulation); }

std::vector<Tensor> unflatten(const Tensor& flat, const ParamLayout& layout) {
  if (flat.size() != layout.total_len)
    throw ShapeError("unflatten: vector has " + std::to_string(flat.size()) + " values, layout needs " +
                     std::to_string(layout.total_len));
  std::vector<Tensor> parts;
  parts.reserve(layout.entries.size());
  for (const LayoutEntry& e : layout.entries) {
    const auto begin = flat.data().begin() + static_cast<std::ptrdiff_t>(e.offset);
    parts.emplace_back(e.shape, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(e.size())));
  }
  return parts;
}

Tensor flatten(const std::vector<Tensor>& parts, const ParamLayout& layout) {
  if (parts.size() != layout.entries.size()) throw ShapeError("flatten: wrong number of parts");
  Tensor flat(Shape{layout.total_len});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const LayoutEntry& e = layout.entries[k];
    if (parts[k].shape() != e.shape)
      throw ShapeError("flatten: part '" + e.name + "' has shape " + shape_string(parts[k].shape()));
    std::copy(parts[k].data().begin(), parts[k].data().end(), flat.data().begin() + static_cast<std::ptrdiff_t>(e.offset));
  }
  return flat;
}

}  // namespace hypermeta
