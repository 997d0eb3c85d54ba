#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hypermeta/autodiff.hpp"

namespace hypermeta {

// Named float64 arrays serialised as
//   8-byte magic "HMCKPT01" | u64 LE header length | JSON header | raw LE doubles.
// The header lists {name, shape, offset, length} per array, with offsets
// in bytes from the start of the data section.
class Checkpoint {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
  };

  void add(std::string name, Tensor tensor);
  void add(const std::vector<Parameter*>& params, const std::string& prefix = "");
  [[nodiscard]] const Tensor& get(const std::string& name) const;
  [[nodiscard]] bool contains(const std::string& name) const;
  [[nodiscard]] const std::vector<Entry>& entries() const { return entries_; }

  // Copies stored values into parameters matched by name (with prefix).
  void restore(const std::vector<Parameter*>& params, const std::string& prefix = "") const;

  [[nodiscard]] std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::vector<Entry> entries_;
};

}  // namespace hypermeta
