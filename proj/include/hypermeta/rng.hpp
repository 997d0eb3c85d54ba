#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace hypermeta {

// Counter-based generator. Draw i of a stream is a pure function of
// (key, i), so any stream can be replayed from its key alone. Child
// streams are derived by name and never share draws with the parent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  [[nodiscard]] Rng stream(std::string_view name) const;
  [[nodiscard]] Rng stream(std::uint64_t index) const;

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller; the paired draw is cached.
  double normal();
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  [[nodiscard]] std::uint64_t key() const { return key_; }
  [[nodiscard]] std::uint64_t counter() const { return counter_; }

 private:
  Rng(std::uint64_t key, bool);

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::optional<double> cached_normal_;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace hypermeta
