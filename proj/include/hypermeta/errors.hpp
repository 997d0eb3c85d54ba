#pragma once

#include <stdexcept>

namespace hypermeta {

// A request that is well-formed but violates a safety or contract rule.
class RefusalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hypermeta
