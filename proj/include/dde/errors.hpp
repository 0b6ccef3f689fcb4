#pragma once

#include <stdexcept>
#include <string>

namespace dde {

// Bad user input: malformed configs, dimension mismatches, contract violations.
// The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values or diverging iterations at runtime. Exit code 3.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg, int node_id = -1)
      : std::runtime_error(msg), node(node_id) {}
  int node;  // offending tape node when known, -1 otherwise
};

}  // namespace dde
