#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "dde/adam.hpp"
#include "dde/network.hpp"

namespace dde {

// One JSON document per model. All floats are stored as decimal strings with
// 17 significant digits so that parse(format(x)) == x exactly for float64.
struct Checkpoint {
  std::string kind;  // "dde" | "generator"
  MlpConfig config;
  std::uint64_t seed = 0;
  Vec params;
  double sigma_eta = 0.0;  // dde only
  long step = 0;
  AdamState opt;           // empty moment vectors when not resuming
  std::string dataset;     // informational
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

std::string format_double(double v);  // shortest-exact decimal, 17 digits
double parse_double_exact(const std::string& s);

}  // namespace dde
