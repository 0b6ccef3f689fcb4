#pragma once

#include <cstdint>
#include <string_view>

namespace dde {

// Deterministic random streams. Every consumer derives its own stream from
// (root seed, purpose tag, index) so that runs are reproducible bit-for-bit
// and training can be resumed without replaying earlier draws.
//
// Derivation: fnv1a64(purpose) is mixed with the root seed and index through
// splitmix64; four successive splitmix64 outputs seed a xoshiro256++ state.
class RngStream {
 public:
  RngStream() : RngStream(0, "default", 0) {}
  RngStream(std::uint64_t root, std::string_view purpose, std::uint64_t index);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double next_unit();

  // Uniform in [lo, hi).
  double next_uniform(double lo, double hi);

  // Standard normal via Box-Muller (second value cached).
  double next_gaussian();

  // Uniform integer in [0, n).
  std::uint64_t next_index(std::uint64_t n);

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t fnv1a64(std::string_view s);

}  // namespace dde
