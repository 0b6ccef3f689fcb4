#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dde/model.hpp"

namespace dde {

// Annealed Langevin dynamics over a descending noise ladder. Step size per
// level: alpha_i = step_size_base * sigma_i^2 / sigma_last^2.
struct AldConfig {
  Vec sigma_levels;  // strictly decreasing, all > 0
  int steps_per_level = 100;
  double step_size_base = 0.05;
  std::uint64_t seed = 1;
  Vec init_lo;  // chain initialization box (per dim)
  Vec init_hi;

  void validate(int dim) const;
};

// n i.i.d. generator samples g(z), z ~ N(0, I_m). One network evaluation per
// sample; deterministic per seed.
Vec sample_direct(const GeneratorModel& gen, int n, std::uint64_t seed);

struct AldReport {
  Vec samples;  // n x dim
  std::string label;  // "ald", or "langevin" when a single level is used
  long energy_evals = 0;
  struct Level {
    double sigma = 0.0;
    double alpha = 0.0;
    int steps = 0;
  };
  std::vector<Level> levels;
};

// Langevin chains x <- x + (alpha/2) score(x) + sqrt(alpha) xi, annealed over
// the configured levels; one independent RNG stream per chain. A single
// energy is reused across levels; the per-level overload takes one energy per
// level (matching annealed training).
AldReport sample_ald(const Energy& energy, const AldConfig& cfg, int n);
AldReport sample_ald(std::span<const Energy* const> per_level, const AldConfig& cfg, int n);

}  // namespace dde
