#pragma once

#include <span>

#include "dde/tape.hpp"

namespace dde {

// Adaptive-moment gradient descent. The loss scale here varies with
// 1/sigma_eta^4, so per-parameter step normalization is required in practice.
struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vec m;
  Vec v;
  long t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

void adam_step(AdamState& st, std::span<double> params, std::span<const double> grad,
               double lr, const AdamConfig& cfg = AdamConfig{});

}  // namespace dde
