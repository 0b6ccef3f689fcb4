#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dde/tape.hpp"

namespace dde {

// Residual multilayer perceptron: linear input/output adapters around
// `layers` blocks of  h <- h + W2 softplus(W1 h + b1) + b2  on a hidden state
// of `channels` units. With residual=false the skip term is dropped but the
// parameter layout is unchanged.
struct MlpConfig {
  int in_dim = 0;
  int out_dim = 0;
  int layers = 1;
  int channels = 16;
  bool residual = true;
  std::string activation = "softplus";

  void validate() const;
};

struct BlockOffsets {
  int w1 = 0, b1 = 0, w2 = 0, b2 = 0;
};

// Index map into the flat parameter vector.
struct MlpLayout {
  int w_in = 0, b_in = 0;
  std::vector<BlockOffsets> blocks;
  int w_out = 0, b_out = 0;
  int total = 0;
};

MlpLayout mlp_layout(const MlpConfig& cfg);

// Deterministic init: weights uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)),
// biases zero. `out_scale` multiplies the output adapter weights, which sets
// the spread of a freshly initialized generator.
Vec init_mlp(const MlpConfig& cfg, std::uint64_t seed, double out_scale = 1.0);

struct ValueTape {
  Tape tape;
  int x_slot = 0;
  int out = -1;
};

struct ScoreTape {
  Tape tape;
  int x_slot = 0;
  int value = -1;
  int score = -1;  // vector node: d(value)/d(x)
};

// Loss per sample: || d s(y)/d y + t ||^2 with y bound to slot 0 and the
// noise target t = eta/sigma^2 bound to slot 1.
struct DdeLossTape {
  Tape tape;
  int x_slot = 0;
  int target_slot = 1;
  int loss = -1;
  int score = -1;
  int value = -1;
};

ValueTape build_mlp_value_tape(const MlpConfig& cfg);
ScoreTape build_mlp_score_tape(const MlpConfig& cfg);
DdeLossTape build_dde_loss_tape(const MlpConfig& cfg);

}  // namespace dde
