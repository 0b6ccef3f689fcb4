#include "dde/network.hpp"

#include <cmath>

#include "dde/errors.hpp"
#include "dde/rng.hpp"

namespace dde {

void MlpConfig::validate() const {
  if (in_dim < 1 || out_dim < 1) throw ConfigError("mlp: in_dim/out_dim must be >= 1");
  if (layers < 1) throw ConfigError("mlp: layers must be >= 1");
  if (channels < 1) throw ConfigError("mlp: channels must be >= 1");
  if (activation != "softplus") throw ConfigError("mlp: unsupported activation " + activation);
}

MlpLayout mlp_layout(const MlpConfig& cfg) {
  cfg.validate();
  MlpLayout lt;
  int at = 0;
  const int ch = cfg.channels;
  lt.w_in = at;
  at += ch * cfg.in_dim;
  lt.b_in = at;
  at += ch;
  lt.blocks.resize(static_cast<std::size_t>(cfg.layers));
  for (auto& blk : lt.blocks) {
    blk.w1 = at;
    at += ch * ch;
    blk.b1 = at;
    at += ch;
    blk.w2 = at;
    at += ch * ch;
    blk.b2 = at;
    at += ch;
  }
  lt.w_out = at;
  at += cfg.out_dim * ch;
  lt.b_out = at;
  at += cfg.out_dim;
  lt.total = at;
  return lt;
}

Vec init_mlp(const MlpConfig& cfg, std::uint64_t seed, double out_scale) {
  const MlpLayout lt = mlp_layout(cfg);
  Vec p(static_cast<std::size_t>(lt.total), 0.0);
  RngStream rng(seed, "mlp-init", 0);
  auto fill = [&](int offset, int count, int fan_in, double extra = 1.0) {
    const double bound = extra / std::sqrt(static_cast<double>(fan_in));
    for (int i = 0; i < count; ++i)
      p[static_cast<std::size_t>(offset + i)] = rng.next_uniform(-bound, bound);
  };
  const int ch = cfg.channels;
  fill(lt.w_in, ch * cfg.in_dim, cfg.in_dim);
  for (const auto& blk : lt.blocks) {
    fill(blk.w1, ch * ch, ch);
    fill(blk.w2, ch * ch, ch);
  }
  fill(lt.w_out, cfg.out_dim * ch, ch, out_scale);
  return p;
}

namespace {

struct Emitted {
  int h = -1;  // hidden state node
};

// Shared body: emits the flat-parameter leaves and the residual trunk.
Emitted emit_mlp(Tape& tape, const MlpConfig& cfg, const MlpLayout& lt, int x) {
  const int ch = cfg.channels;
  int w_in = tape.param(lt.w_in, ch * cfg.in_dim);
  int b_in = tape.param(lt.b_in, ch);
  int h = tape.add(tape.matvec(w_in, x, ch, cfg.in_dim), b_in);
  for (const auto& blk : lt.blocks) {
    int w1 = tape.param(blk.w1, ch * ch);
    int b1 = tape.param(blk.b1, ch);
    int w2 = tape.param(blk.w2, ch * ch);
    int b2 = tape.param(blk.b2, ch);
    int u = tape.add(tape.matvec(w1, h, ch, ch), b1);
    int a = tape.softplus(u);
    int d = tape.add(tape.matvec(w2, a, ch, ch), b2);
    h = cfg.residual ? tape.add(h, d) : d;
  }
  Emitted e;
  int w_out = tape.param(lt.w_out, cfg.out_dim * ch);
  int b_out = tape.param(lt.b_out, cfg.out_dim);
  e.h = tape.add(tape.matvec(w_out, h, cfg.out_dim, ch), b_out);
  return e;
}

}  // namespace

ValueTape build_mlp_value_tape(const MlpConfig& cfg) {
  const MlpLayout lt = mlp_layout(cfg);
  ValueTape vt;
  int x = vt.tape.data(vt.x_slot, cfg.in_dim);
  vt.out = emit_mlp(vt.tape, cfg, lt, x).h;
  return vt;
}

ScoreTape build_mlp_score_tape(const MlpConfig& cfg) {
  if (cfg.out_dim != 1) throw ConfigError("score tape: network output must be scalar");
  const MlpLayout lt = mlp_layout(cfg);
  ScoreTape st;
  int x = st.tape.data(st.x_slot, cfg.in_dim);
  st.value = emit_mlp(st.tape, cfg, lt, x).h;
  st.score = st.tape.append_input_gradient(st.value, st.x_slot);
  return st;
}

DdeLossTape build_dde_loss_tape(const MlpConfig& cfg) {
  if (cfg.out_dim != 1) throw ConfigError("dde loss tape: network output must be scalar");
  const MlpLayout lt = mlp_layout(cfg);
  DdeLossTape lts;
  int x = lts.tape.data(lts.x_slot, cfg.in_dim);
  int target = lts.tape.data(lts.target_slot, cfg.in_dim);
  lts.value = emit_mlp(lts.tape, cfg, lt, x).h;
  lts.score = lts.tape.append_input_gradient(lts.value, lts.x_slot);
  int resid = lts.tape.add(lts.score, target);
  lts.loss = lts.tape.sum(lts.tape.square(resid));
  return lts;
}

}  // namespace dde
