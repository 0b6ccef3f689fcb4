#include "dde/model.hpp"

#include <cstring>

#include "dde/errors.hpp"

namespace dde {

double Energy::value_at(std::span<const double> x) const {
  double v = 0.0;
  eval(x.data(), 1, &v, nullptr);
  return v;
}

Vec Energy::score_at(std::span<const double> x) const {
  Vec s(static_cast<std::size_t>(dim()));
  eval(x.data(), 1, nullptr, s.data());
  return s;
}

DdeModel::DdeModel(MlpConfig cfg, Vec params, double sigma_eta)
    : cfg_(std::move(cfg)), params_(std::move(params)), sigma_eta_(sigma_eta) {
  cfg_.validate();
  if (cfg_.out_dim != 1) throw ConfigError("DdeModel: network must be scalar-valued");
  if (sigma_eta_ <= 0.0) throw ConfigError("DdeModel: sigma_eta must be positive");
  const MlpLayout lt = mlp_layout(cfg_);
  if (static_cast<int>(params_.size()) != lt.total)
    throw ConfigError("DdeModel: parameter vector does not match the layout");
  value_tape_ = std::make_shared<const ValueTape>(build_mlp_value_tape(cfg_));
  score_tape_ = std::make_shared<const ScoreTape>(build_mlp_score_tape(cfg_));
  loss_tape_ = std::make_shared<const DdeLossTape>(build_dde_loss_tape(cfg_));
}

void DdeModel::eval(const double* xs, int rows, double* values, double* scores) const {
  if (rows <= 0) throw ConfigError("DdeModel::eval: empty batch");
  const int n = cfg_.in_dim;
  const BatchView bv{xs, rows, n};
  if (scores == nullptr) {
    const Tape& tape = value_tape_->tape;
    TapeRunner runner(tape, std::min(shard_rows_for(rows), rows));
    const int shard = runner.max_rows();
    for (int r0 = 0; r0 < rows; r0 += shard) {
      const int r = std::min(shard, rows - r0);
      runner.forward(params_, std::span<const BatchView>(&bv, 1), r, r0);
      if (values) std::memcpy(values + r0, runner.values(value_tape_->out), sizeof(double) * static_cast<std::size_t>(r));
    }
    return;
  }
  const Tape& tape = score_tape_->tape;
  TapeRunner runner(tape, std::min(shard_rows_for(rows), rows));
  const int shard = runner.max_rows();
  for (int r0 = 0; r0 < rows; r0 += shard) {
    const int r = std::min(shard, rows - r0);
    runner.forward(params_, std::span<const BatchView>(&bv, 1), r, r0);
    if (values)
      std::memcpy(values + r0, runner.values(score_tape_->value), sizeof(double) * static_cast<std::size_t>(r));
    std::memcpy(scores + static_cast<std::size_t>(r0) * n, runner.values(score_tape_->score),
                sizeof(double) * static_cast<std::size_t>(r) * n);
  }
}

double DdeModel::forward(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != cfg_.in_dim)
    throw ConfigError("DdeModel::forward: dimension mismatch");
  return value_at(x);
}

Vec DdeModel::score(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != cfg_.in_dim)
    throw ConfigError("DdeModel::score: dimension mismatch");
  return score_at(x);
}

GeneratorModel::GeneratorModel(MlpConfig cfg, Vec params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
  const MlpLayout lt = mlp_layout(cfg_);
  if (static_cast<int>(params_.size()) != lt.total)
    throw ConfigError("GeneratorModel: parameter vector does not match the layout");
  value_tape_ = std::make_shared<const ValueTape>(build_mlp_value_tape(cfg_));
}

Vec GeneratorModel::forward(std::span<const double> z) const {
  if (static_cast<int>(z.size()) != cfg_.in_dim)
    throw ConfigError("GeneratorModel::forward: dimension mismatch");
  return forward_batch(z, 1);
}

Vec GeneratorModel::forward_batch(std::span<const double> zs, int rows) const {
  if (rows <= 0) throw ConfigError("GeneratorModel: empty batch");
  if (static_cast<int>(zs.size()) != rows * cfg_.in_dim)
    throw ConfigError("GeneratorModel: batch size mismatch");
  const BatchView bv{zs.data(), rows, cfg_.in_dim};
  return evaluate(value_tape_->tape, value_tape_->out, params_,
                  std::span<const BatchView>(&bv, 1));
}

}  // namespace dde
