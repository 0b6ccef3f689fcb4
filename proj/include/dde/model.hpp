#pragma once

#include <memory>
#include <span>

#include "dde/network.hpp"
#include "dde/tape.hpp"

namespace dde {

// Anything exposing an unnormalized log-density and its input gradient.
// Implementations must be safe for concurrent read-only use.
struct Energy {
  virtual ~Energy() = default;
  virtual int dim() const = 0;
  // xs: rows x dim row-major. values: rows (may be null). scores: rows x dim
  // (may be null).
  virtual void eval(const double* xs, int rows, double* values, double* scores) const = 0;

  double value_at(std::span<const double> x) const;
  Vec score_at(std::span<const double> x) const;
};

// Scalar energy network s(x; theta) trained at noise level sigma_eta.
// s approximates the log of the noise-smoothed data density up to an
// additive constant, so only differences of values are meaningful.
class DdeModel : public Energy {
 public:
  DdeModel(MlpConfig cfg, Vec params, double sigma_eta);

  int dim() const override { return cfg_.in_dim; }
  void eval(const double* xs, int rows, double* values, double* scores) const override;

  double forward(std::span<const double> x) const;
  Vec score(std::span<const double> x) const;

  const MlpConfig& config() const { return cfg_; }
  const Vec& params() const { return params_; }
  Vec& mutable_params() { return params_; }
  double sigma_eta() const { return sigma_eta_; }

  const ValueTape& value_tape() const { return *value_tape_; }
  const ScoreTape& score_tape() const { return *score_tape_; }
  const DdeLossTape& loss_tape() const { return *loss_tape_; }

 private:
  MlpConfig cfg_;
  Vec params_;
  double sigma_eta_;
  std::shared_ptr<const ValueTape> value_tape_;
  std::shared_ptr<const ScoreTape> score_tape_;
  std::shared_ptr<const DdeLossTape> loss_tape_;
};

// Latent-to-data mapping x = g(z; phi). Sampling never adds noise here; the
// smoothing noise is applied by callers where the training objective needs it.
class GeneratorModel {
 public:
  GeneratorModel(MlpConfig cfg, Vec params);

  int latent_dim() const { return cfg_.in_dim; }
  int data_dim() const { return cfg_.out_dim; }

  Vec forward(std::span<const double> z) const;
  // zs: rows x latent_dim; returns rows x data_dim.
  Vec forward_batch(std::span<const double> zs, int rows) const;

  const MlpConfig& config() const { return cfg_; }
  const Vec& params() const { return params_; }
  Vec& mutable_params() { return params_; }
  const ValueTape& value_tape() const { return *value_tape_; }

 private:
  MlpConfig cfg_;
  Vec params_;
  std::shared_ptr<const ValueTape> value_tape_;
};

}  // namespace dde
