#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dde/adam.hpp"
#include "dde/dataset.hpp"
#include "dde/model.hpp"
#include "dde/rng.hpp"

namespace dde {

struct LrDecay {
  double factor = 1.0;   // lr <- lr / factor
  long every_steps = 0;  // 0 disables decay
};

struct DdeTrainConfig {
  int batch_size = 2048;
  long steps = 20000;
  double lr = 2.5e-4;
  LrDecay lr_decay;
  double sigma_start = 0.1;
  double sigma_end = 0.1;
  double sigma_decay_factor = 1.1;  // sigma <- sigma / factor
  long sigma_decay_every = 0;       // 0 keeps sigma fixed at sigma_start
  std::uint64_t seed = 1;

  void validate() const;
};

// Geometric decay clamped at sigma_end; non-increasing by construction.
double dde_sigma_at(const DdeTrainConfig& cfg, long step);
double dde_lr_at(const DdeTrainConfig& cfg, long step);

struct TraceRow {
  long step = 0;
  double sigma = 0.0;
  double loss = 0.0;
  double lr = 0.0;
};

// Monte-Carlo mean of ||d s(x+eta)/dx + eta/sigma^2||^2 with the noise
// supplied explicitly (one draw per sample). The rng overload draws it.
double dde_loss_given_noise(const DdeModel& model, std::span<const double> xs, int rows,
                            std::span<const double> etas, double sigma, int threads = 1);
double dde_loss(const DdeModel& model, std::span<const double> xs, int rows, double sigma,
                RngStream& rng, int threads = 1);

GradReport dde_loss_grad_given_noise(const DdeModel& model, std::span<const double> xs,
                                     int rows, std::span<const double> etas, double sigma,
                                     int threads = 1);

// One optimizer update; returns the loss before the update.
double dde_train_step(DdeModel& model, std::span<const double> xs, int rows, double sigma,
                      double lr, AdamState& opt, RngStream& rng, int threads = 1);

struct DdeResumeState {
  Vec params;
  AdamState opt;
  long step = 0;
};

struct DdeTrainResult {
  DdeModel model;
  AdamState opt;
  std::vector<TraceRow> trace;
};

// Full training loop. Batches are sampled with replacement from `data`; the
// noise draw and batch selection for step t come from streams derived from
// (cfg.seed, purpose, t), which makes a resumed run bit-identical to an
// uninterrupted one.
DdeTrainResult train_dde(const Dataset& data, const MlpConfig& net, const DdeTrainConfig& cfg,
                         int threads = 1, const DdeResumeState* resume = nullptr);

// Unnormalized log density: s(x), meaningful up to one additive constant.
double log_density_unnormalized(const DdeModel& model, std::span<const double> x);

// Single denoising step: x + sigma_eta^2 * score(x).
Vec denoise(const DdeModel& model, std::span<const double> x);

}  // namespace dde
