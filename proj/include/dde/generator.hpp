#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dde/adam.hpp"
#include "dde/dataset.hpp"
#include "dde/dde_train.hpp"
#include "dde/model.hpp"

namespace dde {

struct GenTrainConfig {
  double gen_lr = 1e-4;
  int dde_inner_steps = 10;
  double dde_lr = 2.5e-4;
  int batch_size = 2048;
  long outer_steps = 2000;
  int latent_dim = 2;
  double sigma_eta = 0.1;
  std::uint64_t seed = 1;
  long checkpoint_every = 200;
  long q_init_steps = 500;         // fits the q-DDE to the fresh generator
  double init_output_scale = 1.0;  // spread of the initial generator output

  void validate() const;
};

// Target descriptor for the per-checkpoint KL diagnostic.
struct DiagnosticTarget {
  enum class Kind { kGaussian, kMixture, kDataMoments };
  Kind kind = Kind::kGaussian;
  Vec mean;            // Gaussian / data moments
  Vec cov;             // row-major dim x dim
  MixtureSpec mixture; // mode-histogram targets
};

struct DiagnosticResult {
  double kl = 0.0;
  bool regularized = false;  // fitted covariance needed a 1e-6 I bump
};

// For Gaussian-style targets: closed-form KL(fit || target) with the fit
// being the moment-matched Gaussian of the samples. For mixture targets:
// reverse KL of the mode histogram against uniform.
DiagnosticResult reverse_kl_diagnostic(std::span<const double> samples, int rows, int dim,
                                       const DiagnosticTarget& target);

struct GeneratorLossReport {
  double value = 0.0;
  Vec phi_grad;
};

// Reverse-KL surrogate: mean over the batch of s_q(g(z)+eta) - s_p(g(z)+eta),
// differentiated with respect to the generator parameters only. Both energies
// are frozen inside this op; their additive constants never reach the
// gradient because only their input gradients enter it.
GeneratorLossReport generator_loss(const GeneratorModel& gen, const Energy& q_energy,
                                   const Energy& p_energy, std::span<const double> zs,
                                   std::span<const double> etas, int rows, int threads = 1);

struct GenTrainState {
  GeneratorModel generator;
  DdeModel q_dde;
  long step = 0;
  AdamState gen_opt;
  AdamState q_opt;
};

// One descent step on the generator (Algorithm line: phi <- phi - delta * grad).
// Draws z and eta from streams derived from (cfg.seed, purpose, state.step).
// Returns the pre-update loss.
double generator_step(GenTrainState& state, const Energy& p_energy, const GenTrainConfig& cfg,
                      int threads = 1);

// dde_inner_steps updates of the q-DDE on fresh samples g(z) + eta from the
// current generator, warm-started from its previous parameters. Returns the
// last inner loss.
double refresh_q_dde(GenTrainState& state, const GenTrainConfig& cfg, int threads = 1);

struct GenTraceRow {
  long outer_step = 0;
  double gen_loss = 0.0;
  double q_dde_loss = 0.0;
  double diagnostic_kl = 0.0;
};

struct GenTrainResult {
  GeneratorModel generator;
  DdeModel q_dde;
  std::vector<GenTraceRow> trace;
};

// Optional warm start: continue from previously trained generator and q-DDE
// parameters instead of fresh initialization (used for staged noise
// schedules, where a smooth first stage settles mode balance and a sharper
// second stage refines sample placement).
struct GenWarmStart {
  Vec generator_params;
  Vec q_params;
};

// Full alternating loop: generator step, then q-DDE refresh, with the KL
// diagnostic recorded every checkpoint_every outer steps.
GenTrainResult train_generator(const Energy& p_energy, const MlpConfig& gen_net,
                               const MlpConfig& q_net, const GenTrainConfig& cfg,
                               const DiagnosticTarget* diag = nullptr, int threads = 1,
                               const GenWarmStart* warm = nullptr);

// Pre-trained-DDE entry point; enforces sigma_eta equality with the config.
GenTrainResult train_generator(const DdeModel& p_dde, const MlpConfig& gen_net,
                               const MlpConfig& q_net, const GenTrainConfig& cfg,
                               const DiagnosticTarget* diag = nullptr, int threads = 1,
                               const GenWarmStart* warm = nullptr);

// Moment fit helpers shared with the diagnostics.
void fit_gaussian(std::span<const double> samples, int rows, int dim, Vec& mean, Vec& cov);
double gaussian_kl(const Vec& mean0, const Vec& cov0, const Vec& mean1, const Vec& cov1, int dim);

}  // namespace dde
