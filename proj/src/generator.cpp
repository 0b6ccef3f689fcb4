#include "dde/generator.hpp"

#include <cmath>

#include "dde/errors.hpp"
#include "dde/evaluation.hpp"
#include "dde/rng.hpp"

namespace dde {

void GenTrainConfig::validate() const {
  if (gen_lr < 0.0) throw ConfigError("gen train: gen_lr must be >= 0");
  if (dde_inner_steps < 1) throw ConfigError("gen train: dde_inner_steps must be >= 1");
  if (dde_lr <= 0.0) throw ConfigError("gen train: dde_lr must be positive");
  if (batch_size < 1) throw ConfigError("gen train: batch_size must be >= 1");
  if (outer_steps < 1) throw ConfigError("gen train: outer_steps must be >= 1");
  if (latent_dim < 1) throw ConfigError("gen train: latent_dim must be >= 1");
  if (sigma_eta <= 0.0) throw ConfigError("gen train: sigma_eta must be positive");
  if (checkpoint_every < 1) throw ConfigError("gen train: checkpoint_every must be >= 1");
  if (q_init_steps < 0) throw ConfigError("gen train: q_init_steps must be >= 0");
}

void fit_gaussian(std::span<const double> samples, int rows, int dim, Vec& mean, Vec& cov) {
  mean.assign(static_cast<std::size_t>(dim), 0.0);
  cov.assign(static_cast<std::size_t>(dim) * dim, 0.0);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < dim; ++j) mean[static_cast<std::size_t>(j)] += samples[static_cast<std::size_t>(i) * dim + j];
  for (double& v : mean) v /= rows;
  for (int i = 0; i < rows; ++i)
    for (int a = 0; a < dim; ++a) {
      const double ca = samples[static_cast<std::size_t>(i) * dim + a] - mean[static_cast<std::size_t>(a)];
      for (int b = a; b < dim; ++b) {
        const double cb = samples[static_cast<std::size_t>(i) * dim + b] - mean[static_cast<std::size_t>(b)];
        cov[static_cast<std::size_t>(a) * dim + b] += ca * cb;
      }
    }
  const double denom = rows > 1 ? rows - 1 : 1;
  for (int a = 0; a < dim; ++a)
    for (int b = a; b < dim; ++b) {
      cov[static_cast<std::size_t>(a) * dim + b] /= denom;
      cov[static_cast<std::size_t>(b) * dim + a] = cov[static_cast<std::size_t>(a) * dim + b];
    }
}

double gaussian_kl(const Vec& mean0, const Vec& cov0, const Vec& mean1, const Vec& cov1, int d) {
  // KL(N0 || N1) = 0.5 (tr(S1^-1 S0) + (m1-m0)^T S1^-1 (m1-m0) - d + ln det S1 - ln det S0)
  Vec l0, l1;
  if (!cholesky(cov0, d, l0)) throw NumericError("gaussian_kl: fitted covariance not SPD");
  if (!cholesky(cov1, d, l1)) throw ConfigError("gaussian_kl: target covariance not SPD");
  double trace = 0.0;
  Vec col(static_cast<std::size_t>(d)), x;
  for (int c = 0; c < d; ++c) {
    for (int r = 0; r < d; ++r) col[static_cast<std::size_t>(r)] = cov0[static_cast<std::size_t>(r) * d + c];
    chol_solve(l1, d, col, x);
    trace += x[static_cast<std::size_t>(c)];
  }
  Vec diff(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) diff[static_cast<std::size_t>(i)] = mean1[static_cast<std::size_t>(i)] - mean0[static_cast<std::size_t>(i)];
  chol_solve(l1, d, diff, x);
  double quad = 0.0;
  for (int i = 0; i < d; ++i) quad += diff[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
  return 0.5 * (trace + quad - d + chol_log_det(l1, d) - chol_log_det(l0, d));
}

DiagnosticResult reverse_kl_diagnostic(std::span<const double> samples, int rows, int dim,
                                       const DiagnosticTarget& target) {
  if (rows < 2) throw ConfigError("reverse_kl_diagnostic: need at least two samples");
  DiagnosticResult res;
  if (target.kind == DiagnosticTarget::Kind::kMixture) {
    res.kl = mode_coverage(samples, rows, target.mixture).reverse_kl;
    return res;
  }
  Vec mean, cov;
  fit_gaussian(samples, rows, dim, mean, cov);
  Vec l;
  bool singular = !cholesky(cov, dim, l);
  if (!singular)
    for (int i = 0; i < dim; ++i) {
      const double pivot = l[static_cast<std::size_t>(i) * dim + i];
      singular = singular || pivot * pivot <= 1e-12;
    }
  if (singular) {
    for (int i = 0; i < dim; ++i) cov[static_cast<std::size_t>(i) * dim + i] += 1e-6;
    res.regularized = true;
  }
  res.kl = gaussian_kl(mean, cov, target.mean, target.cov, dim);
  return res;
}

GeneratorLossReport generator_loss(const GeneratorModel& gen, const Energy& q_energy,
                                   const Energy& p_energy, std::span<const double> zs,
                                   std::span<const double> etas, int rows, int threads) {
  const int m = gen.latent_dim();
  const int n = gen.data_dim();
  if (q_energy.dim() != n || p_energy.dim() != n)
    throw ConfigError("generator_loss: energy dimension mismatch");
  if (static_cast<int>(zs.size()) != rows * m) throw ConfigError("generator_loss: z batch mismatch");
  if (static_cast<int>(etas.size()) != rows * n) throw ConfigError("generator_loss: eta batch mismatch");

  Vec x = gen.forward_batch(zs, rows);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += etas[i];

  Vec vq(static_cast<std::size_t>(rows)), vp(static_cast<std::size_t>(rows));
  Vec gq(static_cast<std::size_t>(rows) * n), gp(static_cast<std::size_t>(rows) * n);
  q_energy.eval(x.data(), rows, vq.data(), gq.data());
  p_energy.eval(x.data(), rows, vp.data(), gp.data());

  GeneratorLossReport rep;
  for (int r = 0; r < rows; ++r) rep.value += vq[static_cast<std::size_t>(r)] - vp[static_cast<std::size_t>(r)];
  rep.value /= rows;
  if (!std::isfinite(rep.value)) throw NumericError("generator_loss: non-finite loss");

  // d loss / d phi = mean_r J_g(z_r)^T (score_q - score_p)(x_r)
  Vec seeds(static_cast<std::size_t>(rows) * n);
  const double inv = 1.0 / rows;
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = (gq[i] - gp[i]) * inv;
  const ValueTape& vt = gen.value_tape();
  const BatchView bv{zs.data(), rows, m};
  rep.phi_grad = vjp(vt.tape, vt.out, gen.params(), std::span<const BatchView>(&bv, 1), seeds, threads);
  for (double g : rep.phi_grad)
    if (!std::isfinite(g)) throw NumericError("generator_loss: non-finite gradient");
  return rep;
}

namespace {

double q_inner_step(GenTrainState& state, const GenTrainConfig& cfg, std::string_view z_tag,
                    std::string_view eta_tag, std::uint64_t index, int threads) {
  const int m = state.generator.latent_dim();
  RngStream zrng(cfg.seed, z_tag, index);
  Vec z(static_cast<std::size_t>(cfg.batch_size) * m);
  for (double& v : z) v = zrng.next_gaussian();
  const Vec x = state.generator.forward_batch(z, cfg.batch_size);
  RngStream nrng(cfg.seed, eta_tag, index);
  return dde_train_step(state.q_dde, x, cfg.batch_size, cfg.sigma_eta, cfg.dde_lr, state.q_opt,
                        nrng, threads);
}

}  // namespace

double generator_step(GenTrainState& state, const Energy& p_energy, const GenTrainConfig& cfg,
                      int threads) {
  const int m = state.generator.latent_dim();
  const int n = state.generator.data_dim();
  const auto t = static_cast<std::uint64_t>(state.step);
  RngStream zrng(cfg.seed, "gen-z", t);
  Vec z(static_cast<std::size_t>(cfg.batch_size) * m);
  for (double& v : z) v = zrng.next_gaussian();
  RngStream erng(cfg.seed, "gen-eta", t);
  Vec etas(static_cast<std::size_t>(cfg.batch_size) * n);
  for (double& v : etas) v = cfg.sigma_eta * erng.next_gaussian();

  GeneratorLossReport rep =
      generator_loss(state.generator, state.q_dde, p_energy, z, etas, cfg.batch_size, threads);
  adam_step(state.gen_opt, state.generator.mutable_params(), rep.phi_grad, cfg.gen_lr);
  return rep.value;
}

double refresh_q_dde(GenTrainState& state, const GenTrainConfig& cfg, int threads) {
  double loss = 0.0;
  const auto t = static_cast<std::uint64_t>(state.step);
  for (int j = 0; j < cfg.dde_inner_steps; ++j) {
    const std::uint64_t index = t * static_cast<std::uint64_t>(cfg.dde_inner_steps) + j;
    loss = q_inner_step(state, cfg, "q-z", "q-eta", index, threads);
  }
  return loss;
}

GenTrainResult train_generator(const Energy& p_energy, const MlpConfig& gen_net,
                               const MlpConfig& q_net, const GenTrainConfig& cfg,
                               const DiagnosticTarget* diag, int threads,
                               const GenWarmStart* warm) {
  cfg.validate();
  gen_net.validate();
  q_net.validate();
  const int n = p_energy.dim();
  if (gen_net.out_dim != n) throw ConfigError("train_generator: generator output dimension mismatch");
  if (gen_net.in_dim != cfg.latent_dim)
    throw ConfigError("train_generator: generator input must match latent_dim");
  if (q_net.in_dim != n || q_net.out_dim != 1)
    throw ConfigError("train_generator: q network must map data space to a scalar");

  std::uint64_t st;
  st = cfg.seed ^ fnv1a64("gen-init");
  const std::uint64_t gen_seed = splitmix64(st);
  st = cfg.seed ^ fnv1a64("q-init");
  const std::uint64_t q_seed = splitmix64(st);

  GenTrainState state{
      GeneratorModel(gen_net, warm ? warm->generator_params
                                   : init_mlp(gen_net, gen_seed, cfg.init_output_scale)),
      DdeModel(q_net, warm ? warm->q_params : init_mlp(q_net, q_seed), cfg.sigma_eta),
      0,
      AdamState(),
      AdamState()};

  for (long j = 0; j < cfg.q_init_steps; ++j)
    q_inner_step(state, cfg, "q-warm-z", "q-warm-eta", static_cast<std::uint64_t>(j), threads);

  std::vector<GenTraceRow> trace;
  double gen_loss = 0.0, q_loss = 0.0;
  for (long t = 0; t < cfg.outer_steps; ++t) {
    state.step = t;
    gen_loss = generator_step(state, p_energy, cfg, threads);
    q_loss = refresh_q_dde(state, cfg, threads);
    const bool at_checkpoint = (t + 1) % cfg.checkpoint_every == 0 || t + 1 == cfg.outer_steps;
    if (at_checkpoint) {
      GenTraceRow row{t + 1, gen_loss, q_loss, 0.0};
      if (diag) {
        const int diag_n = 10000;
        RngStream zrng(cfg.seed, "diag-z", static_cast<std::uint64_t>(t));
        Vec z(static_cast<std::size_t>(diag_n) * cfg.latent_dim);
        for (double& v : z) v = zrng.next_gaussian();
        const Vec samples = state.generator.forward_batch(z, diag_n);
        row.diagnostic_kl = reverse_kl_diagnostic(samples, diag_n, n, *diag).kl;
      }
      trace.push_back(row);
    }
  }

  return GenTrainResult{std::move(state.generator), std::move(state.q_dde), std::move(trace)};
}

GenTrainResult train_generator(const DdeModel& p_dde, const MlpConfig& gen_net,
                               const MlpConfig& q_net, const GenTrainConfig& cfg,
                               const DiagnosticTarget* diag, int threads,
                               const GenWarmStart* warm) {
  if (std::abs(p_dde.sigma_eta() - cfg.sigma_eta) > 1e-12)
    throw ConfigError("train_generator: sigma_eta of the pre-trained DDE and config must match");
  return train_generator(static_cast<const Energy&>(p_dde), gen_net, q_net, cfg, diag, threads,
                         warm);
}

}  // namespace dde
