#include "dde/dde_train.hpp"

#include <cmath>

#include "dde/errors.hpp"

namespace dde {

void DdeTrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("dde train: batch_size must be >= 1");
  if (steps < 1) throw ConfigError("dde train: steps must be >= 1");
  if (lr <= 0.0) throw ConfigError("dde train: lr must be positive");
  if (sigma_end <= 0.0) throw ConfigError("dde train: sigma_end must be positive");
  if (sigma_start < sigma_end) throw ConfigError("dde train: sigma_start must be >= sigma_end");
  if (sigma_decay_every == 0 && sigma_start != sigma_end)
    throw ConfigError("dde train: sigma_decay_every = 0 requires sigma_start == sigma_end");
  if (sigma_decay_every > 0 && sigma_decay_factor <= 1.0 && sigma_start != sigma_end)
    throw ConfigError("dde train: sigma_decay_factor must exceed 1");
  if (lr_decay.every_steps > 0 && lr_decay.factor <= 0.0)
    throw ConfigError("dde train: lr decay factor must be positive");
}

double dde_sigma_at(const DdeTrainConfig& cfg, long step) {
  if (cfg.sigma_decay_every <= 0) return cfg.sigma_start;
  const double k = static_cast<double>(step / cfg.sigma_decay_every);
  const double s = cfg.sigma_start * std::pow(1.0 / cfg.sigma_decay_factor, k);
  return std::max(s, cfg.sigma_end);
}

double dde_lr_at(const DdeTrainConfig& cfg, long step) {
  if (cfg.lr_decay.every_steps <= 0) return cfg.lr;
  const double k = static_cast<double>(step / cfg.lr_decay.every_steps);
  return cfg.lr * std::pow(1.0 / cfg.lr_decay.factor, k);
}

namespace {

struct NoisyBatch {
  Vec noisy;    // x + eta
  Vec targets;  // eta / sigma^2
};

NoisyBatch make_noisy(std::span<const double> xs, int rows, std::span<const double> etas,
                      double sigma, int dim) {
  if (rows < 1) throw ConfigError("dde loss: empty batch");
  if (sigma <= 0.0) throw ConfigError("dde loss: sigma must be positive");
  if (static_cast<int>(xs.size()) != rows * dim) throw ConfigError("dde loss: batch size mismatch");
  if (etas.size() != xs.size()) throw ConfigError("dde loss: noise size mismatch");
  NoisyBatch nb;
  nb.noisy.resize(xs.size());
  nb.targets.resize(xs.size());
  const double inv_var = 1.0 / (sigma * sigma);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    nb.noisy[i] = xs[i] + etas[i];
    nb.targets[i] = etas[i] * inv_var;
  }
  return nb;
}

Vec draw_etas(int rows, int dim, double sigma, RngStream& rng) {
  Vec etas(static_cast<std::size_t>(rows) * dim);
  for (double& e : etas) e = sigma * rng.next_gaussian();
  return etas;
}

}  // namespace

double dde_loss_given_noise(const DdeModel& model, std::span<const double> xs, int rows,
                            std::span<const double> etas, double sigma, int threads) {
  const int dim = model.dim();
  const NoisyBatch nb = make_noisy(xs, rows, etas, sigma, dim);
  const DdeLossTape& lt = model.loss_tape();
  const BatchView slots[2] = {{nb.noisy.data(), rows, dim}, {nb.targets.data(), rows, dim}};
  const Vec values = evaluate(lt.tape, lt.loss, model.params(), slots);
  double acc = 0.0;
  for (int r = 0; r < rows; ++r) acc += values[static_cast<std::size_t>(r)];
  (void)threads;
  return acc / rows;
}

double dde_loss(const DdeModel& model, std::span<const double> xs, int rows, double sigma,
                RngStream& rng, int threads) {
  const Vec etas = draw_etas(rows, model.dim(), sigma, rng);
  return dde_loss_given_noise(model, xs, rows, etas, sigma, threads);
}

GradReport dde_loss_grad_given_noise(const DdeModel& model, std::span<const double> xs,
                                     int rows, std::span<const double> etas, double sigma,
                                     int threads) {
  const int dim = model.dim();
  const NoisyBatch nb = make_noisy(xs, rows, etas, sigma, dim);
  const DdeLossTape& lt = model.loss_tape();
  const BatchView slots[2] = {{nb.noisy.data(), rows, dim}, {nb.targets.data(), rows, dim}};
  return param_gradient_of_loss(lt.tape, lt.loss, model.params(), slots, threads);
}

double dde_train_step(DdeModel& model, std::span<const double> xs, int rows, double sigma,
                      double lr, AdamState& opt, RngStream& rng, int threads) {
  const Vec etas = draw_etas(rows, model.dim(), sigma, rng);
  GradReport g = dde_loss_grad_given_noise(model, xs, rows, etas, sigma, threads);
  adam_step(opt, model.mutable_params(), g.param_grads, lr);
  return g.value;
}

DdeTrainResult train_dde(const Dataset& data, const MlpConfig& net, const DdeTrainConfig& cfg,
                         int threads, const DdeResumeState* resume) {
  cfg.validate();
  net.validate();
  if (data.dim != net.in_dim) throw ConfigError("train_dde: dataset dimension mismatch");
  if (data.size() < 1) throw ConfigError("train_dde: empty dataset");

  Vec params = resume ? resume->params : init_mlp(net, cfg.seed);
  DdeModel model(net, std::move(params), dde_sigma_at(cfg, cfg.steps - 1));
  AdamState opt = resume ? resume->opt : AdamState(model.params().size());
  const long start = resume ? resume->step : 0;

  const int dim = data.dim;
  Vec batch(static_cast<std::size_t>(cfg.batch_size) * dim);
  std::vector<TraceRow> trace;
  trace.reserve(static_cast<std::size_t>(cfg.steps - start));

  for (long t = start; t < cfg.steps; ++t) {
    const double sigma = dde_sigma_at(cfg, t);
    const double lr = dde_lr_at(cfg, t);
    RngStream pick(cfg.seed, "dde-batch", static_cast<std::uint64_t>(t));
    for (int i = 0; i < cfg.batch_size; ++i) {
      const int idx = static_cast<int>(pick.next_index(static_cast<std::uint64_t>(data.size())));
      const double* src = data.points.data() + static_cast<std::size_t>(idx) * dim;
      std::copy(src, src + dim, batch.begin() + static_cast<std::size_t>(i) * dim);
    }
    RngStream noise(cfg.seed, "dde-noise", static_cast<std::uint64_t>(t));
    const double loss =
        dde_train_step(model, batch, cfg.batch_size, sigma, lr, opt, noise, threads);
    trace.push_back(TraceRow{t, sigma, loss, lr});
  }

  return DdeTrainResult{std::move(model), std::move(opt), std::move(trace)};
}

double log_density_unnormalized(const DdeModel& model, std::span<const double> x) {
  return model.forward(x);
}

Vec denoise(const DdeModel& model, std::span<const double> x) {
  Vec s = model.score(x);
  const double v = model.sigma_eta() * model.sigma_eta();
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = x[i] + v * s[i];
  return s;
}

}  // namespace dde
