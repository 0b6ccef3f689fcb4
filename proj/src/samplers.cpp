#include "dde/samplers.hpp"

#include <cmath>

#include "dde/errors.hpp"
#include "dde/rng.hpp"

namespace dde {

void AldConfig::validate(int dim) const {
  if (sigma_levels.empty()) throw ConfigError("ald: at least one sigma level required");
  for (std::size_t i = 0; i < sigma_levels.size(); ++i) {
    if (sigma_levels[i] <= 0.0) throw ConfigError("ald: sigma levels must be positive");
    if (i > 0 && sigma_levels[i] >= sigma_levels[i - 1])
      throw ConfigError("ald: sigma levels must be strictly decreasing");
  }
  if (steps_per_level < 1) throw ConfigError("ald: steps_per_level must be >= 1");
  if (step_size_base < 0.0) throw ConfigError("ald: step_size_base must be >= 0");
  if (static_cast<int>(init_lo.size()) != dim || static_cast<int>(init_hi.size()) != dim)
    throw ConfigError("ald: init box must match the data dimension");
  for (int j = 0; j < dim; ++j)
    if (init_hi[static_cast<std::size_t>(j)] < init_lo[static_cast<std::size_t>(j)])
      throw ConfigError("ald: init box is empty");
}

Vec sample_direct(const GeneratorModel& gen, int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample_direct: n must be >= 1");
  const int m = gen.latent_dim();
  RngStream rng(seed, "direct-z", 0);
  Vec z(static_cast<std::size_t>(n) * m);
  for (double& v : z) v = rng.next_gaussian();
  return gen.forward_batch(z, n);
}

AldReport sample_ald(const Energy& energy, const AldConfig& cfg, int n) {
  const Energy* one = &energy;
  std::vector<const Energy*> per_level(cfg.sigma_levels.size(), one);
  return sample_ald(std::span<const Energy* const>(per_level.data(), per_level.size()), cfg, n);
}

AldReport sample_ald(std::span<const Energy* const> per_level, const AldConfig& cfg, int n) {
  if (per_level.empty()) throw ConfigError("ald: no energies given");
  const int dim = per_level[0]->dim();
  cfg.validate(dim);
  if (per_level.size() != cfg.sigma_levels.size())
    throw ConfigError("ald: one energy per sigma level required");
  for (const Energy* e : per_level)
    if (e->dim() != dim) throw ConfigError("ald: level energies disagree on dimension");
  if (n < 1) throw ConfigError("ald: n must be >= 1");

  AldReport rep;
  rep.label = cfg.sigma_levels.size() == 1 ? "langevin" : "ald";
  rep.samples.resize(static_cast<std::size_t>(n) * dim);

  std::vector<RngStream> chains;
  chains.reserve(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) chains.emplace_back(cfg.seed, "ald-chain", static_cast<std::uint64_t>(c));
  for (int c = 0; c < n; ++c)
    for (int j = 0; j < dim; ++j)
      rep.samples[static_cast<std::size_t>(c) * dim + j] =
          chains[static_cast<std::size_t>(c)].next_uniform(cfg.init_lo[static_cast<std::size_t>(j)],
                                                           cfg.init_hi[static_cast<std::size_t>(j)]);

  const double sigma_last = cfg.sigma_levels.back();
  Vec scores(static_cast<std::size_t>(n) * dim);
  for (std::size_t level = 0; level < cfg.sigma_levels.size(); ++level) {
    const double sigma = cfg.sigma_levels[level];
    const double alpha = cfg.step_size_base * (sigma * sigma) / (sigma_last * sigma_last);
    const double half = 0.5 * alpha;
    const double noise = std::sqrt(alpha);
    rep.levels.push_back(AldReport::Level{sigma, alpha, cfg.steps_per_level});
    for (int s = 0; s < cfg.steps_per_level; ++s) {
      per_level[level]->eval(rep.samples.data(), n, nullptr, scores.data());
      rep.energy_evals += n;
      for (int c = 0; c < n; ++c) {
        RngStream& rng = chains[static_cast<std::size_t>(c)];
        double norm2 = 0.0;
        for (int j = 0; j < dim; ++j) {
          double& x = rep.samples[static_cast<std::size_t>(c) * dim + j];
          x += half * scores[static_cast<std::size_t>(c) * dim + j] + noise * rng.next_gaussian();
          norm2 += x * x;
        }
        if (!(norm2 < 1e12))
          throw NumericError("ald: chain diverged at level " + std::to_string(level));
      }
    }
  }
  return rep;
}

}  // namespace dde
