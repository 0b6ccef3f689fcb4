#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dde/dataset.hpp"
#include "dde/errors.hpp"
#include "dde/network.hpp"
#include "dde/samplers.hpp"
#include "oracles.hpp"

using namespace dde;

namespace {

GeneratorModel identity_generator() {
  MlpConfig cfg;
  cfg.in_dim = 2;
  cfg.out_dim = 2;
  cfg.layers = 1;
  cfg.channels = 2;
  const MlpLayout lt = mlp_layout(cfg);
  Vec params(static_cast<std::size_t>(lt.total), 0.0);
  params[static_cast<std::size_t>(lt.w_in)] = 1.0;
  params[static_cast<std::size_t>(lt.w_in) + 3] = 1.0;
  params[static_cast<std::size_t>(lt.w_out)] = 1.0;
  params[static_cast<std::size_t>(lt.w_out) + 3] = 1.0;
  return GeneratorModel(cfg, params);
}

MixtureEnergy smoothed_gaussian_oracle() {
  // data N(0, I), noise sigma 0.5: smoothed density N(0, 1.25 I)
  MixtureSpec spec;
  spec.dim = 2;
  spec.std = std::sqrt(1.25);
  spec.means = {0.0, 0.0};
  return MixtureEnergy(spec);
}

struct ExplodingEnergy : Energy {
  int dim() const override { return 2; }
  void eval(const double* xs, int rows, double* values, double* scores) const override {
    if (values)
      for (int i = 0; i < rows; ++i) values[i] = 0.0;
    if (scores)
      for (int i = 0; i < rows * 2; ++i) scores[i] = 1e5 * (xs[i] >= 0 ? 1.0 : -1.0) + 1e4 * xs[i];
  }
};

AldConfig basic_ald(double sigma, int steps, double base, std::uint64_t seed) {
  AldConfig cfg;
  cfg.sigma_levels = {sigma};
  cfg.steps_per_level = steps;
  cfg.step_size_base = base;
  cfg.seed = seed;
  cfg.init_lo = {-2.0, -2.0};
  cfg.init_hi = {2.0, 2.0};
  return cfg;
}

}  // namespace

TEST_CASE("direct sampling through the identity map is standard normal") {
  GeneratorModel gen = identity_generator();
  const int n = 100000;
  Vec s = sample_direct(gen, n, 31);
  auto m = oracle::fit_moments(s, n, 2);
  CHECK(std::abs(m.mean[0]) < 0.05);
  CHECK(std::abs(m.mean[1]) < 0.05);
  double frob = 0.0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const double want = a == b ? 1.0 : 0.0;
      frob += (m.cov[static_cast<std::size_t>(a) * 2 + b] - want) *
              (m.cov[static_cast<std::size_t>(a) * 2 + b] - want);
    }
  CHECK(std::sqrt(frob) < 0.05);
}

TEST_CASE("direct sampling contracts") {
  GeneratorModel gen = identity_generator();
  CHECK_THROWS_AS(sample_direct(gen, 0, 1), ConfigError);
  Vec a = sample_direct(gen, 512, 7);
  Vec b = sample_direct(gen, 512, 7);
  Vec c = sample_direct(gen, 512, 8);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("langevin chains converge to the oracle covariance") {
  MixtureEnergy oracle_energy = smoothed_gaussian_oracle();
  AldConfig cfg = basic_ald(0.5, 200, 0.05, 3);
  const int n = 2000;
  AldReport rep = sample_ald(oracle_energy, cfg, n);
  CHECK(rep.label == "langevin");
  CHECK(rep.energy_evals == static_cast<long>(n) * 200);
  auto m = oracle::fit_moments(rep.samples, n, 2);
  CHECK(std::abs(m.mean[0]) < 0.1);
  CHECK(std::abs(m.mean[1]) < 0.1);
  CHECK(std::abs(m.cov[0] - 1.25) < 0.125);
  CHECK(std::abs(m.cov[3] - 1.25) < 0.125);
  CHECK(std::abs(m.cov[1]) < 0.1);
}

TEST_CASE("zero step size leaves chains at their initial states") {
  MixtureEnergy oracle_energy = smoothed_gaussian_oracle();
  AldConfig one = basic_ald(0.5, 1, 0.0, 11);
  AldConfig many = basic_ald(0.5, 50, 0.0, 11);
  AldReport r1 = sample_ald(oracle_energy, one, 64);
  AldReport r2 = sample_ald(oracle_energy, many, 64);
  CHECK(r1.samples == r2.samples);
  for (double v : r1.samples) {
    CHECK(v >= -2.0);
    CHECK(v <= 2.0);
  }
}

TEST_CASE("annealed ladder is labelled and scales its step sizes") {
  MixtureEnergy oracle_energy = smoothed_gaussian_oracle();
  AldConfig cfg = basic_ald(0.5, 20, 0.02, 5);
  cfg.sigma_levels = {1.0, 0.7, 0.5};
  AldReport rep = sample_ald(oracle_energy, cfg, 32);
  CHECK(rep.label == "ald");
  REQUIRE(rep.levels.size() == 3);
  CHECK(rep.levels[0].alpha == doctest::Approx(0.02 * 1.0 / 0.25));
  CHECK(rep.levels[2].alpha == doctest::Approx(0.02));
  CHECK(rep.energy_evals == 32L * 3 * 20);
}

TEST_CASE("diverging chains raise a numeric error naming the level") {
  ExplodingEnergy bad;
  AldConfig cfg = basic_ald(0.5, 400, 1.0, 13);
  try {
    sample_ald(bad, cfg, 8);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("level") != std::string::npos);
  }
}

TEST_CASE("ald config validation") {
  MixtureEnergy oracle_energy = smoothed_gaussian_oracle();
  AldConfig cfg = basic_ald(0.5, 10, 0.05, 1);
  cfg.sigma_levels = {0.5, 0.5};
  CHECK_THROWS_AS(sample_ald(oracle_energy, cfg, 8), ConfigError);
  cfg.sigma_levels = {0.5, -0.1};
  CHECK_THROWS_AS(sample_ald(oracle_energy, cfg, 8), ConfigError);
  cfg = basic_ald(0.5, 10, 0.05, 1);
  cfg.init_lo = {-2.0};
  CHECK_THROWS_AS(sample_ald(oracle_energy, cfg, 8), ConfigError);
  cfg = basic_ald(0.5, 10, 0.05, 1);
  CHECK_THROWS_AS(sample_ald(oracle_energy, cfg, 0), ConfigError);
}
