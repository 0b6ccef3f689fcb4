#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dde/errors.hpp"
#include "dde/evaluation.hpp"
#include "dde/generator.hpp"
#include "dde/rng.hpp"
#include "oracles.hpp"

using namespace dde;

namespace {

MixtureEnergy std_normal_energy() {
  MixtureSpec spec;
  spec.dim = 2;
  spec.std = 1.0;
  spec.means = {0.0, 0.0};
  return MixtureEnergy(spec);
}

// base energy plus an additive constant (scores untouched)
struct ShiftedEnergy : Energy {
  const Energy* base;
  double c;
  ShiftedEnergy(const Energy& b, double shift) : base(&b), c(shift) {}
  int dim() const override { return base->dim(); }
  void eval(const double* xs, int rows, double* values, double* scores) const override {
    base->eval(xs, rows, values, scores);
    if (values)
      for (int i = 0; i < rows; ++i) values[i] += c;
  }
};

struct MinusInfEnergy : Energy {
  int dim() const override { return 2; }
  void eval(const double* /*xs*/, int rows, double* values, double* scores) const override {
    if (values)
      for (int i = 0; i < rows; ++i) values[i] = -std::numeric_limits<double>::infinity();
    if (scores)
      for (int i = 0; i < rows * 2; ++i) scores[i] = 0.0;
  }
};

GaussianProposal iso_proposal(double mean, double var, int d) {
  GaussianProposal p;
  p.mean.assign(static_cast<std::size_t>(d), mean);
  p.cov.assign(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) p.cov[static_cast<std::size_t>(i) * d + i] = var;
  return p;
}

std::string temp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("density grid peaks at the center for a radial energy") {
  MixtureEnergy e = std_normal_energy();
  DensityGrid g = density_grid(e, {-2.0, 2.0}, {-2.0, 2.0}, 21, 21);
  std::size_t best = 0;
  for (std::size_t i = 0; i < g.values.size(); ++i)
    if (g.values[i] > g.values[best]) best = i;
  CHECK(best == static_cast<std::size_t>(10 * 21 + 10));  // central cell
  CHECK(g.center_x(10) == doctest::Approx(0.0));

  DensityGrid tiny = density_grid(e, {-1.0, 1.0}, {-1.0, 1.0}, 1, 1);
  CHECK(tiny.values.size() == 1);
  CHECK(tiny.values[0] == doctest::Approx(e.value_at(Vec{0.0, 0.0})));
}

TEST_CASE("log partition: normalized energy gives zero") {
  MixtureEnergy e = std_normal_energy();
  LogZEstimate z = estimate_log_partition(e, iso_proposal(0.0, 1.2, 2), 51200, 5, 7);
  CHECK(std::abs(z.log_z) < 0.02);
  CHECK(z.variance < 1e-3);
  CHECK(z.repeats == 5);
}

TEST_CASE("log partition: -||x||^2/2 integrates to 2 pi") {
  MixtureEnergy base = std_normal_energy();
  // -||x||^2/2 = log N(x; 0, I) + log 2 pi
  ShiftedEnergy e(base, 1.8378770664093453);
  LogZEstimate z = estimate_log_partition(e, iso_proposal(0.0, 1.2, 2), 51200, 5, 7);
  CHECK(std::abs(z.log_z - 1.8378770664093453) < 0.02);
}

TEST_CASE("log partition: shifting the energy shifts log Z by the same amount") {
  MixtureEnergy base = std_normal_energy();
  ShiftedEnergy shifted(base, 3.75);
  LogZEstimate z0 = estimate_log_partition(base, iso_proposal(0.0, 1.2, 2), 8192, 4, 11);
  LogZEstimate z1 = estimate_log_partition(shifted, iso_proposal(0.0, 1.2, 2), 8192, 4, 11);
  CHECK(z1.log_z - z0.log_z == doctest::Approx(3.75).epsilon(1e-9));
}

TEST_CASE("log partition variance shrinks with sample count") {
  MixtureEnergy e = std_normal_energy();
  LogZEstimate small = estimate_log_partition(e, iso_proposal(0.3, 1.5, 2), 2000, 32, 13);
  LogZEstimate big = estimate_log_partition(e, iso_proposal(0.3, 1.5, 2), 4000, 32, 13);
  CHECK(small.variance / big.variance > 1.2);  // ~2 expected, statistical slack
}

TEST_CASE("log partition failure paths") {
  MinusInfEnergy bad;
  CHECK_THROWS_AS(estimate_log_partition(bad, iso_proposal(0.0, 1.0, 2), 100, 2, 1), NumericError);
  MixtureEnergy e = std_normal_energy();
  GaussianProposal notspd = iso_proposal(0.0, 1.0, 2);
  notspd.cov[0] = -1.0;
  CHECK_THROWS_AS(estimate_log_partition(e, notspd, 100, 2, 1), ConfigError);
  CHECK_THROWS_AS(estimate_log_partition(e, iso_proposal(0.0, 1.0, 2), 100, 1, 1), ConfigError);
}

TEST_CASE("average log likelihood of the true model is its entropy") {
  MixtureEnergy e = std_normal_energy();
  Dataset test;
  test.dim = 2;
  test.name = "test";
  RngStream rng(17, "ll", 0);
  const int n = 50000;
  test.points.resize(static_cast<std::size_t>(n) * 2);
  for (double& v : test.points) v = rng.next_gaussian();
  LogZEstimate z;
  z.log_z = 0.0;
  z.repeats = 2;
  const double ll = avg_log_likelihood(e, z, test);
  CHECK(std::abs(ll - (-2.8378770664093453)) < 0.02);

  // adding c to both the energy and log Z cancels exactly
  ShiftedEnergy shifted(e, 12.5);
  LogZEstimate z2 = z;
  z2.log_z = 12.5;
  CHECK(avg_log_likelihood(shifted, z2, test) == doctest::Approx(ll).epsilon(1e-12));

  Dataset empty;
  empty.dim = 2;
  CHECK_THROWS_AS(avg_log_likelihood(e, z, empty), ConfigError);
}

TEST_CASE("mode coverage: exact centers, collapse, and sampled mixtures") {
  MixtureGrid g = gaussian_mixture_grid(1, 5, 2.0, 0.1, 1);
  const int k = 25;

  Vec centers;
  for (int rep = 0; rep < 4; ++rep)
    for (int c = 0; c < k; ++c) {
      centers.push_back(g.spec.mean(c)[0]);
      centers.push_back(g.spec.mean(c)[1]);
    }
  ModeReport all = mode_coverage(centers, 4 * k, g.spec);
  CHECK(all.modes_hit == k);
  CHECK(all.total_modes == k);
  CHECK(all.reverse_kl == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(all.unassigned_fraction == 0.0);

  Vec one(static_cast<std::size_t>(100) * 2);
  for (int i = 0; i < 100; ++i) {
    one[static_cast<std::size_t>(i) * 2] = g.spec.mean(0)[0];
    one[static_cast<std::size_t>(i) * 2 + 1] = g.spec.mean(0)[1];
  }
  ModeReport collapsed = mode_coverage(one, 100, g.spec);
  CHECK(collapsed.modes_hit == 1);
  CHECK(collapsed.reverse_kl == doctest::Approx(3.2188758248682006).epsilon(1e-12));

  MixtureGrid sampled = gaussian_mixture_grid(100000, 5, 2.0, 0.1, 3);
  ModeReport rep = mode_coverage(sampled.data.points, sampled.data.size(), sampled.spec);
  CHECK(rep.modes_hit == k);
  CHECK(rep.reverse_kl < 0.01);
  CHECK(rep.unassigned_fraction < 0.02);
  long total = 0;
  for (long h : rep.histogram) total += h;
  CHECK(total + static_cast<long>(std::lround(rep.unassigned_fraction * rep.sample_count)) ==
        rep.sample_count);
}

TEST_CASE("grid csv and ppm outputs") {
  MixtureEnergy e = std_normal_energy();
  DensityGrid g = density_grid(e, {-1.0, 1.0}, {-1.0, 1.0}, 8, 6);

  const std::string csv = temp_file("dde_grid_test.csv");
  write_grid_csv(csv, g);
  std::ifstream in(csv);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 8 * 6 + 1);
  std::filesystem::remove(csv);

  const std::string ppm = temp_file("dde_grid_test.ppm");
  write_ppm_heatmap(ppm, g);
  std::ifstream pf(ppm, std::ios::binary);
  std::string magic;
  int w, h, maxv;
  pf >> magic >> w >> h >> maxv;
  CHECK(magic == "P6");
  CHECK(w == 8);
  CHECK(h == 6);
  CHECK(maxv == 255);
  pf.get();  // single whitespace after header
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 3);
  pf.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  CHECK(pf.gcount() == static_cast<std::streamsize>(bytes.size()));
  std::filesystem::remove(ppm);
}

TEST_CASE("cholesky helpers and closed-form gaussian kl") {
  Vec a{4.0, 2.0, 2.0, 3.0};
  Vec l;
  REQUIRE(cholesky(a, 2, l));
  CHECK(l[0] == doctest::Approx(2.0));
  // log det = log(4*3 - 2*2) = log 8
  CHECK(chol_log_det(l, 2) == doctest::Approx(std::log(8.0)).epsilon(1e-12));
  Vec b{1.0, 0.0}, x;
  chol_solve(l, 2, b, x);
  CHECK(4.0 * x[0] + 2.0 * x[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(2.0 * x[0] + 3.0 * x[1] == doctest::Approx(0.0).epsilon(1e-12));

  Vec m0{0.0, 0.0}, m1{1.0, 0.0};
  Vec id{1.0, 0.0, 0.0, 1.0};
  CHECK(gaussian_kl(m0, id, m1, id, 2) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(gaussian_kl(m0, id, m0, id, 2) == doctest::Approx(0.0).epsilon(1e-12));

  Vec notspd{1.0, 2.0, 2.0, 1.0};
  CHECK(cholesky(notspd, 2, l) == false);
}

TEST_CASE("grid input validation") {
  MixtureEnergy e = std_normal_energy();
  CHECK_THROWS_AS(density_grid(e, {1.0, -1.0}, {-1.0, 1.0}, 4, 4), ConfigError);
  CHECK_THROWS_AS(density_grid(e, {-1.0, 1.0}, {-1.0, 1.0}, 0, 4), ConfigError);
  MixtureSpec s3;
  s3.dim = 3;
  s3.std = 1.0;
  s3.means = {0.0, 0.0, 0.0};
  MixtureEnergy e3(s3);
  CHECK_THROWS_AS(density_grid(e3, {-1.0, 1.0}, {-1.0, 1.0}, 4, 4), ConfigError);
}
