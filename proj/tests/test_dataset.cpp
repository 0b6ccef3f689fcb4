#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dde/dataset.hpp"
#include "dde/errors.hpp"
#include "dde/rng.hpp"
#include "oracles.hpp"

using namespace dde;

namespace {

std::string temp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("two spirals: radius bound, determinism, arm balance") {
  const int n = 10000;
  Dataset ds = two_spirals(n, 0.05, 1);
  CHECK(ds.dim == 2);
  CHECK(ds.size() == n);

  // reference polyline of arm A; arm B is its negation
  const double pi = 3.14159265358979323846;
  const double scale = 2.0 / (4.5 * pi);
  const int curve_n = 2000;
  Vec curve(static_cast<std::size_t>(curve_n) * 2);
  for (int j = 0; j < curve_n; ++j) {
    const double t = 1.5 * pi + 3.0 * pi * j / (curve_n - 1);
    curve[static_cast<std::size_t>(j) * 2] = -t * std::cos(t) * scale;
    curve[static_cast<std::size_t>(j) * 2 + 1] = t * std::sin(t) * scale;
  }
  auto min_d2 = [&](double x, double y, double flip) {
    double best = 1e300;
    for (int j = 0; j < curve_n; ++j) {
      const double dx = x - flip * curve[static_cast<std::size_t>(j) * 2];
      const double dy = y - flip * curve[static_cast<std::size_t>(j) * 2 + 1];
      best = std::min(best, dx * dx + dy * dy);
    }
    return best;
  };

  int arm_a = 0;
  for (int i = 0; i < n; ++i) {
    auto r = ds.row(i);
    CHECK(std::sqrt(r[0] * r[0] + r[1] * r[1]) <= 2.2);
    if (min_d2(r[0], r[1], 1.0) < min_d2(r[0], r[1], -1.0)) ++arm_a;
  }
  // arms chosen with probability 1/2; binomial 4-sigma bound
  const double dev = std::abs(arm_a - n / 2.0);
  CHECK(dev <= 4.0 * std::sqrt(n / 4.0));

  Dataset ds2 = two_spirals(n, 0.05, 1);
  CHECK(ds.points == ds2.points);
  Dataset ds3 = two_spirals(n, 0.05, 2);
  CHECK(ds.points != ds3.points);
}

TEST_CASE("checkerboard: every sample satisfies the parity predicate") {
  const int n = 100000;
  Dataset ds = checkerboard(n, 3);
  std::vector<long> counts(16, 0);
  for (int i = 0; i < n; ++i) {
    auto r = ds.row(i);
    CHECK(r[0] >= -2.0);
    CHECK(r[0] < 2.0);
    CHECK(r[1] >= -2.0);
    CHECK(r[1] < 2.0);
    const int ci = static_cast<int>(std::floor(r[0] + 2.0));
    const int cj = static_cast<int>(std::floor(r[1] + 2.0));
    CHECK((ci + cj) % 2 == 0);
    counts[static_cast<std::size_t>(ci * 4 + cj)] += 1;
  }
  // uniform across the 8 on-squares: multinomial 4-sigma bounds
  const double expect = n / 8.0;
  const double sd = std::sqrt(n * (1.0 / 8.0) * (7.0 / 8.0));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const long c = counts[static_cast<std::size_t>(i * 4 + j)];
      if ((i + j) % 2 == 0) {
        CHECK(std::abs(c - expect) <= 4.0 * sd);
      } else {
        CHECK(c == 0);
      }
    }
}

TEST_CASE("gaussian grid: reduction, tails, occupancy") {
  // k_side = 1 is a plain Gaussian at the origin
  MixtureGrid g1 = gaussian_mixture_grid(20000, 1, 2.0, 0.5, 5);
  CHECK(g1.spec.components() == 1);
  auto m = oracle::fit_moments(g1.data.points, g1.data.size(), 2);
  CHECK(std::abs(m.mean[0]) < 0.02);
  CHECK(std::abs(m.mean[1]) < 0.02);
  CHECK(std::abs(m.cov[0] - 0.25) < 0.01);
  CHECK(std::abs(m.cov[3] - 0.25) < 0.01);

  const int n = 100000;
  MixtureGrid g = gaussian_mixture_grid(n, 5, 2.0, 0.1, 1);
  CHECK(g.spec.components() == 25);
  // centered grid at spacing 2: coordinates in {-4,-2,0,2,4}
  CHECK(g.spec.mean(0)[0] == doctest::Approx(-4.0));
  CHECK(g.spec.mean(24)[1] == doctest::Approx(4.0));

  std::vector<long> occupancy(25, 0);
  int within3 = 0, within35 = 0;
  for (int i = 0; i < n; ++i) {
    auto r = g.data.row(i);
    double best = 1e300;
    int best_c = -1;
    for (int c = 0; c < 25; ++c) {
      auto mu = g.spec.mean(c);
      const double d0 = r[0] - mu[0], d1 = r[1] - mu[1];
      if (d0 * d0 + d1 * d1 < best) {
        best = d0 * d0 + d1 * d1;
        best_c = c;
      }
    }
    occupancy[static_cast<std::size_t>(best_c)] += 1;
    if (best <= 9.0 * 0.01) ++within3;
    if (best <= 12.25 * 0.01) ++within35;
  }
  // 2D Gaussian tail: P(r <= k sigma) = 1 - exp(-k^2/2), so 98.89% within 3
  // sigma and 99.78% within 3.5 sigma.
  CHECK(within3 >= static_cast<int>(n * 0.985));
  CHECK(within3 <= static_cast<int>(n * 0.992));
  CHECK(within35 >= static_cast<int>(n * 0.99));
  const double expect = n / 25.0;
  const double sd = std::sqrt(n * (1.0 / 25.0) * (24.0 / 25.0));
  for (long c : occupancy) CHECK(std::abs(c - expect) <= 4.5 * sd);
}

TEST_CASE("mixture log density: normalizer, symmetry, smoothing") {
  MixtureSpec one;
  one.dim = 2;
  one.std = 1.0;
  one.means = {0.0, 0.0};
  Vec zero{0.0, 0.0};
  CHECK(mixture_log_density(one, zero) == doctest::Approx(-1.8378770664093453).epsilon(1e-12));

  MixtureGrid g = gaussian_mixture_grid(1, 3, 2.0, 0.2, 1);
  Vec a{2.0, 0.0}, b{-2.0, 0.0}, c{0.0, 2.0};
  CHECK(mixture_log_density(g.spec, a) == doctest::Approx(mixture_log_density(g.spec, b)).epsilon(1e-12));
  CHECK(mixture_log_density(g.spec, a) == doctest::Approx(mixture_log_density(g.spec, c)).epsilon(1e-12));

  // convolving with noise lowers the density at a mode center
  Vec mode{0.0, 0.0};
  CHECK(mixture_log_density(g.spec, mode, 0.09) < mixture_log_density(g.spec, mode));
}

TEST_CASE("mixture energy score matches finite differences") {
  MixtureGrid g = gaussian_mixture_grid(1, 2, 1.5, 0.4, 1);
  MixtureEnergy energy(g.spec, 0.25);
  RngStream rng(9, "mix-fd", 0);
  for (int rep = 0; rep < 5; ++rep) {
    Vec x{rng.next_gaussian(), rng.next_gaussian()};
    Vec sc = energy.score_at(x);
    auto f = [&](const Vec& p) { return energy.value_at(p); };
    Vec fd = oracle::fd_gradient(f, x, 1e-5);
    for (int i = 0; i < 2; ++i)
      CHECK(oracle::rel_err(sc[static_cast<std::size_t>(i)], fd[static_cast<std::size_t>(i)], 1e-8) < 1e-6);
  }
}

TEST_CASE("csv round trip is exact") {
  const std::string path = temp_file("dde_test_roundtrip.csv");
  Vec rows{1.5, -2.25, 0.0009765625, 3.0, 1e-17, -123456.789};
  save_csv(path, rows, 2);
  Dataset ds = load_csv(path, false);
  CHECK(ds.dim == 2);
  CHECK(ds.size() == 3);
  CHECK(ds.points == rows);
  std::filesystem::remove(path);
}

TEST_CASE("csv header detection, ragged rows, bad cells, empty file") {
  const std::string path = temp_file("dde_test_header.csv");
  {
    std::ofstream f(path);
    f << "x,y\n1.0,2.0\n3.0,4.0\n";
  }
  Dataset ds = load_csv(path, false);
  CHECK(ds.size() == 2);
  CHECK(ds.points == Vec{1.0, 2.0, 3.0, 4.0});

  {
    std::ofstream f(path);
    f << "1.0,2.0\n3.0\n";
  }
  CHECK_THROWS_WITH_AS(load_csv(path, false),
                       doctest::Contains("row 2"), ConfigError);

  {
    std::ofstream f(path);
    f << "1.0,2.0\n3.0,abc\n";
  }
  try {
    load_csv(path, false);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    CHECK(std::string(e.what()).find("col 2") != std::string::npos);
  }

  {
    std::ofstream f(path);
    f << "";
  }
  CHECK_THROWS_AS(load_csv(path, false), ConfigError);
  std::filesystem::remove(path);
}

TEST_CASE("standardization is exact in moments and invertible") {
  Dataset ds = two_spirals(5000, 0.1, 4);
  Dataset raw = ds;
  standardize_in_place(ds);
  REQUIRE(ds.standardization.has_value());
  auto m = oracle::fit_moments(ds.points, ds.size(), 2);
  CHECK(std::abs(m.mean[0]) < 1e-12);
  CHECK(std::abs(m.mean[1]) < 1e-12);
  // fit_moments uses n-1; construction uses n
  const double corr = static_cast<double>(ds.size() - 1) / ds.size();
  CHECK(std::abs(m.cov[0] * corr - 1.0) < 1e-9);
  CHECK(std::abs(m.cov[3] * corr - 1.0) < 1e-9);
  for (int i : {0, 17, 4999}) {
    Vec back = destandardize_row(ds, ds.row(i));
    CHECK(std::abs(back[0] - raw.row(i)[0]) < 1e-12);
    CHECK(std::abs(back[1] - raw.row(i)[1]) < 1e-12);
  }
}

TEST_CASE("bounding box and moments helpers") {
  Dataset ds;
  ds.dim = 2;
  ds.name = "tiny";
  ds.points = {0.0, 1.0, 2.0, -1.0, 4.0, 3.0};
  auto [lo, hi] = bounding_box(ds);
  CHECK(lo[0] == 0.0);
  CHECK(hi[0] == 4.0);
  CHECK(lo[1] == -1.0);
  CHECK(hi[1] == 3.0);
  Vec mu = dataset_mean(ds);
  CHECK(mu[0] == doctest::Approx(2.0));
  CHECK(mu[1] == doctest::Approx(1.0));
  Vec cov = dataset_covariance(ds);
  CHECK(cov[0] == doctest::Approx(4.0));  // var of {0,2,4} with n-1
}

TEST_CASE("size preconditions") {
  CHECK_THROWS_AS(two_spirals(0, 0.05, 1), ConfigError);
  CHECK_THROWS_AS(checkerboard(0, 1), ConfigError);
  CHECK_THROWS_AS(gaussian_mixture_grid(0, 5, 2.0, 0.1, 1), ConfigError);
  CHECK_THROWS_AS(gaussian_mixture_grid(10, 0, 2.0, 0.1, 1), ConfigError);
  CHECK_THROWS_AS(gaussian_mixture_grid(10, 2, 2.0, 0.0, 1), ConfigError);
}
