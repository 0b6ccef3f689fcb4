#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dde/model.hpp"
#include "dde/tape.hpp"

namespace dde {

struct Standardization {
  Vec mean;
  Vec std;
};

struct Dataset {
  Vec points;  // row-major n x dim
  int dim = 0;
  std::string name;
  std::optional<Standardization> standardization;

  int size() const { return dim == 0 ? 0 : static_cast<int>(points.size()) / dim; }
  std::span<const double> row(int i) const {
    return {points.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
  }
};

// Equal-weight isotropic Gaussian mixture; the analytic ground truth for the
// mode-coverage experiments.
struct MixtureSpec {
  Vec means;  // row-major k x dim
  int dim = 0;
  double std = 1.0;

  int components() const { return dim == 0 ? 0 : static_cast<int>(means.size()) / dim; }
  std::span<const double> mean(int i) const {
    return {means.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
  }
};

// Two interleaved Archimedean spirals scaled into radius <= 2:
// t = 1.5*pi*(1 + 2u), arm A = (-t cos t, t sin t) * 2/(4.5*pi) + noise,
// arm B = -arm A, each point picking an arm with probability 1/2.
Dataset two_spirals(int n, double noise_std, std::uint64_t seed);

// Uniform over the 8 "on" unit squares of [-2,2]^2: square (i,j) with
// i,j in {0..3} is on iff (i+j) is even.
Dataset checkerboard(int n, std::uint64_t seed);

struct MixtureGrid {
  Dataset data;
  MixtureSpec spec;
};

// k_side^2 components on a centered square grid with the given spacing.
MixtureGrid gaussian_mixture_grid(int n, int k_side, double spacing, double std,
                                  std::uint64_t seed);

// Exact normalized log-density of the mixture; extra_var adds noise variance
// to every component (the smoothed density seen by a DDE trained at
// sigma_eta has extra_var = sigma_eta^2).
double mixture_log_density(const MixtureSpec& spec, std::span<const double> x,
                           double extra_var = 0.0);

// Energy adapter over a mixture: value = exact log density (+0 constant),
// score = its input gradient. Used as the analytic stand-in wherever an
// oracle density is required.
class MixtureEnergy : public Energy {
 public:
  MixtureEnergy(MixtureSpec spec, double extra_var = 0.0)
      : spec_(std::move(spec)), extra_var_(extra_var) {}
  int dim() const override { return spec_.dim; }
  void eval(const double* xs, int rows, double* values, double* scores) const override;
  const MixtureSpec& spec() const { return spec_; }

 private:
  MixtureSpec spec_;
  double extra_var_;
};

// Rectangular numeric CSV. A non-numeric first row is treated as a header and
// skipped. Ragged rows or non-numeric cells raise ConfigError naming the
// offending row/column.
Dataset load_csv(const std::string& path, bool standardize);

void save_csv(const std::string& path, std::span<const double> rows, int dim);

// Per-dimension zero mean / unit variance; records the transform.
void standardize_in_place(Dataset& ds);
Vec destandardize_row(const Dataset& ds, std::span<const double> x);

// min/max corners over all points, as (lo, hi) per dimension.
std::pair<Vec, Vec> bounding_box(const Dataset& ds);

Vec dataset_mean(const Dataset& ds);
// Dense covariance, row-major dim x dim.
Vec dataset_covariance(const Dataset& ds);

}  // namespace dde
