#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dde/dataset.hpp"
#include "dde/model.hpp"

namespace dde {

struct DensityGrid {
  double lo_x = 0, hi_x = 0, lo_y = 0, hi_y = 0;
  int res_x = 0, res_y = 0;
  Vec values;  // row-major, index = iy * res_x + ix, cell centers

  double center_x(int ix) const { return lo_x + (ix + 0.5) * (hi_x - lo_x) / res_x; }
  double center_y(int iy) const { return lo_y + (iy + 0.5) * (hi_y - lo_y) / res_y; }
};

// Rasterizes the energy at cell centers. Restricted to 2D models.
DensityGrid density_grid(const Energy& energy, std::pair<double, double> bounds_x,
                         std::pair<double, double> bounds_y, int res_x, int res_y);

struct GaussianProposal {
  Vec mean;
  Vec cov;  // row-major dim x dim; only the diagonal is used when `diagonal`
  bool diagonal = false;
};

struct LogZEstimate {
  double log_z = 0.0;
  int repeats = 0;
  long samples_per_repeat = 0;
  double variance = 0.0;  // variance of the averaged estimate across repeats
};

// Importance sampling of Z = E_{x~proposal}[exp(s(x)) / proposal(x)], carried
// out in log space (log-sum-exp). Each repeat uses its own derived stream;
// the reported estimate is the mean of the per-repeat estimates.
LogZEstimate estimate_log_partition(const Energy& energy, const GaussianProposal& proposal,
                                    long n_per, int repeats, std::uint64_t seed);

// Mean over the test set of s(x) - log_z. Standardization Jacobian
// corrections are the caller's concern.
double avg_log_likelihood(const Energy& energy, const LogZEstimate& log_z, const Dataset& test);

struct ModeReport {
  int modes_hit = 0;
  int total_modes = 0;
  std::vector<long> histogram;
  double reverse_kl = 0.0;
  double unassigned_fraction = 0.0;
  long sample_count = 0;
};

// Assigns each sample to its nearest mode when within radius_sigmas * std,
// then compares the normalized histogram against uniform (0 log 0 = 0).
ModeReport mode_coverage(std::span<const double> samples, int rows, const MixtureSpec& spec,
                         double radius_sigmas = 3.0);

// (x, y, s) rows, one per cell.
void write_grid_csv(const std::string& path, const DensityGrid& grid);

// Binary P6, 8-bit RGB, rows written top to bottom (decreasing y), values
// min-max normalized before color mapping.
void write_ppm_heatmap(const std::string& path, const DensityGrid& grid);

// Dense symmetric positive-definite helpers for the small covariances used
// in diagnostics and proposals.
bool cholesky(std::span<const double> a, int d, Vec& lower);
double chol_log_det(std::span<const double> lower, int d);
void chol_solve(std::span<const double> lower, int d, std::span<const double> b, Vec& x);

}  // namespace dde
