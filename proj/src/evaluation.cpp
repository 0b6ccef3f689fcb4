#include "dde/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>

#include "dde/errors.hpp"
#include "dde/rng.hpp"

namespace dde {

DensityGrid density_grid(const Energy& energy, std::pair<double, double> bounds_x,
                         std::pair<double, double> bounds_y, int res_x, int res_y) {
  if (energy.dim() != 2) throw ConfigError("density_grid: only 2D models are supported");
  if (res_x < 1 || res_y < 1) throw ConfigError("density_grid: resolution must be >= 1");
  if (bounds_x.second <= bounds_x.first || bounds_y.second <= bounds_y.first)
    throw ConfigError("density_grid: empty bounds");
  DensityGrid g;
  g.lo_x = bounds_x.first;
  g.hi_x = bounds_x.second;
  g.lo_y = bounds_y.first;
  g.hi_y = bounds_y.second;
  g.res_x = res_x;
  g.res_y = res_y;
  const long total = static_cast<long>(res_x) * res_y;
  Vec pts(static_cast<std::size_t>(total) * 2);
  for (int iy = 0; iy < res_y; ++iy)
    for (int ix = 0; ix < res_x; ++ix) {
      const std::size_t at = (static_cast<std::size_t>(iy) * res_x + ix) * 2;
      pts[at] = g.center_x(ix);
      pts[at + 1] = g.center_y(iy);
    }
  g.values.resize(static_cast<std::size_t>(total));
  energy.eval(pts.data(), static_cast<int>(total), g.values.data(), nullptr);
  for (double v : g.values)
    if (!std::isfinite(v)) throw NumericError("density_grid: non-finite energy value");
  return g;
}

bool cholesky(std::span<const double> a, int d, Vec& lower) {
  lower.assign(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j) {
      double acc = a[static_cast<std::size_t>(i) * d + j];
      for (int k = 0; k < j; ++k)
        acc -= lower[static_cast<std::size_t>(i) * d + k] * lower[static_cast<std::size_t>(j) * d + k];
      if (i == j) {
        if (acc <= 0.0) return false;
        lower[static_cast<std::size_t>(i) * d + j] = std::sqrt(acc);
      } else {
        lower[static_cast<std::size_t>(i) * d + j] = acc / lower[static_cast<std::size_t>(j) * d + j];
      }
    }
  }
  return true;
}

double chol_log_det(std::span<const double> lower, int d) {
  double acc = 0.0;
  for (int i = 0; i < d; ++i) acc += std::log(lower[static_cast<std::size_t>(i) * d + i]);
  return 2.0 * acc;
}

void chol_solve(std::span<const double> lower, int d, std::span<const double> b, Vec& x) {
  Vec y(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    double acc = b[static_cast<std::size_t>(i)];
    for (int k = 0; k < i; ++k) acc -= lower[static_cast<std::size_t>(i) * d + k] * y[static_cast<std::size_t>(k)];
    y[static_cast<std::size_t>(i)] = acc / lower[static_cast<std::size_t>(i) * d + i];
  }
  x.assign(static_cast<std::size_t>(d), 0.0);
  for (int i = d - 1; i >= 0; --i) {
    double acc = y[static_cast<std::size_t>(i)];
    for (int k = i + 1; k < d; ++k) acc -= lower[static_cast<std::size_t>(k) * d + i] * x[static_cast<std::size_t>(k)];
    x[static_cast<std::size_t>(i)] = acc / lower[static_cast<std::size_t>(i) * d + i];
  }
}

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct ProposalSampler {
  const GaussianProposal* prop;
  int d;
  Vec lower;        // Cholesky factor when dense
  Vec diag_std;     // when diagonal
  double log_norm;  // log of the proposal normalizer

  explicit ProposalSampler(const GaussianProposal& p) : prop(&p), d(static_cast<int>(p.mean.size())) {
    if (p.diagonal) {
      diag_std.resize(static_cast<std::size_t>(d));
      double ld = 0.0;
      for (int i = 0; i < d; ++i) {
        const double v = p.cov[static_cast<std::size_t>(i) * d + i];
        if (v <= 0.0) throw ConfigError("proposal: non-positive diagonal variance");
        diag_std[static_cast<std::size_t>(i)] = std::sqrt(v);
        ld += std::log(v);
      }
      log_norm = -0.5 * (d * std::log(kTwoPi) + ld);
    } else {
      if (!cholesky(p.cov, d, lower))
        throw ConfigError("proposal: covariance is not positive definite");
      log_norm = -0.5 * (d * std::log(kTwoPi) + chol_log_det(lower, d));
    }
  }

  void draw(RngStream& rng, double* x) const {
    if (prop->diagonal) {
      for (int i = 0; i < d; ++i)
        x[i] = prop->mean[static_cast<std::size_t>(i)] + diag_std[static_cast<std::size_t>(i)] * rng.next_gaussian();
      return;
    }
    Vec z(static_cast<std::size_t>(d));
    for (double& v : z) v = rng.next_gaussian();
    for (int i = 0; i < d; ++i) {
      double acc = prop->mean[static_cast<std::size_t>(i)];
      for (int k = 0; k <= i; ++k) acc += lower[static_cast<std::size_t>(i) * d + k] * z[static_cast<std::size_t>(k)];
      x[i] = acc;
    }
  }

  double log_density(const double* x) const {
    if (prop->diagonal) {
      double q = 0.0;
      for (int i = 0; i < d; ++i) {
        const double c = (x[i] - prop->mean[static_cast<std::size_t>(i)]) / diag_std[static_cast<std::size_t>(i)];
        q += c * c;
      }
      return log_norm - 0.5 * q;
    }
    Vec diff(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) diff[static_cast<std::size_t>(i)] = x[i] - prop->mean[static_cast<std::size_t>(i)];
    // Solve L y = diff; |y|^2 = diff^T Sigma^{-1} diff.
    Vec y(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
      double acc = diff[static_cast<std::size_t>(i)];
      for (int k = 0; k < i; ++k) acc -= lower[static_cast<std::size_t>(i) * d + k] * y[static_cast<std::size_t>(k)];
      y[static_cast<std::size_t>(i)] = acc / lower[static_cast<std::size_t>(i) * d + i];
    }
    double q = 0.0;
    for (int i = 0; i < d; ++i) q += y[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
    return log_norm - 0.5 * q;
  }
};

}  // namespace

LogZEstimate estimate_log_partition(const Energy& energy, const GaussianProposal& proposal,
                                    long n_per, int repeats, std::uint64_t seed) {
  if (n_per < 1) throw ConfigError("estimate_log_partition: n_per must be >= 1");
  if (repeats < 2) throw ConfigError("estimate_log_partition: repeats must be >= 2");
  const int d = energy.dim();
  if (static_cast<int>(proposal.mean.size()) != d)
    throw ConfigError("estimate_log_partition: proposal dimension mismatch");
  ProposalSampler sampler(proposal);

  const int chunk = 8192;
  Vec xs(static_cast<std::size_t>(chunk) * d);
  Vec svals(static_cast<std::size_t>(chunk));
  std::vector<double> estimates;
  estimates.reserve(static_cast<std::size_t>(repeats));

  for (int r = 0; r < repeats; ++r) {
    RngStream rng(seed, "logz-repeat", static_cast<std::uint64_t>(r));
    double max_w = -std::numeric_limits<double>::infinity();
    std::vector<double> weights;
    weights.reserve(static_cast<std::size_t>(n_per));
    long done = 0;
    while (done < n_per) {
      const int take = static_cast<int>(std::min<long>(chunk, n_per - done));
      for (int i = 0; i < take; ++i) sampler.draw(rng, xs.data() + static_cast<std::size_t>(i) * d);
      energy.eval(xs.data(), take, svals.data(), nullptr);
      for (int i = 0; i < take; ++i) {
        const double w = svals[static_cast<std::size_t>(i)] - sampler.log_density(xs.data() + static_cast<std::size_t>(i) * d);
        weights.push_back(w);
        max_w = std::max(max_w, w);
      }
      done += take;
    }
    if (!std::isfinite(max_w)) throw NumericError("estimate_log_partition: all weights are -inf");
    double acc = 0.0;
    for (double w : weights) acc += std::exp(w - max_w);
    estimates.push_back(max_w + std::log(acc / static_cast<double>(n_per)));
  }

  LogZEstimate est;
  est.repeats = repeats;
  est.samples_per_repeat = n_per;
  double mean = 0.0;
  for (double e : estimates) mean += e;
  mean /= repeats;
  double var = 0.0;
  for (double e : estimates) var += (e - mean) * (e - mean);
  var /= (repeats - 1);
  est.log_z = mean;
  est.variance = var / repeats;  // variance of the averaged estimate
  return est;
}

double avg_log_likelihood(const Energy& energy, const LogZEstimate& log_z, const Dataset& test) {
  if (test.size() < 1) throw ConfigError("avg_log_likelihood: empty test set");
  if (test.dim != energy.dim()) throw ConfigError("avg_log_likelihood: dimension mismatch");
  Vec svals(static_cast<std::size_t>(test.size()));
  energy.eval(test.points.data(), test.size(), svals.data(), nullptr);
  double acc = 0.0;
  for (double v : svals) acc += v;
  return acc / test.size() - log_z.log_z;
}

ModeReport mode_coverage(std::span<const double> samples, int rows, const MixtureSpec& spec,
                         double radius_sigmas) {
  if (radius_sigmas <= 0.0) throw ConfigError("mode_coverage: radius_sigmas must be positive");
  const int d = spec.dim;
  const int k = spec.components();
  if (static_cast<int>(samples.size()) != rows * d)
    throw ConfigError("mode_coverage: sample size mismatch");
  ModeReport rep;
  rep.total_modes = k;
  rep.sample_count = rows;
  rep.histogram.assign(static_cast<std::size_t>(k), 0);
  const double r2max = radius_sigmas * spec.std * radius_sigmas * spec.std;
  long assigned = 0;
  for (int i = 0; i < rows; ++i) {
    const double* x = samples.data() + static_cast<std::size_t>(i) * d;
    double best = 1e300;
    int best_c = -1;
    for (int c = 0; c < k; ++c) {
      auto mu = spec.mean(c);
      double q = 0.0;
      for (int j = 0; j < d; ++j) {
        const double dj = x[j] - mu[j];
        q += dj * dj;
      }
      if (q < best) {
        best = q;
        best_c = c;
      }
    }
    if (best <= r2max) {
      rep.histogram[static_cast<std::size_t>(best_c)] += 1;
      ++assigned;
    }
  }
  rep.unassigned_fraction = rows == 0 ? 0.0 : static_cast<double>(rows - assigned) / rows;
  double kl = 0.0;
  for (long h : rep.histogram) {
    if (h == 0) continue;
    rep.modes_hit += 1;
    const double p = static_cast<double>(h) / static_cast<double>(assigned);
    kl += p * std::log(p * k);
  }
  rep.reverse_kl = assigned == 0 ? std::log(static_cast<double>(k)) : kl;
  return rep;
}

void write_grid_csv(const std::string& path, const DensityGrid& grid) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw ConfigError("write_grid_csv: cannot open " + path);
  std::fprintf(f, "x,y,s\n");
  for (int iy = 0; iy < grid.res_y; ++iy)
    for (int ix = 0; ix < grid.res_x; ++ix)
      std::fprintf(f, "%.17g,%.17g,%.17g\n", grid.center_x(ix), grid.center_y(iy),
                   grid.values[static_cast<std::size_t>(iy) * grid.res_x + ix]);
  std::fclose(f);
}

namespace {

// Five-stop heat map from dark blue through orange to near white.
void heat_color(double v, unsigned char* rgb) {
  static const double stops[5][3] = {{0.05, 0.03, 0.25},
                                     {0.25, 0.20, 0.60},
                                     {0.80, 0.35, 0.25},
                                     {0.98, 0.70, 0.20},
                                     {1.00, 0.98, 0.85}};
  v = std::clamp(v, 0.0, 1.0);
  const double t = v * 4.0;
  const int seg = std::min(3, static_cast<int>(t));
  const double f = t - seg;
  for (int c = 0; c < 3; ++c) {
    const double col = stops[seg][c] * (1.0 - f) + stops[seg + 1][c] * f;
    rgb[c] = static_cast<unsigned char>(std::lround(col * 255.0));
  }
}

}  // namespace

void write_ppm_heatmap(const std::string& path, const DensityGrid& grid) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ConfigError("write_ppm_heatmap: cannot open " + path);
  std::fprintf(f, "P6\n%d %d\n255\n", grid.res_x, grid.res_y);
  double lo = grid.values[0], hi = grid.values[0];
  for (double v : grid.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double range = hi > lo ? hi - lo : 1.0;
  std::vector<unsigned char> row(static_cast<std::size_t>(grid.res_x) * 3);
  for (int iy = grid.res_y - 1; iy >= 0; --iy) {  // top row first
    for (int ix = 0; ix < grid.res_x; ++ix) {
      const double v = (grid.values[static_cast<std::size_t>(iy) * grid.res_x + ix] - lo) / range;
      heat_color(v, row.data() + static_cast<std::size_t>(ix) * 3);
    }
    std::fwrite(row.data(), 1, row.size(), f);
  }
  std::fclose(f);
}

}  // namespace dde
