#include "dde/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dde/errors.hpp"
#include "dde/rng.hpp"

namespace dde {

Dataset two_spirals(int n, double noise_std, std::uint64_t seed) {
  if (n < 1) throw ConfigError("two_spirals: n must be >= 1");
  Dataset ds;
  ds.dim = 2;
  ds.name = "two_spirals";
  ds.points.resize(static_cast<std::size_t>(n) * 2);
  RngStream rng(seed, "two-spirals", 0);
  const double pi = 3.14159265358979323846;
  const double scale = 2.0 / (4.5 * pi);
  for (int i = 0; i < n; ++i) {
    const double u = rng.next_unit();
    const double t = 1.5 * pi * (1.0 + 2.0 * u);
    double x = -t * std::cos(t) * scale;
    double y = t * std::sin(t) * scale;
    if (rng.next_unit() < 0.5) {
      x = -x;
      y = -y;
    }
    ds.points[static_cast<std::size_t>(i) * 2] = x + noise_std * rng.next_gaussian();
    ds.points[static_cast<std::size_t>(i) * 2 + 1] = y + noise_std * rng.next_gaussian();
  }
  return ds;
}

Dataset checkerboard(int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("checkerboard: n must be >= 1");
  Dataset ds;
  ds.dim = 2;
  ds.name = "checkerboard";
  ds.points.resize(static_cast<std::size_t>(n) * 2);
  RngStream rng(seed, "checkerboard", 0);
  // The 8 on-squares of the 4x4 grid over [-2,2]^2.
  int on_i[8], on_j[8], k = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if ((i + j) % 2 == 0) {
        on_i[k] = i;
        on_j[k] = j;
        ++k;
      }
  for (int s = 0; s < n; ++s) {
    const int q = static_cast<int>(rng.next_index(8));
    ds.points[static_cast<std::size_t>(s) * 2] = -2.0 + on_i[q] + rng.next_unit();
    ds.points[static_cast<std::size_t>(s) * 2 + 1] = -2.0 + on_j[q] + rng.next_unit();
  }
  return ds;
}

MixtureGrid gaussian_mixture_grid(int n, int k_side, double spacing, double std,
                                  std::uint64_t seed) {
  if (n < 1) throw ConfigError("gaussian_mixture_grid: n must be >= 1");
  if (k_side < 1) throw ConfigError("gaussian_mixture_grid: k_side must be >= 1");
  if (std <= 0.0) throw ConfigError("gaussian_mixture_grid: std must be positive");
  MixtureGrid out;
  out.spec.dim = 2;
  out.spec.std = std;
  const double half = 0.5 * (k_side - 1) * spacing;
  for (int i = 0; i < k_side; ++i)
    for (int j = 0; j < k_side; ++j) {
      out.spec.means.push_back(i * spacing - half);
      out.spec.means.push_back(j * spacing - half);
    }
  out.data.dim = 2;
  out.data.name = "gaussian_grid";
  out.data.points.resize(static_cast<std::size_t>(n) * 2);
  RngStream rng(seed, "gaussian-grid", 0);
  const int components = out.spec.components();
  for (int s = 0; s < n; ++s) {
    const int c = static_cast<int>(rng.next_index(static_cast<std::uint64_t>(components)));
    auto mu = out.spec.mean(c);
    out.data.points[static_cast<std::size_t>(s) * 2] = mu[0] + std * rng.next_gaussian();
    out.data.points[static_cast<std::size_t>(s) * 2 + 1] = mu[1] + std * rng.next_gaussian();
  }
  return out;
}

double mixture_log_density(const MixtureSpec& spec, std::span<const double> x,
                           double extra_var) {
  const int d = spec.dim;
  if (static_cast<int>(x.size()) != d) throw ConfigError("mixture_log_density: dimension mismatch");
  const int k = spec.components();
  const double var = spec.std * spec.std + extra_var;
  const double log_norm = -0.5 * d * std::log(2.0 * 3.14159265358979323846 * var);
  double max_e = -1e300;
  std::vector<double> es(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    auto mu = spec.mean(c);
    double q = 0.0;
    for (int j = 0; j < d; ++j) {
      const double dj = x[j] - mu[j];
      q += dj * dj;
    }
    es[static_cast<std::size_t>(c)] = -0.5 * q / var;
    max_e = std::max(max_e, es[static_cast<std::size_t>(c)]);
  }
  double acc = 0.0;
  for (double e : es) acc += std::exp(e - max_e);
  return log_norm + max_e + std::log(acc / k);
}

void MixtureEnergy::eval(const double* xs, int rows, double* values, double* scores) const {
  const int d = spec_.dim;
  const int k = spec_.components();
  const double var = spec_.std * spec_.std + extra_var_;
  std::vector<double> es(static_cast<std::size_t>(k));
  for (int r = 0; r < rows; ++r) {
    const double* x = xs + static_cast<std::size_t>(r) * d;
    double max_e = -1e300;
    for (int c = 0; c < k; ++c) {
      auto mu = spec_.mean(c);
      double q = 0.0;
      for (int j = 0; j < d; ++j) {
        const double dj = x[j] - mu[j];
        q += dj * dj;
      }
      es[static_cast<std::size_t>(c)] = -0.5 * q / var;
      max_e = std::max(max_e, es[static_cast<std::size_t>(c)]);
    }
    double z = 0.0;
    for (double& e : es) {
      e = std::exp(e - max_e);
      z += e;
    }
    if (values) {
      const double log_norm = -0.5 * d * std::log(2.0 * 3.14159265358979323846 * var);
      values[r] = log_norm + max_e + std::log(z / k);
    }
    if (scores) {
      // score = sum_c w_c * (mu_c - x) / var with posterior weights w_c
      double* s = scores + static_cast<std::size_t>(r) * d;
      for (int j = 0; j < d; ++j) s[j] = 0.0;
      for (int c = 0; c < k; ++c) {
        const double w = es[static_cast<std::size_t>(c)] / z;
        auto mu = spec_.mean(c);
        for (int j = 0; j < d; ++j) s[j] += w * (mu[j] - x[j]) / var;
      }
    }
  }
}

namespace {

bool parse_double(std::string_view tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  while (first < last && std::isspace(static_cast<unsigned char>(*first))) ++first;
  while (last > first && std::isspace(static_cast<unsigned char>(last[-1]))) --last;
  if (first == last) return false;
  auto [p, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && p == last;
}

std::vector<std::string_view> split_csv_line(std::string_view line, std::vector<std::string_view>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

Dataset load_csv(const std::string& path, bool standardize) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_csv: cannot open " + path);
  Dataset ds;
  ds.name = path;
  std::string line;
  std::vector<std::string_view> toks;
  int row_number = 0;
  bool first_content_row = true;
  while (std::getline(in, line)) {
    ++row_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    split_csv_line(line, toks);
    if (first_content_row) {
      double probe;
      if (!parse_double(toks[0], probe)) {
        // header row, skip
        first_content_row = false;
        continue;
      }
      ds.dim = static_cast<int>(toks.size());
      first_content_row = false;
    }
    if (ds.dim == 0) ds.dim = static_cast<int>(toks.size());
    if (static_cast<int>(toks.size()) != ds.dim)
      throw ConfigError("load_csv: ragged row " + std::to_string(row_number) + " in " + path);
    for (std::size_t c = 0; c < toks.size(); ++c) {
      double v;
      if (!parse_double(toks[c], v))
        throw ConfigError("load_csv: non-numeric cell at row " + std::to_string(row_number) +
                          ", col " + std::to_string(c + 1) + " in " + path);
      ds.points.push_back(v);
    }
  }
  if (ds.points.empty()) throw ConfigError("load_csv: no data rows in " + path);
  if (standardize) standardize_in_place(ds);
  return ds;
}

void save_csv(const std::string& path, std::span<const double> rows, int dim) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw ConfigError("save_csv: cannot open " + path);
  const int n = static_cast<int>(rows.size()) / dim;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j)
      std::fprintf(f, "%.17g%s", rows[static_cast<std::size_t>(i) * dim + j],
                   j + 1 == dim ? "\n" : ",");
  }
  std::fclose(f);
}

void standardize_in_place(Dataset& ds) {
  const int n = ds.size();
  const int d = ds.dim;
  if (n == 0) throw ConfigError("standardize: empty dataset");
  Standardization st;
  st.mean.assign(static_cast<std::size_t>(d), 0.0);
  st.std.assign(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) st.mean[static_cast<std::size_t>(j)] += ds.points[static_cast<std::size_t>(i) * d + j];
  for (int j = 0; j < d; ++j) st.mean[static_cast<std::size_t>(j)] /= n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      const double c = ds.points[static_cast<std::size_t>(i) * d + j] - st.mean[static_cast<std::size_t>(j)];
      st.std[static_cast<std::size_t>(j)] += c * c;
    }
  for (int j = 0; j < d; ++j) {
    st.std[static_cast<std::size_t>(j)] = std::sqrt(st.std[static_cast<std::size_t>(j)] / n);
    if (st.std[static_cast<std::size_t>(j)] == 0.0) st.std[static_cast<std::size_t>(j)] = 1.0;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      double& v = ds.points[static_cast<std::size_t>(i) * d + j];
      v = (v - st.mean[static_cast<std::size_t>(j)]) / st.std[static_cast<std::size_t>(j)];
    }
  ds.standardization = std::move(st);
}

Vec destandardize_row(const Dataset& ds, std::span<const double> x) {
  Vec out(x.begin(), x.end());
  if (!ds.standardization) return out;
  for (int j = 0; j < ds.dim; ++j)
    out[static_cast<std::size_t>(j)] = out[static_cast<std::size_t>(j)] * ds.standardization->std[static_cast<std::size_t>(j)] +
                                       ds.standardization->mean[static_cast<std::size_t>(j)];
  return out;
}

std::pair<Vec, Vec> bounding_box(const Dataset& ds) {
  const int n = ds.size();
  const int d = ds.dim;
  Vec lo(static_cast<std::size_t>(d), 1e300), hi(static_cast<std::size_t>(d), -1e300);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      const double v = ds.points[static_cast<std::size_t>(i) * d + j];
      lo[static_cast<std::size_t>(j)] = std::min(lo[static_cast<std::size_t>(j)], v);
      hi[static_cast<std::size_t>(j)] = std::max(hi[static_cast<std::size_t>(j)], v);
    }
  return {lo, hi};
}

Vec dataset_mean(const Dataset& ds) {
  const int n = ds.size();
  const int d = ds.dim;
  Vec mu(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) mu[static_cast<std::size_t>(j)] += ds.points[static_cast<std::size_t>(i) * d + j];
  for (double& v : mu) v /= n;
  return mu;
}

Vec dataset_covariance(const Dataset& ds) {
  const int n = ds.size();
  const int d = ds.dim;
  const Vec mu = dataset_mean(ds);
  Vec cov(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < d; ++a) {
      const double ca = ds.points[static_cast<std::size_t>(i) * d + a] - mu[static_cast<std::size_t>(a)];
      for (int b = 0; b < d; ++b) {
        const double cb = ds.points[static_cast<std::size_t>(i) * d + b] - mu[static_cast<std::size_t>(b)];
        cov[static_cast<std::size_t>(a) * d + b] += ca * cb;
      }
    }
  const double denom = n > 1 ? n - 1 : 1;
  for (double& v : cov) v /= denom;
  return cov;
}

}  // namespace dde
