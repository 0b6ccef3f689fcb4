#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dde {

// Exit codes: 0 success, 2 config error, 3 runtime/numeric error.
int run_cli(int argc, const char* const* argv);

// Programmatic command surface (the CLI is a thin parser over these). Each
// command returns the list of files it wrote, in the order they appear in the
// run manifest.
struct GenDataArgs {
  std::string name;
  int n = 0;
  std::uint64_t seed = 1;
  std::string out_dir;
  double noise_std = 0.05;  // two_spirals
  int k_side = 5;           // gaussian_grid
  double spacing = 2.0;
  double std_dev = 0.1;
  std::vector<double> mean;  // gaussian
  double var = 1.0;
};

struct CommonOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  int threads = 0;  // 0 = resolve from env/hardware
};

std::vector<std::string> cmd_gen_data(const GenDataArgs& args);

std::vector<std::string> cmd_train_dde(const std::string& config_path,
                                       const CommonOverrides& ov,
                                       const std::optional<std::string>& resume = {});

std::vector<std::string> cmd_train_gen(const std::string& config_path,
                                       const std::string& p_dde_checkpoint,
                                       const CommonOverrides& ov);

struct SampleArgs {
  std::string checkpoint;
  int n = 0;
  std::string mode;  // "direct" | "ald"
  std::string out_dir;
  std::uint64_t seed = 1;
  std::string format = "csv";  // "csv" | "bin"
  // ALD controls
  int ald_levels = 10;
  double ald_sigma_max = 1.0;
  int ald_steps_per_level = 100;
  double ald_step_size = 0.05;
  double init_lo = -2.0;
  double init_hi = 2.0;
};

std::vector<std::string> cmd_sample(const SampleArgs& args);

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;  // csv or manifest path; optional for grid/modes
  std::vector<std::string> tasks;
  std::string out_dir;
  std::uint64_t seed = 1;
  bool standardize = false;
  double bounds_lo_x = 0.0, bounds_hi_x = 0.0;  // equal = auto
  double bounds_lo_y = 0.0, bounds_hi_y = 0.0;
  int resolution = 200;
  long logz_samples = 51200;
  int logz_repeats = 5;
  int mode_samples = 10000;
  double mode_radius_sigmas = 3.0;
};

std::vector<std::string> cmd_eval(const EvalArgs& args);

int resolve_threads(int cli_value);

}  // namespace dde
