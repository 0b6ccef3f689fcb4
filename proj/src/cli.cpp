#include "dde/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "dde/checkpoint.hpp"
#include "dde/dataset.hpp"
#include "dde/dde_train.hpp"
#include "dde/errors.hpp"
#include "dde/evaluation.hpp"
#include "dde/generator.hpp"
#include "dde/model.hpp"
#include "dde/samplers.hpp"

namespace dde {

namespace fs = std::filesystem;
using nlohmann::json;

int resolve_threads(int cli_value) {
  if (cli_value > 0) return cli_value;
  if (const char* env = std::getenv("DDE_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace {

void require_keys(const json& obj, std::initializer_list<const char*> allowed,
                  const std::string& ctx) {
  if (!obj.is_object()) throw ConfigError("config: " + ctx + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError("config: unknown key '" + it.key() + "' in " + ctx);
  }
}

std::string resolve_rel(const fs::path& base_dir, const std::string& p) {
  fs::path path(p);
  if (path.is_absolute()) return path.string();
  return (base_dir / path).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
}

void write_run_manifest(const std::string& out_dir, const std::string& command,
                        std::vector<std::string>& files) {
  json j;
  j["command"] = command;
  j["outputs"] = files;
  const std::string path = (fs::path(out_dir) / "run_manifest.json").string();
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(1) << "\n";
  files.push_back(path);
}

json load_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(std::string(what) + ": cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string(what) + ": invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

// --- dataset block ---------------------------------------------------------

struct BuiltDataset {
  Dataset data;
  std::optional<MixtureSpec> mixture;
};

BuiltDataset build_dataset(const json& block, const fs::path& config_dir,
                           std::optional<std::uint64_t> seed_override) {
  require_keys(block,
               {"name", "n", "seed", "noise_std", "k_side", "spacing", "std", "mean", "var",
                "path", "standardize"},
               "dataset");
  const std::string name = block.at("name").get<std::string>();
  BuiltDataset out;
  const std::uint64_t seed =
      seed_override ? *seed_override : block.value("seed", static_cast<std::uint64_t>(1));
  if (name == "csv") {
    const std::string path = resolve_rel(config_dir, block.at("path").get<std::string>());
    out.data = load_csv(path, block.value("standardize", false));
    return out;
  }
  const int n = block.at("n").get<int>();
  if (name == "two_spirals") {
    out.data = two_spirals(n, block.value("noise_std", 0.05), seed);
  } else if (name == "checkerboard") {
    out.data = checkerboard(n, seed);
  } else if (name == "gaussian_grid") {
    MixtureGrid g = gaussian_mixture_grid(n, block.value("k_side", 5), block.value("spacing", 2.0),
                                          block.value("std", 0.1), seed);
    out.data = std::move(g.data);
    out.mixture = std::move(g.spec);
  } else if (name == "gaussian") {
    MixtureSpec spec;
    const auto mean = block.at("mean").get<std::vector<double>>();
    spec.dim = static_cast<int>(mean.size());
    spec.means = mean;
    spec.std = std::sqrt(block.value("var", 1.0));
    if (spec.std <= 0.0) throw ConfigError("dataset gaussian: var must be positive");
    out.data.dim = spec.dim;
    out.data.name = "gaussian";
    out.data.points.resize(static_cast<std::size_t>(n) * spec.dim);
    RngStream rng(seed, "gaussian-data", 0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < spec.dim; ++j)
        out.data.points[static_cast<std::size_t>(i) * spec.dim + j] =
            mean[static_cast<std::size_t>(j)] + spec.std * rng.next_gaussian();
    out.mixture = std::move(spec);
  } else {
    throw ConfigError("dataset: unknown name '" + name + "'");
  }
  return out;
}

json mixture_to_json(const MixtureSpec& spec) {
  json means = json::array();
  for (int c = 0; c < spec.components(); ++c) {
    json m = json::array();
    for (int j = 0; j < spec.dim; ++j) m.push_back(spec.mean(c)[static_cast<std::size_t>(j)]);
    means.push_back(std::move(m));
  }
  return json{{"std", spec.std}, {"means", std::move(means)}};
}

MixtureSpec mixture_from_json(const json& j) {
  MixtureSpec spec;
  spec.std = j.at("std").get<double>();
  for (const auto& m : j.at("means")) {
    if (spec.dim == 0) spec.dim = static_cast<int>(m.size());
    for (const auto& v : m) spec.means.push_back(v.get<double>());
  }
  return spec;
}

std::string write_dataset_manifest(const std::string& out_dir, const Dataset& ds,
                                   const std::string& csv_name,
                                   const std::optional<MixtureSpec>& mixture) {
  json j;
  j["name"] = ds.name;
  j["dim"] = ds.dim;
  j["n"] = ds.size();
  j["csv"] = csv_name;
  if (ds.standardization) {
    j["standardization"] = {{"mean", ds.standardization->mean}, {"std", ds.standardization->std}};
  } else {
    j["standardization"] = nullptr;
  }
  j["mixture"] = mixture ? mixture_to_json(*mixture) : json(nullptr);
  const std::string path = (fs::path(out_dir) / (ds.name + "_manifest.json")).string();
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(1) << "\n";
  return path;
}

BuiltDataset load_dataset_arg(const std::string& path, bool standardize) {
  BuiltDataset out;
  if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
    const json j = load_json_file(path, "dataset manifest");
    require_keys(j, {"name", "dim", "n", "csv", "standardization", "mixture"}, "dataset manifest");
    const std::string csv = resolve_rel(fs::path(path).parent_path(), j.at("csv").get<std::string>());
    out.data = load_csv(csv, standardize);
    out.data.name = j.at("name").get<std::string>();
    if (!j.at("mixture").is_null()) out.mixture = mixture_from_json(j.at("mixture"));
    return out;
  }
  out.data = load_csv(path, standardize);
  return out;
}

// --- network / training blocks ---------------------------------------------

MlpConfig parse_network(const json& block, int in_dim, int out_dim, const std::string& ctx) {
  require_keys(block, {"layers", "channels", "residual"}, ctx);
  MlpConfig cfg;
  cfg.in_dim = in_dim;
  cfg.out_dim = out_dim;
  cfg.layers = block.value("layers", 8);
  cfg.channels = block.value("channels", 32);
  cfg.residual = block.value("residual", true);
  cfg.validate();
  return cfg;
}

DdeTrainConfig parse_dde_train(const json& block, std::optional<std::uint64_t> seed_override) {
  require_keys(block,
               {"batch_size", "steps", "lr", "lr_decay", "sigma_start", "sigma_end",
                "sigma_decay_factor", "sigma_decay_every", "seed"},
               "dde");
  DdeTrainConfig cfg;
  cfg.batch_size = block.value("batch_size", 2048);
  cfg.steps = block.value("steps", 20000L);
  cfg.lr = block.value("lr", 2.5e-4);
  if (block.contains("lr_decay")) {
    require_keys(block.at("lr_decay"), {"factor", "every_steps"}, "dde.lr_decay");
    cfg.lr_decay.factor = block.at("lr_decay").value("factor", 1.0);
    cfg.lr_decay.every_steps = block.at("lr_decay").value("every_steps", 0L);
  }
  cfg.sigma_start = block.at("sigma_start").get<double>();
  cfg.sigma_end = block.value("sigma_end", cfg.sigma_start);
  cfg.sigma_decay_factor = block.value("sigma_decay_factor", 1.1);
  cfg.sigma_decay_every = block.value("sigma_decay_every", 0L);
  cfg.seed = seed_override ? *seed_override : block.value("seed", static_cast<std::uint64_t>(1));
  cfg.validate();
  return cfg;
}

GenTrainConfig parse_gen_train(const json& block, std::optional<std::uint64_t> seed_override) {
  require_keys(block,
               {"gen_lr", "dde_inner_steps", "dde_lr", "batch_size", "outer_steps", "latent_dim",
                "sigma_eta", "seed", "checkpoint_every", "q_init_steps", "init_output_scale",
                "network", "q_network", "diagnostic"},
               "generator");
  GenTrainConfig cfg;
  cfg.gen_lr = block.value("gen_lr", 1e-4);
  cfg.dde_inner_steps = block.value("dde_inner_steps", 10);
  cfg.dde_lr = block.value("dde_lr", 2.5e-4);
  cfg.batch_size = block.value("batch_size", 2048);
  cfg.outer_steps = block.value("outer_steps", 2000L);
  cfg.latent_dim = block.value("latent_dim", 2);
  cfg.sigma_eta = block.at("sigma_eta").get<double>();
  cfg.seed = seed_override ? *seed_override : block.value("seed", static_cast<std::uint64_t>(1));
  cfg.checkpoint_every = block.value("checkpoint_every", 200L);
  cfg.q_init_steps = block.value("q_init_steps", 500L);
  cfg.init_output_scale = block.value("init_output_scale", 1.0);
  cfg.validate();
  return cfg;
}

std::optional<DiagnosticTarget> parse_diagnostic(const json& gen_block, const BuiltDataset* ds) {
  if (!gen_block.contains("diagnostic")) return std::nullopt;
  const json& d = gen_block.at("diagnostic");
  require_keys(d, {"target", "mean", "var", "k_side", "spacing", "std"}, "generator.diagnostic");
  DiagnosticTarget t;
  const std::string kind = d.at("target").get<std::string>();
  if (kind == "gaussian") {
    t.kind = DiagnosticTarget::Kind::kGaussian;
    t.mean = d.at("mean").get<std::vector<double>>();
    const int dim = static_cast<int>(t.mean.size());
    const double var = d.at("var").get<double>();
    t.cov.assign(static_cast<std::size_t>(dim) * dim, 0.0);
    for (int i = 0; i < dim; ++i) t.cov[static_cast<std::size_t>(i) * dim + i] = var;
  } else if (kind == "mixture") {
    t.kind = DiagnosticTarget::Kind::kMixture;
    MixtureGrid g = gaussian_mixture_grid(1, d.value("k_side", 5), d.value("spacing", 2.0),
                                          d.value("std", 0.1), 0);
    t.mixture = std::move(g.spec);
  } else if (kind == "dataset_moments") {
    if (!ds) throw ConfigError("diagnostic dataset_moments requires a dataset block");
    t.kind = DiagnosticTarget::Kind::kDataMoments;
    t.mean = dataset_mean(ds->data);
    t.cov = dataset_covariance(ds->data);
  } else {
    throw ConfigError("diagnostic: unknown target '" + kind + "'");
  }
  return t;
}

void write_dde_trace(const std::string& path, const std::vector<TraceRow>& trace) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw ConfigError("cannot write " + path);
  std::fprintf(f, "step,sigma,loss,lr\n");
  for (const TraceRow& r : trace)
    std::fprintf(f, "%ld,%.17g,%.17g,%.17g\n", r.step, r.sigma, r.loss, r.lr);
  std::fclose(f);
}

void write_gen_trace(const std::string& path, const std::vector<GenTraceRow>& trace) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw ConfigError("cannot write " + path);
  std::fprintf(f, "outer_step,gen_loss,q_dde_loss,diagnostic_kl\n");
  for (const GenTraceRow& r : trace)
    std::fprintf(f, "%ld,%.17g,%.17g,%.17g\n", r.outer_step, r.gen_loss, r.q_dde_loss,
                 r.diagnostic_kl);
  std::fclose(f);
}

json top_config(const std::string& config_path) {
  const json j = load_json_file(config_path, "config");
  require_keys(j, {"dataset", "network", "dde", "generator", "out"}, "config");
  return j;
}

std::string output_dir(const json& cfg, const fs::path& config_dir, const CommonOverrides& ov) {
  if (ov.out_dir) return *ov.out_dir;
  if (cfg.contains("out")) return resolve_rel(config_dir, cfg.at("out").get<std::string>());
  throw ConfigError("config: no output directory ('out' key or --out)");
}

}  // namespace

// --- commands ---------------------------------------------------------------

std::vector<std::string> cmd_gen_data(const GenDataArgs& args) {
  if (args.n < 1) throw ConfigError("gen-data: n must be >= 1");
  if (args.out_dir.empty()) throw ConfigError("gen-data: output directory required");
  json block;
  block["name"] = args.name;
  block["n"] = args.n;
  block["seed"] = args.seed;
  if (args.name == "two_spirals") block["noise_std"] = args.noise_std;
  if (args.name == "gaussian_grid") {
    block["k_side"] = args.k_side;
    block["spacing"] = args.spacing;
    block["std"] = args.std_dev;
  }
  if (args.name == "gaussian") {
    if (args.mean.empty()) throw ConfigError("gen-data gaussian: --mean required");
    block["mean"] = args.mean;
    block["var"] = args.var;
  }
  BuiltDataset built = build_dataset(block, fs::current_path(), std::nullopt);
  ensure_dir(args.out_dir);
  const std::string csv_name = built.data.name + ".csv";
  const std::string csv_path = (fs::path(args.out_dir) / csv_name).string();
  save_csv(csv_path, built.data.points, built.data.dim);
  std::vector<std::string> files{csv_path};
  files.push_back(write_dataset_manifest(args.out_dir, built.data, csv_name, built.mixture));
  write_run_manifest(args.out_dir, "gen-data", files);
  return files;
}

std::vector<std::string> cmd_train_dde(const std::string& config_path, const CommonOverrides& ov,
                                       const std::optional<std::string>& resume) {
  const json cfg = top_config(config_path);
  const fs::path config_dir = fs::path(config_path).parent_path();
  if (!cfg.contains("dataset")) throw ConfigError("train-dde: config needs a dataset block");
  if (!cfg.contains("dde")) throw ConfigError("train-dde: config needs a dde block");
  BuiltDataset built = build_dataset(cfg.at("dataset"), config_dir, std::nullopt);
  const DdeTrainConfig tc = parse_dde_train(cfg.at("dde"), ov.seed);
  const MlpConfig net = parse_network(cfg.value("network", json::object()), built.data.dim, 1,
                                      "network");
  const int threads = resolve_threads(ov.threads);

  DdeResumeState resume_state;
  const DdeResumeState* resume_ptr = nullptr;
  if (resume) {
    Checkpoint ck = load_checkpoint(*resume);
    if (ck.kind != "dde") throw ConfigError("train-dde: resume checkpoint is not a dde model");
    const MlpLayout lt = mlp_layout(net);
    if (static_cast<int>(ck.params.size()) != lt.total)
      throw ConfigError("train-dde: resume checkpoint does not match the configured network");
    resume_state.params = std::move(ck.params);
    resume_state.opt = std::move(ck.opt);
    resume_state.step = ck.step;
    resume_ptr = &resume_state;
  }

  DdeTrainResult result = train_dde(built.data, net, tc, threads, resume_ptr);

  const std::string out_dir = output_dir(cfg, config_dir, ov);
  ensure_dir(out_dir);
  Checkpoint ck;
  ck.kind = "dde";
  ck.config = net;
  ck.seed = tc.seed;
  ck.params = result.model.params();
  ck.sigma_eta = result.model.sigma_eta();
  ck.step = tc.steps;
  ck.opt = result.opt;
  ck.dataset = built.data.name;
  const std::string ck_path = (fs::path(out_dir) / "dde_checkpoint.json").string();
  save_checkpoint(ck_path, ck);
  const std::string trace_path = (fs::path(out_dir) / "dde_trace.csv").string();
  write_dde_trace(trace_path, result.trace);
  std::vector<std::string> files{ck_path, trace_path};
  write_run_manifest(out_dir, "train-dde", files);
  return files;
}

std::vector<std::string> cmd_train_gen(const std::string& config_path,
                                       const std::string& p_dde_checkpoint,
                                       const CommonOverrides& ov) {
  const json cfg = top_config(config_path);
  const fs::path config_dir = fs::path(config_path).parent_path();
  if (!cfg.contains("generator")) throw ConfigError("train-gen: config needs a generator block");
  const json& gen_block = cfg.at("generator");
  const GenTrainConfig gc = parse_gen_train(gen_block, ov.seed);

  Checkpoint p_ck = load_checkpoint(p_dde_checkpoint);
  if (p_ck.kind != "dde") throw ConfigError("train-gen: checkpoint is not a dde model");
  if (std::abs(p_ck.sigma_eta - gc.sigma_eta) > 1e-12)
    throw ConfigError("train-gen: sigma_eta mismatch between config and p-dde checkpoint");
  DdeModel p_dde(p_ck.config, std::move(p_ck.params), p_ck.sigma_eta);

  const int n = p_dde.dim();
  const MlpConfig gen_net =
      parse_network(gen_block.value("network", json::object()), gc.latent_dim, n, "generator.network");
  const MlpConfig q_net =
      parse_network(gen_block.value("q_network", json::object()), n, 1, "generator.q_network");

  std::optional<BuiltDataset> ds;
  if (cfg.contains("dataset")) ds = build_dataset(cfg.at("dataset"), config_dir, std::nullopt);
  const std::optional<DiagnosticTarget> diag = parse_diagnostic(gen_block, ds ? &*ds : nullptr);
  const int threads = resolve_threads(ov.threads);

  GenTrainResult result =
      train_generator(p_dde, gen_net, q_net, gc, diag ? &*diag : nullptr, threads);

  const std::string out_dir = output_dir(cfg, config_dir, ov);
  ensure_dir(out_dir);
  Checkpoint gen_ck;
  gen_ck.kind = "generator";
  gen_ck.config = gen_net;
  gen_ck.seed = gc.seed;
  gen_ck.params = result.generator.params();
  gen_ck.step = gc.outer_steps;
  const std::string gen_path = (fs::path(out_dir) / "generator_checkpoint.json").string();
  save_checkpoint(gen_path, gen_ck);

  Checkpoint q_ck;
  q_ck.kind = "dde";
  q_ck.config = q_net;
  q_ck.seed = gc.seed;
  q_ck.params = result.q_dde.params();
  q_ck.sigma_eta = gc.sigma_eta;
  q_ck.step = gc.outer_steps;
  const std::string q_path = (fs::path(out_dir) / "q_dde_checkpoint.json").string();
  save_checkpoint(q_path, q_ck);

  const std::string trace_path = (fs::path(out_dir) / "gen_trace.csv").string();
  write_gen_trace(trace_path, result.trace);
  std::vector<std::string> files{gen_path, q_path, trace_path};
  write_run_manifest(out_dir, "train-gen", files);
  return files;
}

std::vector<std::string> cmd_sample(const SampleArgs& args) {
  if (args.n < 1) throw ConfigError("sample: n must be >= 1");
  if (args.out_dir.empty()) throw ConfigError("sample: output directory required");
  if (args.format != "csv" && args.format != "bin")
    throw ConfigError("sample: format must be csv or bin");
  Checkpoint ck = load_checkpoint(args.checkpoint);
  ensure_dir(args.out_dir);
  std::vector<std::string> files;

  Vec samples;
  int dim = 0;
  if (args.mode == "direct") {
    if (ck.kind != "generator")
      throw ConfigError("sample: direct mode requires a generator checkpoint");
    GeneratorModel gen(ck.config, std::move(ck.params));
    samples = sample_direct(gen, args.n, args.seed);
    dim = gen.data_dim();
  } else if (args.mode == "ald") {
    if (ck.kind != "dde") throw ConfigError("sample: ald mode requires a dde checkpoint");
    DdeModel model(ck.config, std::move(ck.params), ck.sigma_eta);
    dim = model.dim();
    AldConfig ac;
    ac.seed = args.seed;
    ac.steps_per_level = args.ald_steps_per_level;
    ac.step_size_base = args.ald_step_size;
    ac.init_lo.assign(static_cast<std::size_t>(dim), args.init_lo);
    ac.init_hi.assign(static_cast<std::size_t>(dim), args.init_hi);
    if (args.ald_levels < 1) throw ConfigError("sample: ald levels must be >= 1");
    const double s_hi = args.ald_sigma_max;
    const double s_lo = model.sigma_eta();
    if (args.ald_levels == 1 || s_hi <= s_lo) {
      ac.sigma_levels = {s_lo};
    } else {
      const double ratio = std::pow(s_lo / s_hi, 1.0 / (args.ald_levels - 1));
      double s = s_hi;
      for (int i = 0; i < args.ald_levels; ++i) {
        ac.sigma_levels.push_back(s);
        s *= ratio;
      }
      ac.sigma_levels.back() = s_lo;
    }
    AldReport rep = sample_ald(model, ac, args.n);
    samples = std::move(rep.samples);
    const std::string lv_path = (fs::path(args.out_dir) / "ald_levels.csv").string();
    std::FILE* f = std::fopen(lv_path.c_str(), "w");
    if (!f) throw ConfigError("cannot write " + lv_path);
    std::fprintf(f, "level,sigma,alpha,steps,label\n");
    for (std::size_t i = 0; i < rep.levels.size(); ++i)
      std::fprintf(f, "%zu,%.17g,%.17g,%d,%s\n", i, rep.levels[i].sigma, rep.levels[i].alpha,
                   rep.levels[i].steps, rep.label.c_str());
    std::fclose(f);
    files.push_back(lv_path);
  } else {
    throw ConfigError("sample: mode must be direct or ald");
  }

  if (args.format == "csv") {
    const std::string path = (fs::path(args.out_dir) / "samples.csv").string();
    save_csv(path, samples, dim);
    files.insert(files.begin(), path);
  } else {
    const std::string path = (fs::path(args.out_dir) / "samples.bin").string();
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw ConfigError("cannot write " + path);
    const std::uint64_t count = static_cast<std::uint64_t>(args.n);
    std::fwrite(&count, sizeof(count), 1, f);
    std::fwrite(samples.data(), sizeof(double), samples.size(), f);
    std::fclose(f);
    files.insert(files.begin(), path);
  }
  write_run_manifest(args.out_dir, "sample", files);
  return files;
}

std::vector<std::string> cmd_eval(const EvalArgs& args) {
  if (args.tasks.empty()) throw ConfigError("eval: at least one task required");
  bool want_grid = false, want_logz = false, want_ll = false, want_modes = false;
  for (const std::string& t : args.tasks) {
    if (t == "grid") want_grid = true;
    else if (t == "logz") want_logz = true;
    else if (t == "ll") want_ll = true;
    else if (t == "modes") want_modes = true;
    else throw ConfigError("eval: unknown task '" + t + "'");
  }
  if (want_ll && !want_logz)
    throw ConfigError("eval: task 'll' requires 'logz' in the same invocation");
  if (args.out_dir.empty()) throw ConfigError("eval: output directory required");

  Checkpoint ck = load_checkpoint(args.checkpoint);
  ensure_dir(args.out_dir);
  std::vector<std::string> files;
  json report;
  report["checkpoint"] = args.checkpoint;
  report["tasks"] = args.tasks;

  std::optional<BuiltDataset> ds;
  if (!args.dataset.empty()) {
    ds = load_dataset_arg(args.dataset, args.standardize);
    report["dataset"] = args.dataset;
  }

  if (want_grid || want_logz || want_ll) {
    if (ck.kind != "dde") throw ConfigError("eval: grid/logz/ll require a dde checkpoint");
    DdeModel model(ck.config, ck.params, ck.sigma_eta);

    if (want_grid) {
      double lx = args.bounds_lo_x, hx = args.bounds_hi_x;
      double ly = args.bounds_lo_y, hy = args.bounds_hi_y;
      if (lx == hx || ly == hy) {
        if (ds) {
          auto [lo, hi] = bounding_box(ds->data);
          const double pad_x = 0.1 * (hi[0] - lo[0]), pad_y = 0.1 * (hi[1] - lo[1]);
          lx = lo[0] - pad_x;
          hx = hi[0] + pad_x;
          ly = lo[1] - pad_y;
          hy = hi[1] + pad_y;
        } else {
          lx = ly = -2.2;
          hx = hy = 2.2;
        }
      }
      DensityGrid grid = density_grid(model, {lx, hx}, {ly, hy}, args.resolution, args.resolution);
      const std::string csv_path = (fs::path(args.out_dir) / "grid.csv").string();
      const std::string ppm_path = (fs::path(args.out_dir) / "grid.ppm").string();
      write_grid_csv(csv_path, grid);
      write_ppm_heatmap(ppm_path, grid);
      files.push_back(csv_path);
      files.push_back(ppm_path);
      report["grid"] = {{"files", {csv_path, ppm_path}},
                        {"bounds", {lx, hx, ly, hy}},
                        {"res_x", grid.res_x},
                        {"res_y", grid.res_y}};
    }

    if (want_logz) {
      if (!ds) throw ConfigError("eval: logz requires a dataset for the proposal moments");
      GaussianProposal prop;
      prop.mean = dataset_mean(ds->data);
      prop.cov = dataset_covariance(ds->data);
      prop.diagonal = ds->data.dim > 20;
      LogZEstimate z = estimate_log_partition(model, prop, args.logz_samples, args.logz_repeats,
                                              args.seed);
      if (z.variance > 0.5)
        std::fprintf(stderr,
                     "warning: log-partition repeat variance %.3g exceeds 0.5 nats; "
                     "estimate is unreliable\n",
                     z.variance);
      report["logz"] = {{"log_z", z.log_z},
                        {"repeats", z.repeats},
                        {"samples_per_repeat", z.samples_per_repeat},
                        {"variance", z.variance},
                        {"unreliable", z.variance > 0.5}};
      if (want_ll) {
        const double ll = avg_log_likelihood(model, z, ds->data);
        double jac = 0.0;
        if (ds->data.standardization)
          for (double s : ds->data.standardization->std) jac -= std::log(s);
        report["ll"] = {{"avg_log_likelihood", ll},
                        {"jacobian_correction", jac},
                        {"corrected", ll + jac}};
      }
    }
  }

  if (want_modes) {
    if (ck.kind != "generator") throw ConfigError("eval: modes requires a generator checkpoint");
    if (!ds || !ds->mixture)
      throw ConfigError("eval: modes requires a dataset manifest with a mixture spec");
    GeneratorModel gen(ck.config, ck.params);
    const Vec samples = sample_direct(gen, args.mode_samples, args.seed);
    ModeReport mr = mode_coverage(samples, args.mode_samples, *ds->mixture,
                                  args.mode_radius_sigmas);
    report["modes"] = {{"modes_hit", mr.modes_hit},
                       {"total_modes", mr.total_modes},
                       {"reverse_kl", mr.reverse_kl},
                       {"unassigned_fraction", mr.unassigned_fraction},
                       {"histogram", mr.histogram},
                       {"sample_count", mr.sample_count}};
  }

  const std::string report_path = (fs::path(args.out_dir) / "report.json").string();
  std::ofstream out(report_path);
  if (!out) throw ConfigError("cannot write " + report_path);
  out << report.dump(1) << "\n";
  files.push_back(report_path);
  write_run_manifest(args.out_dir, "eval", files);
  return files;
}

// --- argv parsing -----------------------------------------------------------

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"denoising density estimation toolkit"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen_data = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen_data->add_option("name", gd.name, "two_spirals | checkerboard | gaussian_grid | gaussian")
      ->required();
  gen_data->add_option("n", gd.n, "number of samples")->required();
  gen_data->add_option("--seed", gd.seed, "rng seed");
  gen_data->add_option("--out", gd.out_dir, "output directory")->required();
  gen_data->add_option("--noise-std", gd.noise_std, "two_spirals noise std");
  gen_data->add_option("--k-side", gd.k_side, "gaussian_grid modes per side");
  gen_data->add_option("--spacing", gd.spacing, "gaussian_grid spacing");
  gen_data->add_option("--std", gd.std_dev, "gaussian_grid component std");
  gen_data->add_option("--mean", gd.mean, "gaussian mean vector");
  gen_data->add_option("--var", gd.var, "gaussian per-dim variance");

  std::string config_path, resume_path, p_dde_path;
  CommonOverrides ov;
  std::uint64_t seed_ov = 0;
  bool seed_set = false;
  std::string out_ov;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run config JSON")->required();
    cmd->add_option_function<std::uint64_t>(
           "--seed", [&](const std::uint64_t& v) { seed_ov = v; seed_set = true; },
           "override the config seed");
    cmd->add_option("--out", out_ov, "override the output directory");
    cmd->add_option("--threads", ov.threads, "worker threads (env DDE_THREADS as fallback)");
  };

  auto* train_dde_cmd = app.add_subcommand("train-dde", "train a denoising density estimator");
  add_common(train_dde_cmd);
  train_dde_cmd->add_option("--resume", resume_path, "checkpoint to resume from");

  auto* train_gen_cmd = app.add_subcommand("train-gen", "train a one-step generator");
  add_common(train_gen_cmd);
  train_gen_cmd->add_option("--p-dde", p_dde_path, "pre-trained data DDE checkpoint")->required();

  SampleArgs sa;
  auto* sample_cmd = app.add_subcommand("sample", "draw samples from a checkpoint");
  sample_cmd->add_option("--checkpoint", sa.checkpoint)->required();
  sample_cmd->add_option("--n", sa.n)->required();
  sample_cmd->add_option("--mode", sa.mode, "direct | ald")->required();
  sample_cmd->add_option("--out", sa.out_dir)->required();
  sample_cmd->add_option("--seed", sa.seed);
  sample_cmd->add_option("--format", sa.format, "csv | bin");
  sample_cmd->add_option("--ald-levels", sa.ald_levels);
  sample_cmd->add_option("--ald-sigma-max", sa.ald_sigma_max);
  sample_cmd->add_option("--ald-steps-per-level", sa.ald_steps_per_level);
  sample_cmd->add_option("--ald-step-size", sa.ald_step_size);
  sample_cmd->add_option("--init-lo", sa.init_lo);
  sample_cmd->add_option("--init-hi", sa.init_hi);

  EvalArgs ea;
  std::string tasks_csv;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", ea.checkpoint)->required();
  eval_cmd->add_option("--dataset", ea.dataset, "csv or dataset manifest");
  eval_cmd->add_option("--tasks", tasks_csv, "comma-separated: grid,logz,ll,modes")->required();
  eval_cmd->add_option("--out", ea.out_dir)->required();
  eval_cmd->add_option("--seed", ea.seed);
  eval_cmd->add_flag("--standardize", ea.standardize);
  eval_cmd->add_option("--bounds-lo-x", ea.bounds_lo_x);
  eval_cmd->add_option("--bounds-hi-x", ea.bounds_hi_x);
  eval_cmd->add_option("--bounds-lo-y", ea.bounds_lo_y);
  eval_cmd->add_option("--bounds-hi-y", ea.bounds_hi_y);
  eval_cmd->add_option("--resolution", ea.resolution);
  eval_cmd->add_option("--logz-samples", ea.logz_samples);
  eval_cmd->add_option("--logz-repeats", ea.logz_repeats);
  eval_cmd->add_option("--mode-samples", ea.mode_samples);
  eval_cmd->add_option("--mode-radius", ea.mode_radius_sigmas);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (seed_set) ov.seed = seed_ov;
    if (!out_ov.empty()) ov.out_dir = out_ov;
    if (gen_data->parsed()) {
      cmd_gen_data(gd);
    } else if (train_dde_cmd->parsed()) {
      cmd_train_dde(config_path, ov,
                    resume_path.empty() ? std::nullopt : std::optional<std::string>(resume_path));
    } else if (train_gen_cmd->parsed()) {
      cmd_train_gen(config_path, p_dde_path, ov);
    } else if (sample_cmd->parsed()) {
      cmd_sample(sa);
    } else if (eval_cmd->parsed()) {
      std::size_t start = 0;
      while (start <= tasks_csv.size()) {
        const std::size_t pos = tasks_csv.find(',', start);
        const std::string tok = tasks_csv.substr(
            start, pos == std::string::npos ? std::string::npos : pos - start);
        if (!tok.empty()) ea.tasks.push_back(tok);
        if (pos == std::string::npos) break;
        start = pos + 1;
      }
      cmd_eval(ea);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}

}  // namespace dde
