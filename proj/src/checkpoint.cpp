#include "dde/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "dde/errors.hpp"

namespace dde {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double_exact(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw ConfigError("checkpoint: malformed number '" + s + "'");
  return v;
}

namespace {

json vec_to_json(const Vec& v) {
  json arr = json::array();
  for (double x : v) arr.push_back(format_double(x));
  return arr;
}

Vec vec_from_json(const json& arr) {
  Vec v;
  v.reserve(arr.size());
  for (const auto& e : arr) v.push_back(parse_double_exact(e.get<std::string>()));
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  json j;
  j["kind"] = ck.kind;
  j["config"] = {{"in_dim", ck.config.in_dim},   {"out_dim", ck.config.out_dim},
                 {"layers", ck.config.layers},   {"channels", ck.config.channels},
                 {"residual", ck.config.residual}, {"activation", ck.config.activation}};
  j["seed"] = ck.seed;
  if (ck.kind == "dde") j["sigma_eta"] = format_double(ck.sigma_eta);
  j["params"] = vec_to_json(ck.params);
  json meta;
  meta["step"] = ck.step;
  meta["dataset"] = ck.dataset;
  if (!ck.opt.m.empty()) {
    meta["adam_t"] = ck.opt.t;
    meta["adam_m"] = vec_to_json(ck.opt.m);
    meta["adam_v"] = vec_to_json(ck.opt.v);
  }
  j["metadata"] = std::move(meta);

  std::ofstream out(path);
  if (!out) throw ConfigError("save_checkpoint: cannot open " + path);
  out << j.dump(1) << "\n";
  if (!out) throw ConfigError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_checkpoint: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("load_checkpoint: invalid JSON in " + path + ": " + e.what());
  }
  Checkpoint ck;
  try {
    ck.kind = j.at("kind").get<std::string>();
    const json& c = j.at("config");
    ck.config.in_dim = c.at("in_dim").get<int>();
    ck.config.out_dim = c.at("out_dim").get<int>();
    ck.config.layers = c.at("layers").get<int>();
    ck.config.channels = c.at("channels").get<int>();
    ck.config.residual = c.at("residual").get<bool>();
    ck.config.activation = c.at("activation").get<std::string>();
    ck.seed = j.at("seed").get<std::uint64_t>();
    if (ck.kind == "dde") ck.sigma_eta = parse_double_exact(j.at("sigma_eta").get<std::string>());
    ck.params = vec_from_json(j.at("params"));
    if (j.contains("metadata")) {
      const json& m = j.at("metadata");
      ck.step = m.value("step", 0L);
      ck.dataset = m.value("dataset", std::string{});
      if (m.contains("adam_m")) {
        ck.opt.t = m.at("adam_t").get<long>();
        ck.opt.m = vec_from_json(m.at("adam_m"));
        ck.opt.v = vec_from_json(m.at("adam_v"));
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError("load_checkpoint: bad checkpoint " + path + ": " + e.what());
  }
  if (ck.kind != "dde" && ck.kind != "generator")
    throw ConfigError("load_checkpoint: unknown kind '" + ck.kind + "'");
  const MlpLayout lt = mlp_layout(ck.config);
  if (static_cast<int>(ck.params.size()) != lt.total)
    throw ConfigError("load_checkpoint: parameter count does not match config");
  return ck;
}

}  // namespace dde
