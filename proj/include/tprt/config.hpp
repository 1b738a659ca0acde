#ifndef TPRT_CONFIG_HPP_
#define TPRT_CONFIG_HPP_
//! \file config.hpp
//  \brief Strict JSON experiment configuration. Physics parameters are always
//         explicit; only iteration tolerances carry (documented) defaults.
//         Unknown keys are rejected so typos cannot silently change a run.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tprt/fields.hpp"
#include "tprt/forward_semilinear.hpp"
#include "tprt/geometry.hpp"
#include "tprt/phantom.hpp"
#include "tprt/source.hpp"

namespace tprt {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace cfgdetail {

using json = nlohmann::json;

inline void require_keys(const json& j, const std::string& where,
                         const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      throw ConfigError(where + ": unknown key '" + item.key() + "'");
}

inline const json& require(const json& j, const std::string& where, const std::string& key) {
  if (!j.contains(key)) throw ConfigError(where + ": missing required key '" + key + "'");
  return j.at(key);
}

inline double require_number(const json& j, const std::string& where, const std::string& key) {
  const json& v = require(j, where, key);
  if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
  return v.get<double>();
}

inline int require_int(const json& j, const std::string& where, const std::string& key) {
  const json& v = require(j, where, key);
  if (!v.is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
  return v.get<int>();
}

inline std::string require_string(const json& j, const std::string& where, const std::string& key) {
  const json& v = require(j, where, key);
  if (!v.is_string()) throw ConfigError(where + "." + key + ": expected a string");
  return v.get<std::string>();
}

inline double number_or(const json& j, const std::string& where, const std::string& key,
                        double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
  return v.get<double>();
}

inline int int_or(const json& j, const std::string& where, const std::string& key, int fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
  return v.get<int>();
}

inline bool bool_or(const json& j, const std::string& where, const std::string& key,
                    bool fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_boolean()) throw ConfigError(where + "." + key + ": expected a boolean");
  return v.get<bool>();
}

inline Vec2 require_vec2(const json& j, const std::string& where, const std::string& key) {
  const json& v = require(j, where, key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError(where + "." + key + ": expected [x, y]");
  return {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace cfgdetail

struct KernelConfig {
  std::string type = "isotropic";  // isotropic | peaked
  double g = 0.0;

  ScatteringKernel build(int n_v) const {
    if (type == "isotropic") return ScatteringKernel::isotropic(n_v);
    if (type == "peaked") return ScatteringKernel::peaked(n_v, g);
    throw ConfigError("kernel.type: expected 'isotropic' or 'peaked'");
  }
};

struct CoefficientsConfig {
  std::optional<PhantomSpec> phantom;
  std::optional<std::filesystem::path> sigma_a_csv, sigma_b_csv, sigma_s_csv;
  KernelConfig kernel;
};

struct SourceConfig {
  std::string type;  // general | collimated | point
  double value = 0.0;
  Vec2 direction{1.0, 0.0};
  Vec2 site{0.0, 0.0};
  double clear_radius = 0.0;
};

struct SolverBlock {
  double ray_step = 0.0;  // required
  // Iteration controls below default as documented here.
  double tol_source = 1e-10;
  int max_source_iters = 400;
  double tol_fixed_point = 1e-8;
  int max_outer_iters = 200;
  bool accelerate = true;
  bool enforce_admissibility = true;

  LinearSolveConfig linear() const {
    LinearSolveConfig c;
    c.ray_step = ray_step;
    c.tol_source = tol_source;
    c.max_source_iters = max_source_iters;
    c.accelerate = accelerate;
    return c;
  }
  SemilinearConfig semilinear() const {
    SemilinearConfig c;
    c.tol_fixed_point = tol_fixed_point;
    c.max_outer_iters = max_outer_iters;
    c.inner = linear();
    c.enforce_admissibility = enforce_admissibility;
    return c;
  }
};

struct ExperimentConfig {
  double Lx = 0.0, Ly = 0.0;
  int nx = 0, ny = 0, n_v = 0;
  CoefficientsConfig coefficients;
  SourceConfig source;
  SolverBlock solver;
  nlohmann::json task;  // validated by each subcommand
  std::string output = "out";
  std::uint64_t seed = 0;
  nlohmann::json raw;  // echoed into run reports

  SpatialGrid grid() const { return SpatialGrid(Lx, Ly, nx, ny); }
  AngularGrid angles() const { return AngularGrid(n_v); }
};

namespace cfgdetail {

inline PhantomSpec parse_phantom(const json& j) {
  const std::string where = "coefficients.phantom";
  const std::string name = require_string(j, where, "name");
  PhantomSpec spec;
  std::set<std::string> allowed = {"name", "sigma_a", "sigma_b", "sigma_s"};
  if (name == "constant") {
    spec.kind = PhantomSpec::Kind::constant;
    require_keys(j, where, allowed);
    spec.sigma_a_bg = require_number(j, where, "sigma_a");
    spec.sigma_b_bg = require_number(j, where, "sigma_b");
    spec.sigma_s_bg = require_number(j, where, "sigma_s");
    return spec;
  }
  if (name == "gaussian-inclusions") {
    spec.kind = PhantomSpec::Kind::gaussian_inclusions;
    allowed.insert({"sigma_a_amplitude", "sigma_b_amplitude", "sigma_s_amplitude", "bumps",
                    "sigma_b_clear"});
    require_keys(j, where, allowed);
    spec.sigma_a_bg = require_number(j, where, "sigma_a");
    spec.sigma_b_bg = require_number(j, where, "sigma_b");
    spec.sigma_s_bg = require_number(j, where, "sigma_s");
    spec.sigma_a_amp = number_or(j, where, "sigma_a_amplitude", 0.0);
    spec.sigma_b_amp = number_or(j, where, "sigma_b_amplitude", 0.0);
    spec.sigma_s_amp = number_or(j, where, "sigma_s_amplitude", 0.0);
    const json& bumps = require(j, where, "bumps");
    if (!bumps.is_array() || bumps.empty())
      throw ConfigError(where + ".bumps: expected a non-empty array");
    for (const json& bj : bumps) {
      require_keys(bj, where + ".bumps[]", {"cx", "cy", "width"});
      GaussianBump b;
      b.cx = require_number(bj, where + ".bumps[]", "cx");
      b.cy = require_number(bj, where + ".bumps[]", "cy");
      b.width = require_number(bj, where + ".bumps[]", "width");
      spec.bumps.push_back(b);
    }
    if (j.contains("sigma_b_clear")) {
      const json& cj = j.at("sigma_b_clear");
      require_keys(cj, where + ".sigma_b_clear", {"cx", "cy", "radius"});
      spec.sigma_b_clear.center = {require_number(cj, where + ".sigma_b_clear", "cx"),
                                   require_number(cj, where + ".sigma_b_clear", "cy")};
      spec.sigma_b_clear.radius = require_number(cj, where + ".sigma_b_clear", "radius");
    }
    return spec;
  }
  if (name == "checkerboard") {
    spec.kind = PhantomSpec::Kind::checkerboard;
    allowed.insert({"sigma_a_amplitude", "sigma_b_amplitude", "sigma_s_amplitude", "tiles"});
    require_keys(j, where, allowed);
    spec.sigma_a_bg = require_number(j, where, "sigma_a");
    spec.sigma_b_bg = require_number(j, where, "sigma_b");
    spec.sigma_s_bg = require_number(j, where, "sigma_s");
    spec.sigma_a_amp = number_or(j, where, "sigma_a_amplitude", 0.0);
    spec.sigma_b_amp = number_or(j, where, "sigma_b_amplitude", 0.0);
    spec.sigma_s_amp = number_or(j, where, "sigma_s_amplitude", 0.0);
    spec.tiles = require_int(j, where, "tiles");
    return spec;
  }
  throw ConfigError(where + ".name: expected constant | gaussian-inclusions | checkerboard");
}

}  // namespace cfgdetail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using namespace cfgdetail;
  require_keys(j, "config",
               {"grid", "coefficients", "source", "solver", "task", "output", "seed"});
  ExperimentConfig cfg;
  cfg.raw = j;

  const json& grid = require(j, "config", "grid");
  require_keys(grid, "grid", {"Lx", "Ly", "nx", "ny", "n_v"});
  cfg.Lx = require_number(grid, "grid", "Lx");
  cfg.Ly = require_number(grid, "grid", "Ly");
  cfg.nx = require_int(grid, "grid", "nx");
  cfg.ny = require_int(grid, "grid", "ny");
  cfg.n_v = require_int(grid, "grid", "n_v");
  if (!(cfg.Lx > 0.0) || !(cfg.Ly > 0.0)) throw ConfigError("grid: side lengths must be positive");
  if (cfg.nx < 2 || cfg.ny < 2) throw ConfigError("grid: nx and ny must be at least 2");
  if (cfg.n_v < 1) throw ConfigError("grid: n_v must be at least 1");

  const json& co = require(j, "config", "coefficients");
  require_keys(co, "coefficients", {"phantom", "csv", "kernel"});
  if (co.contains("phantom") == co.contains("csv"))
    throw ConfigError("coefficients: provide exactly one of 'phantom' or 'csv'");
  if (co.contains("phantom")) cfg.coefficients.phantom = parse_phantom(co.at("phantom"));
  if (co.contains("csv")) {
    const json& cj = co.at("csv");
    require_keys(cj, "coefficients.csv", {"sigma_a", "sigma_b", "sigma_s"});
    cfg.coefficients.sigma_a_csv = require_string(cj, "coefficients.csv", "sigma_a");
    cfg.coefficients.sigma_b_csv = require_string(cj, "coefficients.csv", "sigma_b");
    cfg.coefficients.sigma_s_csv = require_string(cj, "coefficients.csv", "sigma_s");
    for (const auto& p : {*cfg.coefficients.sigma_a_csv, *cfg.coefficients.sigma_b_csv,
                          *cfg.coefficients.sigma_s_csv})
      if (!std::filesystem::exists(p))
        throw ConfigError("coefficients.csv: file does not exist: " + p.string());
  }
  const json& kj = require(co, "coefficients", "kernel");
  require_keys(kj, "coefficients.kernel", {"type", "g"});
  cfg.coefficients.kernel.type = require_string(kj, "coefficients.kernel", "type");
  if (cfg.coefficients.kernel.type == "peaked")
    cfg.coefficients.kernel.g = require_number(kj, "coefficients.kernel", "g");
  else if (kj.contains("g"))
    throw ConfigError("coefficients.kernel: 'g' only applies to the peaked kernel");

  const json& so = require(j, "config", "source");
  cfg.source.type = require_string(so, "source", "type");
  if (cfg.source.type == "general") {
    require_keys(so, "source", {"type", "value"});
    cfg.source.value = require_number(so, "source", "value");
  } else if (cfg.source.type == "collimated") {
    require_keys(so, "source", {"type", "strength", "direction"});
    cfg.source.value = require_number(so, "source", "strength");
    cfg.source.direction = require_vec2(so, "source", "direction");
    const double n = cfg.source.direction.norm();
    if (!(n > 0.0)) throw ConfigError("source.direction: must be non-zero");
    cfg.source.direction = {cfg.source.direction.x / n, cfg.source.direction.y / n};
  } else if (cfg.source.type == "point") {
    require_keys(so, "source", {"type", "strength", "site", "clear_radius"});
    cfg.source.value = require_number(so, "source", "strength");
    cfg.source.site = require_vec2(so, "source", "site");
    cfg.source.clear_radius = require_number(so, "source", "clear_radius");
  } else {
    throw ConfigError("source.type: expected general | collimated | point");
  }

  const json& sv = require(j, "config", "solver");
  require_keys(sv, "solver",
               {"ray_step", "tol_source", "max_source_iters", "tol_fixed_point",
                "max_outer_iters", "accelerate", "enforce_admissibility"});
  cfg.solver.ray_step = require_number(sv, "solver", "ray_step");
  if (!(cfg.solver.ray_step > 0.0)) throw ConfigError("solver.ray_step: must be positive");
  cfg.solver.tol_source = number_or(sv, "solver", "tol_source", cfg.solver.tol_source);
  cfg.solver.max_source_iters = int_or(sv, "solver", "max_source_iters", cfg.solver.max_source_iters);
  cfg.solver.tol_fixed_point = number_or(sv, "solver", "tol_fixed_point", cfg.solver.tol_fixed_point);
  cfg.solver.max_outer_iters = int_or(sv, "solver", "max_outer_iters", cfg.solver.max_outer_iters);
  cfg.solver.accelerate = bool_or(sv, "solver", "accelerate", cfg.solver.accelerate);
  cfg.solver.enforce_admissibility =
      bool_or(sv, "solver", "enforce_admissibility", cfg.solver.enforce_admissibility);

  cfg.task = j.contains("task") ? j.at("task") : nlohmann::json::object();
  if (j.contains("output")) {
    if (!j.at("output").is_string()) throw ConfigError("output: expected a string");
    cfg.output = j.at("output").get<std::string>();
  }
  const json& seed = require(j, "config", "seed");
  if (!seed.is_number_unsigned() && !seed.is_number_integer())
    throw ConfigError("seed: expected a non-negative integer");
  const long long seed_ll = seed.get<long long>();
  if (seed_ll < 0) throw ConfigError("seed: expected a non-negative integer");
  cfg.seed = static_cast<std::uint64_t>(seed_ll);
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config JSON parse error: ") + e.what());
  }
  return parse_config(j);
}

}  // namespace tprt

#endif  // TPRT_CONFIG_HPP_
