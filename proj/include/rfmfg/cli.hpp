#pragma once

// Run configuration and orchestration behind the `rfmfg` command line tool.
//
// Config files are JSON objects. Top-level keys:
//   experiment   "a" | "b" | "c" | "custom"
//   d            state dimension
//   mu, sigma    kernel intensity and radius (preset defaults when absent)
//   sigma_hat    dimensionless radius, experiment c only
//   r, agents, time_steps, horizon, threads, output_dir
// and the sections "solver", "seeds", "exports", "kernel_bench", "custom".
// Unknown keys are errors. The fully resolved configuration is written back
// as JSON to <output_dir>/resolved_config.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rfmfg/kernels.hpp"
#include "rfmfg/problem.hpp"
#include "rfmfg/reporting.hpp"
#include "rfmfg/solver.hpp"

namespace rfmfg {

inline constexpr const char* kVersion = "0.1.0";

/// Process exit statuses of `run`.
enum ExitStatus : int {
  kExitConverged = 0,
  kExitUsage = 1,
  kExitNotConverged = 2,
  kExitDiverged = 3,
  kExitIo = 4,
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct CustomProblemConfig {
  double kinetic_weight = 0.5;
  std::optional<ObstacleSpec> obstacle;
  double terminal_weight = 10.0;
  std::vector<double> target;                 // zeros(d) when empty
  std::vector<std::vector<double>> centers;   // {zeros(d)} when empty
  double initial_std = 0.1;
  std::size_t interaction_dims = 0;           // min(2, d) when 0
  bool operator==(const CustomProblemConfig&) const = default;
};

struct SeedConfig {
  std::uint64_t frequencies = 1;
  std::uint64_t initial_positions = 2;
  std::uint64_t init_controls = 3;
  std::uint64_t init_duals = 4;
  bool operator==(const SeedConfig&) const = default;
};

struct ExportConfig {
  bool trajectories = true;
  std::string trajectory_format = "csv";
  bool kernel_error_curve = false;
  bool kernel_slice = false;
  bool operator==(const ExportConfig&) const = default;
};

struct KernelBenchConfig {
  std::vector<std::size_t> r_values{32, 64, 128, 256, 512, 1024, 2048};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  double slice_radius = 2.5;
  std::size_t slice_points = 201;
  std::uint64_t slice_direction_seed = 0;
  bool operator==(const KernelBenchConfig&) const = default;
};

struct SolverSection {
  double h_v = 0.2;
  double h_a = 0.5;
  std::size_t max_iterations = 2000;
  double tolerance = 1e-6;
  std::string prox_mode = "linearized";
  std::string gradient_scaling = "preconditioned";
  std::string control_init = "zeros";
  double control_init_scale = 0.1;
  std::string dual_init = "zeros";
  double dual_init_scale = 0.1;
  std::size_t record_history_every = 10;
  bool operator==(const SolverSection&) const = default;
};

struct RunConfig {
  std::string experiment = "a";
  std::size_t dimension = 2;
  std::optional<double> mu;
  std::optional<double> sigma;
  std::optional<double> sigma_hat;
  std::size_t features = 512;
  std::size_t agents = 256;
  std::size_t time_steps = 50;
  double horizon = 1.0;
  std::size_t threads = 1;
  std::string output_dir = "out";
  SolverSection solver;
  SeedConfig seeds;
  ExportConfig exports;
  KernelBenchConfig kernel_bench;
  CustomProblemConfig custom;
  bool operator==(const RunConfig&) const = default;
};

namespace detail {

using nlohmann::json;

inline std::string type_name(const json& v) {
  if (v.is_string()) return "string";
  if (v.is_boolean()) return "boolean";
  if (v.is_number()) return "number";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

[[noreturn]] inline void type_error(const std::string& key, const char* expected, const json& v) {
  throw ConfigError("config: key '" + key + "' expects " + expected + ", got " + type_name(v));
}

inline double as_real(const json& v, const std::string& key) {
  if (!v.is_number()) type_error(key, "a number", v);
  return v.get<double>();
}

inline std::uint64_t as_uint(const json& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
  if (v.is_number_float()) {
    const double x = v.get<double>();
    if (x >= 0.0 && x == std::floor(x) && x < 1.8e19) return static_cast<std::uint64_t>(x);
  }
  type_error(key, "a nonnegative integer", v);
}

inline bool as_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) type_error(key, "a boolean", v);
  return v.get<bool>();
}

inline std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) type_error(key, "a string", v);
  return v.get<std::string>();
}

inline std::vector<double> as_vector(const json& v, const std::string& key) {
  if (!v.is_array()) type_error(key, "an array of numbers", v);
  std::vector<double> out;
  for (const auto& x : v) out.push_back(as_real(x, key));
  return out;
}

inline const json& as_object(const json& v, const std::string& key) {
  if (!v.is_object()) type_error(key, "an object", v);
  return v;
}

inline void check_keys(const json& obj, const std::string& section, const std::set<std::string>& allowed) {
  for (const auto& [k, _] : obj.items())
    if (!allowed.contains(k))
      throw ConfigError("config: unknown key '" + (section.empty() ? k : section + "." + k) + "'");
}

inline void check_choice(const std::string& key, const std::string& value,
                         std::initializer_list<const char*> choices) {
  for (const char* c : choices)
    if (value == c) return;
  std::string list;
  for (const char* c : choices) list += (list.empty() ? "" : ", ") + std::string(c);
  throw ConfigError("config: key '" + key + "' must be one of " + list + ", got '" + value + "'");
}

}  // namespace detail

/// Validates cross-field constraints. Throws ConfigError.
inline void validate_config(const RunConfig& c) {
  detail::check_choice("experiment", c.experiment, {"a", "b", "c", "custom"});
  if (c.features < 2 || c.features % 2 != 0)
    throw ConfigError("config: key 'r' must be even and >= 2, got " + std::to_string(c.features));
  if (c.agents < 1) throw ConfigError("config: key 'agents' must be >= 1");
  if (c.time_steps < 2) throw ConfigError("config: key 'time_steps' must be >= 2");
  if (c.dimension < 1) throw ConfigError("config: key 'd' must be >= 1");
  if (c.sigma_hat && c.experiment != "c")
    throw ConfigError("config: key 'sigma_hat' only applies to experiment c");
  detail::check_choice("solver.prox_mode", c.solver.prox_mode, {"linearized", "exact_prox"});
  detail::check_choice("solver.gradient_scaling", c.solver.gradient_scaling, {"preconditioned", "metric", "raw"});
  detail::check_choice("solver.control_init", c.solver.control_init, {"zeros", "random"});
  detail::check_choice("solver.dual_init", c.solver.dual_init, {"zeros", "random"});
  detail::check_choice("exports.trajectory_format", c.exports.trajectory_format, {"csv", "json"});
  for (std::size_t r : c.kernel_bench.r_values)
    if (r < 2 || r % 2 != 0)
      throw ConfigError("config: kernel_bench.r_values entries must be even and >= 2");
}

inline RunConfig parse_config(const nlohmann::json& doc) {
  using detail::as_bool;
  using detail::as_real;
  using detail::as_string;
  using detail::as_uint;
  RunConfig c;
  detail::as_object(doc, "<root>");
  detail::check_keys(doc, "", {"experiment", "d", "mu", "sigma", "sigma_hat", "r", "agents", "time_steps",
                               "horizon", "threads", "output_dir", "solver", "seeds", "exports",
                               "kernel_bench", "custom"});
  for (const auto& [k, v] : doc.items()) {
    if (k == "experiment") c.experiment = as_string(v, k);
    else if (k == "d") c.dimension = as_uint(v, k);
    else if (k == "mu") c.mu = v.is_null() ? std::nullopt : std::optional(as_real(v, k));
    else if (k == "sigma") c.sigma = v.is_null() ? std::nullopt : std::optional(as_real(v, k));
    else if (k == "sigma_hat") c.sigma_hat = v.is_null() ? std::nullopt : std::optional(as_real(v, k));
    else if (k == "r") c.features = as_uint(v, k);
    else if (k == "agents") c.agents = as_uint(v, k);
    else if (k == "time_steps") c.time_steps = as_uint(v, k);
    else if (k == "horizon") c.horizon = as_real(v, k);
    else if (k == "threads") c.threads = as_uint(v, k);
    else if (k == "output_dir") c.output_dir = as_string(v, k);
    else if (k == "solver") {
      detail::as_object(v, k);
      detail::check_keys(v, k, {"h_v", "h_a", "max_iterations", "tolerance", "prox_mode", "gradient_scaling",
                                "control_init", "control_init_scale", "dual_init", "dual_init_scale",
                                "record_history_every"});
      auto& s = c.solver;
      for (const auto& [sk, sv] : v.items()) {
        const std::string key = "solver." + sk;
        if (sk == "h_v") s.h_v = as_real(sv, key);
        else if (sk == "h_a") s.h_a = as_real(sv, key);
        else if (sk == "max_iterations") s.max_iterations = as_uint(sv, key);
        else if (sk == "tolerance") s.tolerance = as_real(sv, key);
        else if (sk == "prox_mode") s.prox_mode = as_string(sv, key);
        else if (sk == "gradient_scaling") s.gradient_scaling = as_string(sv, key);
        else if (sk == "control_init") s.control_init = as_string(sv, key);
        else if (sk == "control_init_scale") s.control_init_scale = as_real(sv, key);
        else if (sk == "dual_init") s.dual_init = as_string(sv, key);
        else if (sk == "dual_init_scale") s.dual_init_scale = as_real(sv, key);
        else if (sk == "record_history_every") s.record_history_every = as_uint(sv, key);
      }
    } else if (k == "seeds") {
      detail::as_object(v, k);
      detail::check_keys(v, k, {"frequencies", "initial_positions", "init_controls", "init_duals"});
      for (const auto& [sk, sv] : v.items()) {
        const std::string key = "seeds." + sk;
        if (sk == "frequencies") c.seeds.frequencies = as_uint(sv, key);
        else if (sk == "initial_positions") c.seeds.initial_positions = as_uint(sv, key);
        else if (sk == "init_controls") c.seeds.init_controls = as_uint(sv, key);
        else if (sk == "init_duals") c.seeds.init_duals = as_uint(sv, key);
      }
    } else if (k == "exports") {
      detail::as_object(v, k);
      detail::check_keys(v, k, {"trajectories", "trajectory_format", "kernel_error_curve", "kernel_slice"});
      for (const auto& [sk, sv] : v.items()) {
        const std::string key = "exports." + sk;
        if (sk == "trajectories") c.exports.trajectories = as_bool(sv, key);
        else if (sk == "trajectory_format") c.exports.trajectory_format = as_string(sv, key);
        else if (sk == "kernel_error_curve") c.exports.kernel_error_curve = as_bool(sv, key);
        else if (sk == "kernel_slice") c.exports.kernel_slice = as_bool(sv, key);
      }
    } else if (k == "kernel_bench") {
      detail::as_object(v, k);
      detail::check_keys(v, k, {"r_values", "seeds", "slice_radius", "slice_points", "slice_direction_seed"});
      auto& kb = c.kernel_bench;
      for (const auto& [sk, sv] : v.items()) {
        const std::string key = "kernel_bench." + sk;
        if (sk == "r_values" || sk == "seeds") {
          if (!sv.is_array()) detail::type_error(key, "an array of integers", sv);
          std::vector<std::uint64_t> xs;
          for (const auto& x : sv) xs.push_back(as_uint(x, key));
          if (sk == "seeds") kb.seeds = xs;
          else kb.r_values.assign(xs.begin(), xs.end());
        } else if (sk == "slice_radius") kb.slice_radius = as_real(sv, key);
        else if (sk == "slice_points") kb.slice_points = as_uint(sv, key);
        else if (sk == "slice_direction_seed") kb.slice_direction_seed = as_uint(sv, key);
      }
    } else if (k == "custom") {
      detail::as_object(v, k);
      detail::check_keys(v, k, {"kinetic_weight", "obstacle", "terminal_weight", "target", "centers",
                                "initial_std", "interaction_dims"});
      auto& cu = c.custom;
      for (const auto& [sk, sv] : v.items()) {
        const std::string key = "custom." + sk;
        if (sk == "kinetic_weight") cu.kinetic_weight = as_real(sv, key);
        else if (sk == "terminal_weight") cu.terminal_weight = as_real(sv, key);
        else if (sk == "target") cu.target = detail::as_vector(sv, key);
        else if (sk == "initial_std") cu.initial_std = as_real(sv, key);
        else if (sk == "interaction_dims") cu.interaction_dims = as_uint(sv, key);
        else if (sk == "centers") {
          if (!sv.is_array()) detail::type_error(key, "an array of points", sv);
          cu.centers.clear();
          for (const auto& p : sv) cu.centers.push_back(detail::as_vector(p, key));
        } else if (sk == "obstacle") {
          if (sv.is_null()) {
            cu.obstacle.reset();
            continue;
          }
          detail::as_object(sv, key);
          detail::check_keys(sv, key, {"weight", "quadratic_form"});
          ObstacleSpec ob;
          if (sv.contains("weight")) ob.weight = as_real(sv["weight"], key + ".weight");
          if (sv.contains("quadratic_form")) {
            const auto q = detail::as_vector(sv["quadratic_form"], key + ".quadratic_form");
            if (q.size() != 4) throw ConfigError("config: key '" + key + ".quadratic_form' needs 4 entries");
            std::copy(q.begin(), q.end(), ob.quadratic_form.begin());
          }
          cu.obstacle = ob;
        }
      }
    }
  }
  validate_config(c);
  return c;
}

inline RunConfig parse_config(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  return parse_config(doc);
}

inline RunConfig parse_config(const char* text) { return parse_config(std::string(text)); }

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

/// Problem described by a config (preset with overrides, or custom).
inline MFGProblem build_problem(const RunConfig& c) {
  if (c.experiment != "custom") {
    PresetOverrides o;
    o.mu = c.mu;
    o.sigma = c.sigma;
    o.sigma_hat = c.sigma_hat;
    o.horizon = c.horizon;
    return preset(c.experiment, c.dimension, o);
  }
  const std::size_t d = c.dimension;
  MFGProblem p;
  p.dimension = d;
  p.horizon = c.horizon;
  p.lagrangian.kinetic_weight = c.custom.kinetic_weight;
  p.lagrangian.obstacle = c.custom.obstacle;
  p.terminal.weight = c.custom.terminal_weight;
  p.terminal.target = c.custom.target.empty() ? std::vector<double>(d, 0.0) : c.custom.target;
  p.initial.centers = c.custom.centers.empty() ? std::vector<std::vector<double>>{std::vector<double>(d, 0.0)}
                                               : c.custom.centers;
  p.initial.std = c.custom.initial_std;
  p.kernel = {c.mu.value_or(10.0), c.sigma.value_or(0.2),
              c.custom.interaction_dims ? c.custom.interaction_dims : std::min<std::size_t>(2, d)};
  p.validate();
  return p;
}

/// Config with every default made explicit. Kernel parameters are recorded
/// as the resolved (mu, sigma) pair, so experiment c no longer needs sigma_hat.
inline RunConfig resolve_config(const RunConfig& c) {
  validate_config(c);
  RunConfig r = c;
  const MFGProblem p = build_problem(c);
  r.mu = p.kernel.mu;
  r.sigma = p.kernel.sigma;
  r.sigma_hat.reset();
  if (r.experiment == "custom") {
    r.custom.target = p.terminal.target;
    r.custom.centers = p.initial.centers;
    r.custom.interaction_dims = p.kernel.interaction_dims;
  }
  return r;
}

inline nlohmann::json emit_config(const RunConfig& c) {
  nlohmann::json j;
  j["experiment"] = c.experiment;
  j["d"] = c.dimension;
  j["mu"] = c.mu ? nlohmann::json(*c.mu) : nlohmann::json(nullptr);
  j["sigma"] = c.sigma ? nlohmann::json(*c.sigma) : nlohmann::json(nullptr);
  j["sigma_hat"] = c.sigma_hat ? nlohmann::json(*c.sigma_hat) : nlohmann::json(nullptr);
  j["r"] = c.features;
  j["agents"] = c.agents;
  j["time_steps"] = c.time_steps;
  j["horizon"] = c.horizon;
  j["threads"] = c.threads;
  j["output_dir"] = c.output_dir;
  const auto& s = c.solver;
  j["solver"] = {{"h_v", s.h_v},
                 {"h_a", s.h_a},
                 {"max_iterations", s.max_iterations},
                 {"tolerance", s.tolerance},
                 {"prox_mode", s.prox_mode},
                 {"gradient_scaling", s.gradient_scaling},
                 {"control_init", s.control_init},
                 {"control_init_scale", s.control_init_scale},
                 {"dual_init", s.dual_init},
                 {"dual_init_scale", s.dual_init_scale},
                 {"record_history_every", s.record_history_every}};
  j["seeds"] = {{"frequencies", c.seeds.frequencies},
                {"initial_positions", c.seeds.initial_positions},
                {"init_controls", c.seeds.init_controls},
                {"init_duals", c.seeds.init_duals}};
  j["exports"] = {{"trajectories", c.exports.trajectories},
                  {"trajectory_format", c.exports.trajectory_format},
                  {"kernel_error_curve", c.exports.kernel_error_curve},
                  {"kernel_slice", c.exports.kernel_slice}};
  j["kernel_bench"] = {{"r_values", c.kernel_bench.r_values},
                       {"seeds", c.kernel_bench.seeds},
                       {"slice_radius", c.kernel_bench.slice_radius},
                       {"slice_points", c.kernel_bench.slice_points},
                       {"slice_direction_seed", c.kernel_bench.slice_direction_seed}};
  const auto& cu = c.custom;
  nlohmann::json obstacle = nullptr;
  if (cu.obstacle)
    obstacle = {{"weight", cu.obstacle->weight},
                {"quadratic_form", std::vector<double>(cu.obstacle->quadratic_form.begin(),
                                                       cu.obstacle->quadratic_form.end())}};
  j["custom"] = {{"kinetic_weight", cu.kinetic_weight}, {"obstacle", obstacle},
                 {"terminal_weight", cu.terminal_weight}, {"target", cu.target},
                 {"centers", cu.centers}, {"initial_std", cu.initial_std},
                 {"interaction_dims", cu.interaction_dims}};
  return j;
}

inline SolverConfig solver_config(const RunConfig& c) {
  SolverConfig s;
  s.h_v = c.solver.h_v;
  s.h_a = c.solver.h_a;
  s.max_iterations = c.solver.max_iterations;
  s.tolerance = c.solver.tolerance;
  s.prox_mode = c.solver.prox_mode == "exact_prox" ? ProxMode::ExactProx : ProxMode::Linearized;
  s.gradient_scaling = c.solver.gradient_scaling == "raw"      ? GradientScaling::Raw
                       : c.solver.gradient_scaling == "metric" ? GradientScaling::Metric
                                                               : GradientScaling::Preconditioned;
  s.control_init = c.solver.control_init == "random" ? InitMode::Random : InitMode::Zeros;
  s.control_init_scale = c.solver.control_init_scale;
  s.control_seed = c.seeds.init_controls;
  s.dual_init = c.solver.dual_init == "random" ? InitMode::Random : InitMode::Zeros;
  s.dual_init_scale = c.solver.dual_init_scale;
  s.dual_seed = c.seeds.init_duals;
  s.record_history_every = c.solver.record_history_every;
  s.threads = c.threads;
  return s;
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cli: cannot open '" + path.string() + "' for writing");
  os << text;
  if (!os) throw IoError("cli: write to '" + path.string() + "' failed");
}

inline std::filesystem::path prepare_output(const RunConfig& resolved) {
  const std::filesystem::path out(resolved.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw IoError("cli: cannot create output directory '" + out.string() + "': " + ec.message());
  write_text(out / "resolved_config", emit_config(resolved).dump(2) + "\n");
  return out;
}

inline std::vector<double> slice_direction(std::size_t dims, std::uint64_t seed) {
  Rng rng(seed, Stream::Evaluation);
  std::vector<double> dir(dims);
  double n2 = 0.0;
  while (n2 == 0.0) {
    for (double& x : dir) x = rng.normal();
    n2 = squared_norm(dir);
  }
  for (double& x : dir) x /= std::sqrt(n2);
  return dir;
}

inline void write_kernel_exports(const RunConfig& c, const MFGProblem& problem,
                                 const std::filesystem::path& out, bool curve, bool slice) {
  if (curve)
    export_kernel_error_curve(problem.kernel, c.kernel_bench.r_values, c.kernel_bench.seeds,
                              default_evaluation_points(problem, c.seeds.initial_positions),
                              out / "kernel_error_curve.csv");
  if (slice) {
    const auto basis = sample_frequencies(problem.kernel, c.features, c.seeds.frequencies);
    const auto dir = slice_direction(problem.kernel.interaction_dims, c.kernel_bench.slice_direction_seed);
    export_kernel_slice(problem.kernel, basis, dir, c.kernel_bench.slice_radius,
                        c.kernel_bench.slice_points, out / "kernel_slice.csv");
  }
}

}  // namespace detail

/// Solves the configured problem and populates output_dir. Returns an
/// ExitStatus; configuration errors propagate as exceptions.
inline int run(const RunConfig& config, std::ostream* log = nullptr, std::ostream& err = std::cerr) {
  const RunConfig resolved = resolve_config(config);
  try {
    const auto out = detail::prepare_output(resolved);
    const MFGProblem problem = build_problem(resolved);
    const auto basis = sample_frequencies(problem.kernel, resolved.features, resolved.seeds.frequencies);
    const Matrix x0 = sample_initial_positions(problem.initial, resolved.agents, resolved.seeds.initial_positions);
    const Discretization disc(resolved.time_steps, problem.horizon);
    SolverConfig sc = solver_config(resolved);
    sc.log = log;

    Solution sol;
    try {
      sol = solve(problem, basis, x0, disc, sc);
    } catch (const DivergedError& e) {
      export_residual_history(e.trace(), out / "residual_history.csv");
      err << e.what() << '\n';
      return kExitDiverged;
    }
    if (resolved.exports.trajectories)
      export_trajectories(sol, out / ("trajectories." + resolved.exports.trajectory_format), disc,
                          resolved.exports.trajectory_format);
    export_cost_report(sol.cost_report, out / "cost_report.json");
    export_residual_history(sol.residual_history, out / "residual_history.csv");
    detail::write_kernel_exports(resolved, problem, out, resolved.exports.kernel_error_curve,
                                 resolved.exports.kernel_slice);
    if (!sol.converged) {
      err << "solver: no convergence after " << sol.iterations << " iterations\n";
      return kExitNotConverged;
    }
    return kExitConverged;
  } catch (const IoError& e) {
    err << e.what() << '\n';
    return kExitIo;
  }
}

/// Kernel approximation exports only: kernel_error_curve.csv and kernel_slice.csv.
inline int run_kernel_bench(const RunConfig& config, std::ostream& err = std::cerr) {
  const RunConfig resolved = resolve_config(config);
  try {
    const auto out = detail::prepare_output(resolved);
    detail::write_kernel_exports(resolved, build_problem(resolved), out, true, true);
    return kExitConverged;
  } catch (const IoError& e) {
    err << e.what() << '\n';
    return kExitIo;
  }
}

}  // namespace rfmfg
