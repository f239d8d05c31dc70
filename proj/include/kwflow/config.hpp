#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "kwflow/errors.hpp"
#include "kwflow/flow.hpp"
#include "kwflow/functionals.hpp"
#include "kwflow/generators.hpp"
#include "kwflow/mesh.hpp"
#include "kwflow/mesh_io.hpp"
#include "kwflow/operators.hpp"

namespace kwflow {

enum class SolverChoice { automatic, direct, cg };
enum class UniformizeMode { automatic, always, never };

struct RunConfig {
  std::string mesh_source;        // generator call like "flat_torus(32)" or a mesh file path
  std::string prescription_text;  // preset like "harmonic1:0.25" or "file:K.csv"
  FlowConfig flow;
  std::string output_dir = "out";
  SolverChoice solver = SolverChoice::automatic;
  UniformizeMode uniformize_mode = UniformizeMode::automatic;
  double uniformize_tol = 1e-10;
  int uniformize_max_iterations = 100;
  SeedOptions seed;
  double background_tol = -1.0;  // constant-curvature acceptance; <0 means the default
  std::string config_hash;       // FNV-1a of the raw config bytes, filled by the loader
};

inline std::string fnv1a_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(h));
  return buffer;
}

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

inline double config_real(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size() || !std::isfinite(out))
    throw ConfigError(key + ": bad real value '" + value + "'");
  return out;
}

inline int config_int(const std::string& key, const std::string& value) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    throw ConfigError(key + ": bad integer value '" + value + "'");
  return out;
}

}  // namespace detail

inline void validate_run_config(const RunConfig& config) {
  if (config.mesh_source.empty()) throw ConfigError("mesh.source is required");
  if (config.prescription_text.empty()) throw ConfigError("prescription is required");
  if (config.output_dir.empty()) throw ConfigError("output.dir must not be empty");
  if (config.uniformize_tol <= 0.0) throw ConfigError("uniformize.tol must be positive");
  if (config.uniformize_max_iterations < 1)
    throw ConfigError("uniformize.max_iterations must be at least 1");
  try {
    validate_flow_config(config.flow);
  } catch (const Error& e) {
    throw ConfigError(std::string("flow settings invalid: ") + e.what());
  }
}

inline RunConfig parse_run_config(const std::string& text) {
  RunConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = detail::trim(raw);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(number) + ": expected key=value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(number) + ": empty key or value");
    if (!seen.insert(key).second)
      throw ConfigError("config line " + std::to_string(number) + ": duplicate key '" + key +
                        "'");

    if (key == "mesh.source") {
      config.mesh_source = value;
    } else if (key == "prescription") {
      config.prescription_text = value;
    } else if (key == "output.dir") {
      config.output_dir = value;
    } else if (key == "report_interval") {
      config.flow.report_interval = detail::config_real(key, value);
    } else if (key == "flow.dt_initial") {
      config.flow.dt_initial = detail::config_real(key, value);
    } else if (key == "flow.dt_min") {
      config.flow.dt_min = detail::config_real(key, value);
    } else if (key == "flow.dt_max") {
      config.flow.dt_max = detail::config_real(key, value);
    } else if (key == "flow.grad_tol") {
      config.flow.grad_tol = detail::config_real(key, value);
    } else if (key == "flow.t_max") {
      config.flow.t_max = detail::config_real(key, value);
    } else if (key == "flow.constraint_tol") {
      config.flow.constraint_tol = detail::config_real(key, value);
    } else if (key == "flow.energy_tol") {
      config.flow.energy_tol = detail::config_real(key, value);
    } else if (key == "flow.solver_tol") {
      config.flow.solver_tol = detail::config_real(key, value);
    } else if (key == "solver.method") {
      if (value == "auto")
        config.solver = SolverChoice::automatic;
      else if (value == "direct")
        config.solver = SolverChoice::direct;
      else if (value == "cg")
        config.solver = SolverChoice::cg;
      else
        throw ConfigError("solver.method: expected auto|direct|cg, got '" + value + "'");
    } else if (key == "uniformize.mode") {
      if (value == "auto")
        config.uniformize_mode = UniformizeMode::automatic;
      else if (value == "always")
        config.uniformize_mode = UniformizeMode::always;
      else if (value == "never")
        config.uniformize_mode = UniformizeMode::never;
      else
        throw ConfigError("uniformize.mode: expected auto|always|never, got '" + value + "'");
    } else if (key == "uniformize.tol") {
      config.uniformize_tol = detail::config_real(key, value);
    } else if (key == "uniformize.max_iterations") {
      config.uniformize_max_iterations = detail::config_int(key, value);
    } else if (key == "seed.profile") {
      if (value == "auto")
        config.seed.profile = SeedOptions::Profile::automatic;
      else if (value == "constant")
        config.seed.profile = SeedOptions::Profile::constant;
      else if (value == "bump")
        config.seed.profile = SeedOptions::Profile::bump;
      else
        throw ConfigError("seed.profile: expected auto|constant|bump, got '" + value + "'");
    } else if (key == "seed.bump_radius") {
      config.seed.bump_radius = detail::config_real(key, value);
    } else if (key == "background.curvature_tol") {
      config.background_tol = detail::config_real(key, value);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  validate_run_config(config);
  return config;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  RunConfig config = parse_run_config(text);
  config.config_hash = fnv1a_hash(text);
  return config;
}

// A mesh source is either a generator call "name(args)" or a file path.
struct GeneratorCall {
  std::string name;
  std::vector<std::string> args;
};

inline std::optional<GeneratorCall> parse_generator_call(const std::string& source) {
  const std::size_t open = source.find('(');
  if (open == std::string::npos || source.back() != ')') return std::nullopt;
  GeneratorCall call;
  call.name = detail::trim(source.substr(0, open));
  if (call.name.empty() ||
      call.name.find_first_not_of("abcdefghijklmnopqrstuvwxyz_0123456789") != std::string::npos)
    return std::nullopt;
  const std::string inside = source.substr(open + 1, source.size() - open - 2);
  int depth = 0;
  std::string current;
  for (const char c : inside) {
    if (c == '[') ++depth;
    if (c == ']') --depth;
    if (c == ',' && depth == 0) {
      call.args.push_back(detail::trim(current));
      current.clear();
    } else {
      current += c;
    }
  }
  if (!detail::trim(current).empty() || !call.args.empty())
    call.args.push_back(detail::trim(current));
  if (depth != 0) throw ConfigError("unbalanced brackets in mesh source '" + source + "'");
  return call;
}

inline std::vector<double> parse_beta_list(const std::string& text) {
  if (text.size() < 2 || text.front() != '[' || text.back() != ']')
    throw ConfigError("expected a bracketed beta list, got '" + text + "'");
  std::vector<double> betas;
  std::string current;
  for (const char c : text.substr(1, text.size() - 2)) {
    if (c == ',') {
      betas.push_back(detail::config_real("beta list", detail::trim(current)));
      current.clear();
    } else {
      current += c;
    }
  }
  if (!detail::trim(current).empty())
    betas.push_back(detail::config_real("beta list", detail::trim(current)));
  return betas;
}

inline ConicalMesh generate_mesh(const std::string& name, const std::vector<std::string>& args) {
  if (name == "flat_torus") {
    if (args.size() != 1) throw ConfigError("flat_torus expects one parameter (n)");
    return flat_torus(detail::config_int("flat_torus n", args[0]));
  }
  if (name == "pillowcase") {
    if (args.size() != 1) throw ConfigError("pillowcase expects one parameter (n)");
    return pillowcase(detail::config_int("pillowcase n", args[0]));
  }
  if (name == "cone_sphere") {
    if (args.size() != 2)
      throw ConfigError("cone_sphere expects two parameters (level, [betas])");
    return cone_sphere(detail::config_int("cone_sphere level", args[0]),
                       parse_beta_list(args[1]));
  }
  throw ConfigError("unknown mesh generator '" + name + "'");
}

inline ConicalMesh mesh_from_source(const std::string& source) {
  if (const auto call = parse_generator_call(source)) return generate_mesh(call->name, call->args);
  return read_mesh(source);
}

// Prescription presets. The coordinate-dependent ones sample the first
// vertex coordinate, so they require a mesh with positions.
inline Eigen::VectorXd prescription_field(const std::string& text, const ConicalMesh& mesh) {
  const std::size_t colon = text.find(':');
  const std::string name = colon == std::string::npos ? text : text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? std::string() : text.substr(colon + 1);

  auto first_coordinate = [&](const char* preset) {
    if (mesh.positions.empty())
      throw ConfigError(std::string(preset) +
                        " needs vertex coordinates, but the mesh is abstract");
    Eigen::VectorXd x(mesh.vertex_count);
    for (int v = 0; v < mesh.vertex_count; ++v) x[v] = mesh.positions[v][0];
    return x;
  };

  if (name == "constant") {
    if (rest.empty()) throw ConfigError("prescription constant:<value> needs a value");
    const double value = detail::config_real("prescription constant", rest);
    return Eigen::VectorXd::Constant(mesh.vertex_count, value);
  }
  if (name == "harmonic1") {
    const double offset = rest.empty() ? 0.25 : detail::config_real("prescription harmonic1", rest);
    const Eigen::VectorXd x = first_coordinate("harmonic1");
    return ((2.0 * std::numbers::pi * x.array()).cos() - offset).matrix();
  }
  if (name == "affine_x") {
    const std::size_t second = rest.find(':');
    if (second == std::string::npos)
      throw ConfigError("prescription affine_x:<a>:<b> needs two values");
    const double a = detail::config_real("prescription affine_x", rest.substr(0, second));
    const double b = detail::config_real("prescription affine_x", rest.substr(second + 1));
    const Eigen::VectorXd x = first_coordinate("affine_x");
    return (a + b * x.array()).matrix();
  }
  if (name == "file") {
    if (rest.empty()) throw ConfigError("prescription file:<path> needs a path");
    return read_field_csv(rest, mesh.vertex_count);
  }
  throw ConfigError("unknown prescription preset '" + name + "'");
}

}  // namespace kwflow
