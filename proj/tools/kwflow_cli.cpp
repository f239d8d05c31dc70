#include <Eigen/Core>
#include <cstdlib>
#include <future>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kwflow/kwflow.hpp"

namespace {

void apply_thread_env() {
  if (const char* env = std::getenv("KWFLOW_SOLVER_THREADS")) {
    const int threads = std::atoi(env);
    if (threads > 0) Eigen::setNbThreads(threads);
  }
}

int solve_command(const std::vector<std::string>& config_paths) {
  std::vector<kwflow::RunConfig> configs;
  configs.reserve(config_paths.size());
  std::set<std::string> dirs;
  for (const auto& path : config_paths) {
    configs.push_back(kwflow::load_run_config(path));
    if (!dirs.insert(configs.back().output_dir).second)
      throw kwflow::ConfigError("output directory '" + configs.back().output_dir +
                                "' is used by more than one config");
  }

  std::vector<int> codes(configs.size(), 0);
  if (configs.size() == 1) {
    codes[0] = kwflow::run(configs[0]);
  } else {
    std::vector<std::future<int>> futures;
    futures.reserve(configs.size());
    for (const auto& config : configs)
      futures.push_back(
          std::async(std::launch::async, [&config] { return kwflow::run(config); }));
    for (std::size_t i = 0; i < futures.size(); ++i) codes[i] = futures[i].get();
  }

  int worst = 0;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    std::cout << config_paths[i] << ": exit " << codes[i] << " (outputs in "
              << configs[i].output_dir << ")\n";
    worst = std::max(worst, codes[i]);
  }
  return worst;
}

int uniformize_command(const std::string& mesh_path, const std::string& out_path, double tol,
                       int max_iterations) {
  const kwflow::ConicalMesh mesh = kwflow::read_mesh(mesh_path);
  const kwflow::BackgroundMetric raw = kwflow::metric_quantities(mesh);
  kwflow::UniformizeOptions options;
  options.tol = tol;
  options.max_iterations = max_iterations;
  const kwflow::UniformizeResult result = kwflow::uniformize_background(mesh, raw, options);
  kwflow::write_mesh(out_path, result.mesh,
                     {"uniformized constant-curvature background",
                      "kappa_bar " + kwflow::format_real(result.kappa_bar),
                      "curvature_deviation " + kwflow::format_real(result.final_deviation),
                      "iterations " + std::to_string(result.iterations),
                      std::string("converged ") + (result.converged ? "yes" : "no")});
  std::cout << "kappa_bar: " << kwflow::format_real(result.kappa_bar) << "\n";
  std::cout << "curvature_deviation: " << kwflow::format_real(result.final_deviation) << "\n";
  std::cout << "iterations: " << result.iterations << "\n";
  std::cout << "converged: " << (result.converged ? "yes" : "no") << "\n";
  std::cout << "wrote " << out_path << "\n";
  return result.converged ? 0 : 2;
}

int verify_command(const std::string& mesh_path, const std::string& field_path,
                   const std::string& prescription_text) {
  const kwflow::ConicalMesh mesh = kwflow::read_mesh(mesh_path);
  const kwflow::BackgroundMetric metric = kwflow::metric_quantities(mesh);
  const kwflow::GaussBonnetReport gb = kwflow::gauss_bonnet_check(mesh, metric);
  const kwflow::OperatorPair ops = kwflow::assemble(mesh, metric);
  const kwflow::HelmholtzSolver solver(ops, kwflow::SolverMethod::direct);
  const Eigen::VectorXd u = kwflow::read_field_csv(field_path, mesh.vertex_count);
  const kwflow::Prescription p =
      kwflow::make_prescription(kwflow::prescription_field(prescription_text, mesh), metric);
  const kwflow::ConstraintSpec spec = kwflow::constraint_spec_for(mesh);

  const kwflow::KWResidual residual = kwflow::residual_KW(u, p, ops, metric, solver);
  const double constraint_value = kwflow::functional_L(u, p.K, metric);
  const double c = kwflow::estimate_c_infinity(u, p, ops, metric);

  std::cout << "vertices: " << mesh.vertex_count << "\n";
  std::cout << "singular_euler: " << kwflow::format_real(kwflow::singular_euler(mesh)) << "\n";
  std::cout << "background_kappa: " << kwflow::format_real(metric.kappa) << "\n";
  std::cout << "gauss_bonnet_combinatorial: " << kwflow::format_real(gb.combinatorial_gap)
            << "\n";
  std::cout << "gauss_bonnet_per_vertex: " << kwflow::format_real(gb.constant_curvature_gap)
            << "\n";
  std::cout << "gauss_bonnet_accepted: " << (gb.accepted ? "yes" : "no") << "\n";
  std::cout << "constraint_target: " << kwflow::format_real(spec.target) << "\n";
  std::cout << "constraint_value: " << kwflow::format_real(constraint_value) << "\n";
  std::cout << "constraint_gap: " << kwflow::format_real(constraint_value - spec.target)
            << "\n";
  std::cout << "residual_dual: " << kwflow::format_real(residual.dual_norm) << "\n";
  std::cout << "residual_l2: " << kwflow::format_real(residual.l2_norm) << "\n";
  std::cout << "residual_pointwise_max: "
            << kwflow::format_real(residual.pointwise.cwiseAbs().maxCoeff()) << "\n";
  std::cout << "c_infinity: " << kwflow::format_real(c) << "\n";
  return 0;
}

int gen_command(const std::string& name, const std::string& params, const std::string& out_path) {
  const auto call = kwflow::parse_generator_call(name + "(" + params + ")");
  if (!call) throw kwflow::ConfigError("cannot parse generator parameters '" + params + "'");
  const kwflow::ConicalMesh mesh = kwflow::generate_mesh(call->name, call->args);
  kwflow::write_mesh(out_path, mesh);
  std::cout << "wrote " << out_path << " (" << mesh.vertex_count << " vertices, "
            << mesh.face_count() << " faces)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_env();

  CLI::App app{"Constrained gradient flow for prescribed curvature on conical surfaces"};
  app.require_subcommand(1);

  std::vector<std::string> config_paths;
  auto* solve = app.add_subcommand("solve", "Run the flow for one or more config files");
  solve->add_option("configs", config_paths, "config file paths (several run concurrently)")
      ->required()
      ->expected(-1);

  std::string mesh_path, out_path;
  double uniformize_tol = 1e-10;
  int uniformize_iters = 100;
  auto* uniformize =
      app.add_subcommand("uniformize", "Rescale a mesh metric to constant curvature");
  uniformize->add_option("mesh", mesh_path, "input mesh file")->required();
  uniformize->add_option("out", out_path, "output mesh file")->required();
  uniformize->add_option("--tol", uniformize_tol, "curvature deviation tolerance");
  uniformize->add_option("--max-iterations", uniformize_iters, "iteration cap");

  std::string verify_mesh, verify_field, verify_prescription;
  auto* verify = app.add_subcommand("verify", "Check a stored field against the equation");
  verify->add_option("mesh", verify_mesh, "mesh file")->required();
  verify->add_option("field", verify_field, "field CSV (vertex_index,value)")->required();
  verify->add_option("--prescription", verify_prescription, "prescription preset or file")
      ->required();

  std::string gen_name, gen_params, gen_out;
  auto* gen = app.add_subcommand("gen", "Write a built-in mesh to a file");
  gen->add_option("name", gen_name, "flat_torus | pillowcase | cone_sphere")->required();
  gen->add_option("params", gen_params, "e.g. '32' or '3,[-0.9,-0.9,-0.9]'")->required();
  gen->add_option("out", gen_out, "output mesh file")->required();

  try {
    app.parse(argc, argv);
    if (solve->parsed()) return solve_command(config_paths);
    if (uniformize->parsed())
      return uniformize_command(mesh_path, out_path, uniformize_tol, uniformize_iters);
    if (verify->parsed()) return verify_command(verify_mesh, verify_field, verify_prescription);
    if (gen->parsed()) return gen_command(gen_name, gen_params, gen_out);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const kwflow::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const kwflow::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 1;
  } catch (const kwflow::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
