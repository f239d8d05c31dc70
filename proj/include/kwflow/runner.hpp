#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "kwflow/config.hpp"
#include "kwflow/errors.hpp"
#include "kwflow/flow.hpp"
#include "kwflow/functionals.hpp"
#include "kwflow/mesh.hpp"
#include "kwflow/mesh_io.hpp"
#include "kwflow/metric.hpp"
#include "kwflow/operators.hpp"
#include "kwflow/uniformize.hpp"

namespace kwflow {

// Everything a solve produced, for reporting and for tests. Exit codes:
// 0 converged, 2 stopped at t_max, 3 incompatible prescription, 4 numerical
// failure. Config and file errors propagate as exceptions instead.
struct RunOutcome {
  RunConfig config;
  int exit_code = 0;
  std::string failure_message;

  ConicalMesh mesh;
  BackgroundMetric metric;
  GaussBonnetReport gauss_bonnet_raw;
  GaussBonnetReport gauss_bonnet_final;
  bool uniformize_applied = false;
  UniformizeResult uniformize;

  OperatorPair ops;
  SolverMethod method = SolverMethod::direct;

  Prescription prescription;
  CompatibilityResult compatibility;
  ConstraintSpec constraint;

  bool flow_ran = false;
  Eigen::VectorXd u0;
  double seed_h_norm = 0.0;
  SmallnessReport smallness;
  bool smallness_relevant = false;

  FlowState final_state;
  ConvergenceReport flow_report;

  KWResidual residual;
  double c_infinity = 0.0;
  bool is_null_case = false;
  double tau = 0.0;
  KWResidual shifted_residual;
  Eigen::VectorXd curvature_final;
  double integral_exp_2u = 0.0;
};

inline RunOutcome execute_run(const RunConfig& config) {
  RunOutcome out;
  out.config = config;
  try {
    out.mesh = mesh_from_source(config.mesh_source);
    out.metric = metric_quantities(out.mesh);
    out.gauss_bonnet_raw = gauss_bonnet_check(out.mesh, out.metric, config.background_tol);
    out.gauss_bonnet_final = out.gauss_bonnet_raw;

    const bool want_uniformize =
        config.uniformize_mode == UniformizeMode::always ||
        (config.uniformize_mode == UniformizeMode::automatic && !out.gauss_bonnet_raw.accepted);
    if (want_uniformize) {
      UniformizeOptions options;
      options.tol = config.uniformize_tol;
      options.max_iterations = config.uniformize_max_iterations;
      out.uniformize = uniformize_background(out.mesh, out.metric, options);
      out.uniformize_applied = true;
      out.mesh = out.uniformize.mesh;
      out.metric = out.uniformize.metric;
      out.gauss_bonnet_final = gauss_bonnet_check(out.mesh, out.metric, config.background_tol);
    }

    out.ops = assemble(out.mesh, out.metric);
    out.method = config.solver == SolverChoice::automatic
                     ? default_solver_method(out.mesh.vertex_count)
                     : (config.solver == SolverChoice::direct ? SolverMethod::direct
                                                              : SolverMethod::cg);
    HelmholtzSolver solver(out.ops, out.method, config.flow.solver_tol);

    out.prescription =
        make_prescription(prescription_field(config.prescription_text, out.mesh), out.metric);
    out.constraint = constraint_spec_for(out.mesh);
    out.is_null_case = null_case(out.mesh);

    out.compatibility = compatibility_check(out.prescription, out.mesh);
    if (!out.compatibility.pass) {
      out.exit_code = 3;
      out.failure_message = "incompatible prescription: " + out.compatibility.reason;
      return out;
    }

    SeedOptions seed_options = config.seed;
    out.u0 = seed_on_constraint(out.mesh, out.metric, out.prescription, out.constraint,
                                seed_options);
    out.seed_h_norm = h_norm(out.u0, out.ops);
    out.smallness_relevant = singular_euler(out.mesh) < -1e-9;
    out.smallness = smallness_report(out.u0, out.prescription, out.ops);

    const FlowProblem problem{out.mesh,   out.metric,       out.ops,
                              solver,     out.prescription, out.constraint};
    auto [state, report] = run_flow(out.u0, problem, config.flow);
    out.final_state = std::move(state);
    out.flow_report = std::move(report);
    out.flow_ran = true;

    out.residual =
        residual_KW(out.final_state.u, out.prescription, out.ops, out.metric, solver);
    out.c_infinity =
        estimate_c_infinity(out.final_state.u, out.prescription, out.ops, out.metric);
    if (out.is_null_case && out.c_infinity > 0.0) {
      out.tau = 0.5 * std::log(out.c_infinity);
      const Eigen::VectorXd shifted = null_case_shift(out.final_state.u, out.c_infinity);
      out.shifted_residual =
          residual_KW(shifted, out.prescription, out.ops, out.metric, solver);
    }
    out.curvature_final = curvature_of_conformal(out.final_state.u, out.ops, out.metric);
    out.integral_exp_2u = integrate(exp_2u(out.final_state.u), out.metric);

    out.exit_code = out.flow_report.converged ? 0 : 2;
    if (!out.flow_report.converged)
      out.failure_message = "inconclusive: reached t_max with grad_S_norm " +
                            format_real(out.flow_report.grad_S_norm_final);
  } catch (const ConfigError&) {
    throw;
  } catch (const IoError&) {
    throw;
  } catch (const NumericalError& e) {
    out.exit_code = 4;
    out.failure_message = e.what();
  }
  return out;
}

inline void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace file '" + path + "'");
  out << "t,J,dissipation,energy_gap,constraint_residual,grad_S_norm,mean_u,min_u,max_u\n";
  for (const auto& row : trace)
    out << format_real(row.t) << "," << format_real(row.J) << ","
        << format_real(row.dissipation) << "," << format_real(row.energy_gap) << ","
        << format_real(row.constraint_residual) << "," << format_real(row.grad_S_norm) << ","
        << format_real(row.mean_u) << "," << format_real(row.min_u) << ","
        << format_real(row.max_u) << "\n";
  if (!out) throw IoError("failed writing trace file '" + path + "'");
}

inline void write_final_state_csv(const std::string& path, const Eigen::VectorXd& u,
                                  const Eigen::VectorXd& curvature,
                                  const Eigen::VectorXd& pointwise_residual) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write state file '" + path + "'");
  out << "vertex,u,curvature_of_e2u_g,pointwise_KW_residual\n";
  for (Eigen::Index v = 0; v < u.size(); ++v)
    out << v << "," << format_real(u[v]) << "," << format_real(curvature[v]) << ","
        << format_real(pointwise_residual[v]) << "\n";
  if (!out) throw IoError("failed writing state file '" + path + "'");
}

namespace detail {

inline const char* yes_no(bool b) { return b ? "yes" : "no"; }

inline std::string gauss_bonnet_line(const GaussBonnetReport& r) {
  std::ostringstream s;
  s << "combinatorial=" << format_real(r.combinatorial_gap)
    << " total=" << format_real(r.total_curvature_gap)
    << " per_vertex=" << format_real(r.constant_curvature_gap)
    << " tolerance=" << format_real(r.tolerance) << " accepted=" << yes_no(r.accepted);
  return s.str();
}

}  // namespace detail

inline std::string render_report(const RunOutcome& out) {
  std::ostringstream s;
  const RunConfig& c = out.config;
  s << "kwflow run report\n";
  s << "config_hash: " << (c.config_hash.empty() ? "unhashed" : c.config_hash) << "\n";
  s << "mesh_source: " << c.mesh_source << "\n";
  s << "vertices: " << out.mesh.vertex_count << "\n";
  s << "edges: " << out.mesh.edge_count() << "\n";
  s << "faces: " << out.mesh.face_count() << "\n";
  s << "euler_characteristic: " << euler_characteristic(out.mesh) << "\n";
  s << "singular_euler: " << format_real(singular_euler(out.mesh)) << "\n";
  s << "background_volume: " << format_real(out.metric.total_volume) << "\n";
  s << "background_kappa: " << format_real(out.metric.kappa) << "\n";
  s << "gauss_bonnet_raw: " << detail::gauss_bonnet_line(out.gauss_bonnet_raw) << "\n";
  s << "uniformize_applied: " << detail::yes_no(out.uniformize_applied) << "\n";
  if (out.uniformize_applied) {
    s << "uniformize_kappa_bar: " << format_real(out.uniformize.kappa_bar) << "\n";
    s << "uniformize_deviation: " << format_real(out.uniformize.final_deviation) << "\n";
    s << "uniformize_iterations: " << out.uniformize.iterations << "\n";
    s << "uniformize_converged: " << detail::yes_no(out.uniformize.converged) << "\n";
    s << "gauss_bonnet_final: " << detail::gauss_bonnet_line(out.gauss_bonnet_final) << "\n";
  }
  s << "solver_method: " << (out.method == SolverMethod::direct ? "direct" : "cg") << "\n";
  s << "prescription: " << c.prescription_text << "\n";
  if (out.prescription.K.size() > 0) {
    s << "prescription_sup: " << format_real(out.prescription.sup_K) << "\n";
    s << "prescription_integral: " << format_real(out.prescription.integral_K) << "\n";
    s << "compatibility: " << (out.compatibility.pass ? "pass" : "fail") << "\n";
    if (!out.compatibility.pass) s << "compatibility_reason: " << out.compatibility.reason << "\n";
    s << "constraint_target: " << format_real(out.constraint.target) << "\n";
  }
  if (out.flow_ran) {
    s << "seed_h_norm: " << format_real(out.seed_h_norm) << "\n";
    s << "smallness_relevant: " << detail::yes_no(out.smallness_relevant) << "\n";
    s << "smallness_product: " << format_real(out.smallness.product) << "\n";
    s << "smallness_auto_satisfied: " << detail::yes_no(out.smallness.auto_satisfied) << "\n";
    s << "guarantee: " << out.flow_report.guarantee << "\n";
    s << "converged: " << detail::yes_no(out.flow_report.converged) << "\n";
    s << "stop_reason: " << out.flow_report.reason << "\n";
    s << "steps_accepted: " << out.flow_report.steps_accepted << "\n";
    s << "steps_rejected: " << out.flow_report.steps_rejected << "\n";
    s << "t_final: " << format_real(out.flow_report.t_final) << "\n";
    s << "grad_S_norm_final: " << format_real(out.flow_report.grad_S_norm_final) << "\n";
    s << "max_constraint_violation: " << format_real(out.flow_report.max_constraint_violation)
      << "\n";
    s << "max_J_increase: " << format_real(out.flow_report.max_J_increase) << "\n";
    if (out.is_null_case) {
      s << "max_mean_drift: " << format_real(out.flow_report.max_mean_drift) << "\n";
      s << "max_dirichlet_excess: " << format_real(out.flow_report.max_dirichlet_excess) << "\n";
    }
    s << "energy_gap_max: " << format_real(out.flow_report.energy_gap_max) << "\n";
    s << "dt_min_used: " << format_real(out.flow_report.min_dt_used) << "\n";
    s << "dt_max_used: " << format_real(out.flow_report.max_dt_used) << "\n";
    s << "residual_dual: " << format_real(out.residual.dual_norm) << "\n";
    s << "residual_l2: " << format_real(out.residual.l2_norm) << "\n";
    s << "residual_pointwise_max: " << format_real(out.residual.pointwise.cwiseAbs().maxCoeff())
      << "\n";
    s << "c_infinity: " << format_real(out.c_infinity) << "\n";
    if (out.is_null_case) {
      s << "tau: " << format_real(out.tau) << "\n";
      s << "post_shift_residual_dual: " << format_real(out.shifted_residual.dual_norm) << "\n";
    }
    s << "integral_exp_2u: " << format_real(out.integral_exp_2u) << "\n";
    s << "final_mean_u: " << format_real(out.final_state.mean_u) << "\n";
    s << "final_J: " << format_real(out.final_state.J_value) << "\n";
  }
  s << "tolerance_grad: " << format_real(c.flow.grad_tol) << "\n";
  s << "tolerance_constraint: " << format_real(c.flow.constraint_tol) << "\n";
  s << "tolerance_energy: " << format_real(c.flow.energy_tol) << "\n";
  s << "tolerance_solver: " << format_real(c.flow.solver_tol) << "\n";
  s << "tolerance_uniformize: " << format_real(c.uniformize_tol) << "\n";
  s << "tolerance_background_curvature: "
    << format_real(out.gauss_bonnet_final.tolerance) << "\n";
  if (!out.failure_message.empty()) s << "error: " << out.failure_message << "\n";
  s << "exit_code: " << out.exit_code << "\n";
  return s.str();
}

inline void write_outputs(const RunOutcome& out) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out.config.output_dir, ec);
  if (ec)
    throw IoError("cannot create output directory '" + out.config.output_dir +
                  "': " + ec.message());
  const fs::path dir(out.config.output_dir);
  {
    std::ofstream report(dir / "report.txt");
    if (!report) throw IoError("cannot write report in '" + out.config.output_dir + "'");
    report << render_report(out);
  }
  if (out.flow_ran) {
    write_trace_csv((dir / "trace.csv").string(), out.flow_report.trace);
    write_final_state_csv((dir / "final_state.csv").string(), out.final_state.u,
                          out.curvature_final, out.residual.pointwise);
  }
}

inline int run(const RunConfig& config) {
  const RunOutcome outcome = execute_run(config);
  write_outputs(outcome);
  if (!outcome.failure_message.empty()) std::cerr << outcome.failure_message << "\n";
  return outcome.exit_code;
}

}  // namespace kwflow
