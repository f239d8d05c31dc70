#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "kwflow/errors.hpp"
#include "kwflow/functionals.hpp"
#include "kwflow/mesh.hpp"
#include "kwflow/metric.hpp"
#include "kwflow/operators.hpp"

namespace kwflow {

struct FlowConfig {
  double dt_initial = 0.01;
  double dt_min = 1e-9;
  double dt_max = 1.0;
  double grad_tol = 1e-8;        // stop when |grad_S J|_H drops below this
  double t_max = 200.0;
  double constraint_tol = 1e-10; // admissible pre-renormalization drift per step
  double energy_tol = 1e-4;      // advisory bound for the energy identity gap
  double solver_tol = 1e-10;
  double report_interval = 0.5;
};

inline void validate_flow_config(const FlowConfig& c) {
  if (!(c.dt_min > 0.0 && c.dt_min <= c.dt_initial && c.dt_initial <= c.dt_max))
    throw ConfigError("need 0 < dt_min <= dt_initial <= dt_max");
  if (!(c.grad_tol > 0.0 && c.constraint_tol > 0.0 && c.energy_tol > 0.0 &&
        c.solver_tol > 0.0))
    throw ConfigError("flow tolerances must be positive");
  if (!(c.t_max > 0.0)) throw ConfigError("t_max must be positive");
  if (!(c.report_interval > 0.0)) throw ConfigError("report_interval must be positive");
}

// Immutable per-run data. All references must outlive the run.
struct FlowProblem {
  const ConicalMesh& mesh;
  const BackgroundMetric& metric;
  const OperatorPair& ops;
  const HelmholtzSolver& solver;
  const Prescription& prescription;
  ConstraintSpec constraint;
};

struct FlowState {
  double t = 0.0;
  Eigen::VectorXd u;
  double J_value = 0.0;
  double dissipation = 0.0;
  double constraint_residual = 0.0;
  double grad_S_norm = 0.0;
  double mean_u = 0.0;
};

struct TraceRow {
  double t, J, dissipation, energy_gap, constraint_residual, grad_S_norm, mean_u, min_u, max_u;
};

// Velocity field of the constrained descent: minus the tangential H-gradient.
inline Eigen::VectorXd flow_rhs(const Eigen::VectorXd& u, const FlowProblem& p) {
  return -grad_S_J(u, p.prescription.K, p.solver, p.ops, p.metric.kappa);
}

struct RenormalizeResult {
  Eigen::VectorXd u;
  double shift = 0.0;  // scale applied along the unit constraint normal
};

// Pulls u back onto the constraint surface by a 1-d Newton iteration along
// grad L / |grad L|_H. Meant for the small drifts a single accepted step
// leaves behind; larger residuals are outside the basin and rejected.
inline RenormalizeResult renormalize_constraint(const Eigen::VectorXd& u, const FlowProblem& p,
                                                double constraint_tol) {
  const double target = p.constraint.target;
  const double tol = 1e-13 * (1.0 + std::abs(target));
  const double r0 = functional_L(u, p.prescription.K, p.metric) - target;
  if (std::abs(r0) <= tol) return {u, 0.0};
  if (std::abs(r0) > std::fmax(100.0 * constraint_tol, 1e-4 * (1.0 + std::abs(target))))
    throw ProjectionError("constraint residual " + std::to_string(r0) +
                          " outside the renormalization basin");

  Eigen::VectorXd d = grad_L(u, p.prescription.K, p.solver);
  const double dn = h_norm(d, p.ops);
  if (!(dn > 1e-14))
    throw DegeneracyError("constraint normal degenerate during renormalization");
  d /= dn;

  double s = 0.0;
  bool done = false;
  for (int it = 0; it < 50; ++it) {
    const Eigen::VectorXd e = exp_2u(u + s * d);
    const double g = 0.5 * integrate(p.prescription.K.cwiseProduct(e), p.metric) - target;
    if (std::abs(g) <= tol) {
      done = true;
      break;
    }
    const double dg =
        integrate(p.prescription.K.cwiseProduct(e).cwiseProduct(d), p.metric);
    if (!(std::abs(dg) > 1e-300))
      throw ProjectionError("renormalization stalled on a flat derivative");
    s -= g / dg;
  }
  if (!done) throw ProjectionError("renormalization Newton did not converge");
  if (!(std::abs(s) <= 10.0 * constraint_tol))
    throw ProjectionError("renormalization moved too far: |s| = " + std::to_string(std::abs(s)) +
                          " exceeds 10 * constraint_tol");
  return {u + s * d, s};
}

struct StepInfo {
  double dt_used = 0.0;
  double dt_next = 0.0;
  double error_estimate = 0.0;
  double renorm_shift = 0.0;
  int rejections = 0;
};

// One accepted step of the embedded 2(3) pair, with retries at smaller dt on
// local-error or constraint-drift violations. `k1` must hold flow_rhs at
// state.u on entry and holds flow_rhs at the new state.u on exit.
inline StepInfo flow_step(FlowState& state, const FlowProblem& p, const FlowConfig& config,
                          double dt, Eigen::VectorXd& k1) {
  const double err_tol = 0.1 * config.grad_tol;
  StepInfo info;

  for (;;) {
    bool ok = true;
    double err = std::numeric_limits<double>::infinity();
    double drift = std::numeric_limits<double>::infinity();
    Eigen::VectorXd u_new;
    double renorm_shift = 0.0;
    try {
      const Eigen::VectorXd k2 = flow_rhs(state.u + (0.5 * dt) * k1, p);
      const Eigen::VectorXd k3 = flow_rhs(state.u + (0.75 * dt) * k2, p);
      const Eigen::VectorXd u_prop =
          state.u + dt * ((2.0 / 9.0) * k1 + (1.0 / 3.0) * k2 + (4.0 / 9.0) * k3);
      const Eigen::VectorXd k4 = flow_rhs(u_prop, p);
      const Eigen::VectorXd err_vec =
          dt * ((-5.0 / 72.0) * k1 + (1.0 / 12.0) * k2 + (1.0 / 9.0) * k3 - (1.0 / 8.0) * k4);
      err = h_norm(err_vec, p.ops);
      drift = std::abs(functional_L(u_prop, p.prescription.K, p.metric) - p.constraint.target);
      ok = std::isfinite(err) && std::isfinite(drift) && err <= err_tol &&
           drift <= config.constraint_tol;
      if (ok) {
        auto renorm = renormalize_constraint(u_prop, p, config.constraint_tol);
        u_new = std::move(renorm.u);
        renorm_shift = renorm.shift;
      }
    } catch (const RangeError&) {
      ok = false;
    } catch (const ProjectionError&) {
      ok = false;
    }

    if (ok) {
      Eigen::VectorXd k_end = flow_rhs(u_new, p);
      state.dissipation += 0.5 * dt * (h_inner(k1, k1, p.ops) + h_inner(k_end, k_end, p.ops));
      state.t += dt;
      state.u = std::move(u_new);
      state.J_value = functional_J(state.u, p.ops, p.metric);
      state.constraint_residual =
          functional_L(state.u, p.prescription.K, p.metric) - p.constraint.target;
      state.grad_S_norm = h_norm(k_end, p.ops);
      state.mean_u = integrate(state.u, p.metric) / p.metric.total_volume;
      k1 = std::move(k_end);

      info.dt_used = dt;
      info.error_estimate = err;
      info.renorm_shift = renorm_shift;
      double grow = 0.9 * std::pow(err_tol / std::fmax(err, 1e-30), 1.0 / 3.0);
      grow = std::clamp(grow, 0.2, 5.0);
      info.dt_next = std::clamp(dt * grow, config.dt_min, config.dt_max);
      return info;
    }

    ++info.rejections;
    if (dt <= config.dt_min * (1.0 + 1e-12))
      throw StiffnessError("step rejected at dt_min: t = " + std::to_string(state.t) +
                           ", dt = " + std::to_string(dt) + ", local error " +
                           std::to_string(err) + ", constraint drift " + std::to_string(drift));
    double shrink = 0.5;
    if (std::isfinite(err) && err > err_tol)
      shrink = std::fmin(shrink, 0.9 * std::pow(err_tol / err, 1.0 / 3.0));
    if (std::isfinite(drift) && drift > config.constraint_tol)
      shrink = std::fmin(shrink, 0.7 * std::sqrt(config.constraint_tol / drift));
    shrink = std::fmax(shrink, 0.1);
    dt = std::fmax(dt * shrink, config.dt_min);
  }
}

struct ConvergenceReport {
  bool converged = false;
  std::string reason;     // "gradient_threshold" or "t_max"
  std::string guarantee;  // what the theory promises for this sign case
  long steps_accepted = 0;
  long steps_rejected = 0;
  double t_final = 0.0;
  double grad_S_norm_final = 0.0;
  double max_constraint_violation = 0.0;  // post-renormalization, over all steps
  double max_J_increase = 0.0;            // most positive J difference between steps
  double max_mean_drift = 0.0;
  double max_dirichlet_excess = 0.0;      // dirichlet(u) - dirichlet(u0), max over steps
  double energy_gap_max = 0.0;            // |dissipation + J - J(u0)| / (1 + |J(u0)|)
  double min_dt_used = std::numeric_limits<double>::infinity();
  double max_dt_used = 0.0;
  std::vector<TraceRow> trace;
};

inline std::string guarantee_label(const ConicalMesh& mesh, const Prescription& p) {
  const double chi = singular_euler(mesh);
  if (chi > 1e-9)
    return "none: positive singular Euler characteristic, global existence only";
  if (std::abs(chi) <= 1e-9) return "unconditional (null case)";
  return p.sup_K <= 0.0 ? "unconditional (nonpositive prescription)"
                        : "conditional on smallness of the initial data";
}

namespace detail {

inline TraceRow make_trace_row(const FlowState& s, double J0) {
  return {s.t,
          s.J_value,
          s.dissipation,
          std::abs(s.dissipation + s.J_value - J0) / (1.0 + std::abs(J0)),
          s.constraint_residual,
          s.grad_S_norm,
          s.mean_u,
          s.u.minCoeff(),
          s.u.maxCoeff()};
}

}  // namespace detail

// Integrates until the tangential gradient drops below grad_tol or t_max is
// reached. The seed is renormalized once up front, so every recorded state
// sits on the constraint to renormalization accuracy.
inline std::pair<FlowState, ConvergenceReport> run_flow(const Eigen::VectorXd& u0,
                                                        const FlowProblem& p,
                                                        const FlowConfig& config) {
  validate_flow_config(config);
  ConvergenceReport report;
  report.guarantee = guarantee_label(p.mesh, p.prescription);

  FlowState state;
  state.u = renormalize_constraint(u0, p, config.constraint_tol).u;
  state.J_value = functional_J(state.u, p.ops, p.metric);
  state.constraint_residual =
      functional_L(state.u, p.prescription.K, p.metric) - p.constraint.target;
  state.mean_u = integrate(state.u, p.metric) / p.metric.total_volume;
  Eigen::VectorXd k1 = flow_rhs(state.u, p);
  state.grad_S_norm = h_norm(k1, p.ops);

  const double J0 = state.J_value;
  const double mean0 = state.mean_u;
  const double dirichlet0 = state.u.dot(p.ops.stiffness * state.u);
  report.trace.push_back(detail::make_trace_row(state, J0));

  double dt = config.dt_initial;
  for (;;) {
    if (state.grad_S_norm <= config.grad_tol) {
      report.converged = true;
      report.reason = "gradient_threshold";
      break;
    }
    if (state.t >= config.t_max * (1.0 - 1e-12)) {
      report.converged = false;
      report.reason = "t_max";
      break;
    }

    const double J_before = state.J_value;
    const double t_before = state.t;
    const double dt_capped = std::fmin(dt, config.t_max - state.t);
    const StepInfo info = flow_step(state, p, config, dt_capped, k1);
    dt = info.dt_next;

    ++report.steps_accepted;
    report.steps_rejected += info.rejections;
    report.min_dt_used = std::fmin(report.min_dt_used, info.dt_used);
    report.max_dt_used = std::fmax(report.max_dt_used, info.dt_used);
    report.max_constraint_violation =
        std::fmax(report.max_constraint_violation, std::abs(state.constraint_residual));
    report.max_J_increase = std::fmax(report.max_J_increase, state.J_value - J_before);
    report.max_mean_drift = std::fmax(report.max_mean_drift, std::abs(state.mean_u - mean0));
    report.max_dirichlet_excess =
        std::fmax(report.max_dirichlet_excess,
                  state.u.dot(p.ops.stiffness * state.u) - dirichlet0);
    report.energy_gap_max =
        std::fmax(report.energy_gap_max,
                  std::abs(state.dissipation + state.J_value - J0) / (1.0 + std::abs(J0)));

    if (std::floor(state.t / config.report_interval) >
        std::floor(t_before / config.report_interval))
      report.trace.push_back(detail::make_trace_row(state, J0));
  }

  if (report.trace.empty() || report.trace.back().t != state.t)
    report.trace.push_back(detail::make_trace_row(state, J0));
  report.t_final = state.t;
  report.grad_S_norm_final = state.grad_S_norm;
  if (report.steps_accepted == 0) report.min_dt_used = 0.0;
  return {std::move(state), std::move(report)};
}

struct KWResidual {
  double dual_norm = 0.0;  // H-dual norm of the weak-form residual
  double l2_norm = 0.0;    // mass-weighted pointwise residual
  Eigen::VectorXd pointwise;
};

// Residual of laplacian(u) + kappa - K e^{2u} = 0 in the background metric.
inline KWResidual residual_KW(const Eigen::VectorXd& u, const Prescription& p,
                              const OperatorPair& ops, const BackgroundMetric& metric,
                              const HelmholtzSolver& solver) {
  KWResidual r;
  const Eigen::VectorXd reaction =
      (p.K.cwiseProduct(exp_2u(u)).array() - metric.kappa).matrix();
  const Eigen::VectorXd weak = ops.stiffness * u - ops.mass.cwiseProduct(reaction);
  r.pointwise = (ops.stiffness * u).cwiseQuotient(ops.mass) - reaction;
  const Eigen::VectorXd z = solver.solve_weak(weak);
  r.dual_norm = h_norm(z, ops);
  r.l2_norm = std::sqrt(std::fmax(0.0, r.pointwise.dot(ops.mass.cwiseProduct(r.pointwise))));
  return r;
}

// L2-optimal multiplier c with laplacian(u) + kappa = c K e^{2u}; equals 1 at
// an exact discrete solution.
inline double estimate_c_infinity(const Eigen::VectorXd& u, const Prescription& p,
                                  const OperatorPair& ops, const BackgroundMetric& metric) {
  const Eigen::VectorXd a =
      ((ops.stiffness * u).cwiseQuotient(ops.mass).array() + metric.kappa).matrix();
  const Eigen::VectorXd b = p.K.cwiseProduct(exp_2u(u));
  const double bb = b.dot(ops.mass.cwiseProduct(b));
  if (!(bb > 1e-28))
    throw DegeneracyError("prescription term vanishes; cannot estimate the multiplier");
  return a.dot(ops.mass.cwiseProduct(b)) / bb;
}

// Null-case normalization: u + log(c)/2 solves the equation with multiplier 1.
inline Eigen::VectorXd null_case_shift(const Eigen::VectorXd& u, double c_infinity) {
  if (!(c_infinity > 0.0))
    throw NumericalError("multiplier sign error: c = " + std::to_string(c_infinity) +
                         " must be positive");
  return (u.array() + 0.5 * std::log(c_infinity)).matrix();
}

// Largest violation of dissipation + J(u(t)) = J(u0) over a recorded trace,
// relative to 1 + |J(u0)|.
inline double energy_identity_check(const std::vector<TraceRow>& trace) {
  if (trace.empty()) return 0.0;
  double worst = 0.0;
  for (const auto& row : trace) worst = std::fmax(worst, row.energy_gap);
  return worst;
}

}  // namespace kwflow
