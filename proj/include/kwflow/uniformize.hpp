#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "kwflow/errors.hpp"
#include "kwflow/mesh.hpp"
#include "kwflow/metric.hpp"
#include "kwflow/operators.hpp"

namespace kwflow {

// Curvature of e^{2u} g against the background: (kappa A + S u) / (e^{2u} A)
// per vertex. Its integral against the conformal area element telescopes to
// 2*pi*chi(surface, divisor) for every u.
inline Eigen::VectorXd curvature_of_conformal(const Eigen::VectorXd& u, const OperatorPair& ops,
                                              const BackgroundMetric& metric) {
  const Eigen::VectorXd numerator =
      metric.kappa * metric.vertex_areas + ops.stiffness * u;
  const Eigen::VectorXd scale = (2.0 * u.array()).exp().matrix().cwiseProduct(metric.vertex_areas);
  return numerator.cwiseQuotient(scale);
}

struct UniformizeOptions {
  double tol = 1e-10;  // per-vertex curvature deviation, relative to 1 + |kappa_bar|
  int max_iterations = 100;
};

struct UniformizeResult {
  Eigen::VectorXd log_factor;
  ConicalMesh mesh;          // same combinatorics, edge lengths scaled by e^{(v_i+v_j)/2}
  BackgroundMetric metric;   // recomputed on the rescaled mesh
  double kappa_bar = 0.0;
  double final_deviation = 0.0;
  std::vector<double> residual_history;  // max curvature deviation per outer iteration
  int iterations = 0;
  bool converged = false;
};

namespace detail {

struct DefectEvaluation {
  BackgroundMetric metric;
  Eigen::VectorXd residual;   // smooth defect - kappa_bar * vertex area
  double deviation = 0.0;     // max |residual| / vertex area, curvature units
};

inline std::vector<double> scaled_lengths(const ConicalMesh& mesh, const Eigen::VectorXd& u) {
  std::vector<double> lengths(mesh.edges.size());
  for (std::size_t e = 0; e < mesh.edges.size(); ++e)
    lengths[e] =
        std::exp(0.5 * (u[mesh.edges[e][0]] + u[mesh.edges[e][1]])) * mesh.edge_lengths[e];
  return lengths;
}

inline DefectEvaluation evaluate_defects(const ConicalMesh& mesh,
                                         const std::vector<double>& beta, double kappa_bar,
                                         const Eigen::VectorXd& u) {
  DefectEvaluation out;
  const ConicalMesh scaled = mesh_with_lengths(mesh, scaled_lengths(mesh, u));
  out.metric = metric_quantities(scaled);  // throws GeometryError on broken triangles
  Eigen::VectorXd defect = vertex_defects(scaled, out.metric);
  out.residual.resize(mesh.vertex_count);
  for (int v = 0; v < mesh.vertex_count; ++v) {
    const double smooth = defect[v] + 2.0 * std::numbers::pi * beta[v];
    out.residual[v] = smooth - kappa_bar * out.metric.vertex_areas[v];
    out.deviation =
        std::fmax(out.deviation, std::abs(out.residual[v]) / out.metric.vertex_areas[v]);
  }
  return out;
}

}  // namespace detail

// Finds the conformal scale v that makes the rescaled metric constant
// curvature kappa_bar = 2*pi*chi(surface, divisor) / volume(raw). Newton-type
// outer iteration: the derivative of the defect vector with respect to the
// log-factors is exactly the cotangent stiffness of the current lengths, and
// the area response is modeled by its diagonal e^{2v} part, which keeps the
// system SPD for kappa_bar <= 0. Step damping backtracks on both triangle
// feasibility and residual decrease. kappa_bar > 0 gets an extra Levenberg
// shift and is best-effort: a stalled iteration reports converged = false
// instead of throwing, since no convergence is promised there.
inline UniformizeResult uniformize_background(const ConicalMesh& mesh,
                                              const BackgroundMetric& raw_metric,
                                              const UniformizeOptions& options = {}) {
  const double pi = std::numbers::pi;
  const int n = mesh.vertex_count;
  const std::vector<double> beta = beta_by_vertex(mesh);
  const double chi = singular_euler(mesh);
  const double volume_raw = raw_metric.total_volume;

  UniformizeResult result;
  result.kappa_bar = 2.0 * pi * chi / volume_raw;
  const double kappa_bar = result.kappa_bar;
  const bool null_background = std::abs(chi) <= 1e-9;
  const bool positive_case = !null_background && kappa_bar > 0.0;
  const double stop = options.tol * (1.0 + std::abs(kappa_bar));

  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  auto eval = detail::evaluate_defects(mesh, beta, kappa_bar, u);
  result.residual_history.push_back(eval.deviation);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    if (eval.deviation <= stop) {
      result.converged = true;
      break;
    }
    result.iterations = iter + 1;

    const ConicalMesh scaled = mesh_with_lengths(mesh, detail::scaled_lengths(mesh, u));
    OperatorPair ops = assemble(scaled, eval.metric);
    SparseMatrix system = ops.stiffness;
    if (null_background) {
      // Singular system with constant kernel; pinning through a rank-one
      // bump at vertex 0 keeps it SPD (the residual already sums to ~0).
      system.coeffRef(0, 0) += 1.0;
    } else if (kappa_bar < 0.0) {
      for (int v = 0; v < n; ++v)
        system.coeffRef(v, v) += 2.0 * std::abs(kappa_bar) * eval.metric.vertex_areas[v];
    } else {
      const double mu = 3.0 * kappa_bar * eval.metric.vertex_areas.maxCoeff();
      for (int v = 0; v < n; ++v)
        system.coeffRef(v, v) += mu - 2.0 * kappa_bar * eval.metric.vertex_areas[v];
    }

    Eigen::SimplicialLDLT<SparseMatrix> ldlt(system);
    if (ldlt.info() != Eigen::Success)
      throw UniformizeError("uniformization system factorization failed at iteration " +
                            std::to_string(iter));
    const Eigen::VectorXd step = ldlt.solve(-eval.residual);

    const double r_norm = eval.residual.norm();
    double alpha = 1.0;
    bool stepped = false;
    while (alpha >= 1e-6) {
      const Eigen::VectorXd u_try = u + alpha * step;
      if (u_try.cwiseAbs().maxCoeff() > 200.0) {
        alpha *= 0.5;
        continue;
      }
      try {
        auto eval_try = detail::evaluate_defects(mesh, beta, kappa_bar, u_try);
        if (eval_try.residual.norm() <= (1.0 - 0.25 * alpha) * r_norm) {
          u = u_try;
          eval = std::move(eval_try);
          stepped = true;
          break;
        }
      } catch (const GeometryError&) {
        // rescaled lengths broke a triangle; shorten the step
      }
      alpha *= 0.5;
    }
    result.residual_history.push_back(eval.deviation);

    if (!stepped) {
      if (positive_case) break;
      throw UniformizeError("uniformization stalled at deviation " +
                            std::to_string(eval.deviation) + " (iteration " +
                            std::to_string(iter) + ")");
    }
  }
  if (eval.deviation <= stop) result.converged = true;

  if (!result.converged && !positive_case)
    throw UniformizeError("uniformization did not reach tolerance " + std::to_string(stop) +
                          " within " + std::to_string(options.max_iterations) +
                          " iterations; last deviation " + std::to_string(eval.deviation));

  if (null_background) {
    // Gauge fixing per the flat convention: mean zero in the raw metric,
    // then one global rescale restoring the raw total area.
    u.array() -= u.dot(raw_metric.vertex_areas) / volume_raw;
    const auto meaned = detail::evaluate_defects(mesh, beta, kappa_bar, u);
    u.array() += 0.5 * std::log(volume_raw / meaned.metric.total_volume);
  }

  result.log_factor = u;
  result.mesh = mesh_with_lengths(mesh, detail::scaled_lengths(mesh, u));
  validate_mesh(result.mesh);
  result.metric = metric_quantities(result.mesh);
  result.final_deviation =
      detail::evaluate_defects(mesh, beta, kappa_bar, u).deviation;
  return result;
}

}  // namespace kwflow
