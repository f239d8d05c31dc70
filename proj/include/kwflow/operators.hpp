#pragma once

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "kwflow/errors.hpp"
#include "kwflow/mesh.hpp"
#include "kwflow/metric.hpp"

namespace kwflow {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct OperatorPair {
  SparseMatrix stiffness;   // cotangent weights, positive semidefinite, kernel = constants
  Eigen::VectorXd mass;     // lumped vertex areas
  SparseMatrix helmholtz;   // stiffness + diag(mass)
  std::vector<std::string> warnings;  // conditioning notes collected during assembly
};

// Cotangent weights are taken as-is; negative weights from obtuse triangles
// are part of the operator, only near-degenerate corners get a warning. The
// weights come from the length identity cot = (b^2 + d^2 - a^2) / (4 * area),
// which stays finite on slivers whose corner cosine rounds to 1, where the
// angle would round to 0 and its cotangent to infinity.
inline OperatorPair assemble(const ConicalMesh& mesh, const BackgroundMetric& metric) {
  OperatorPair ops;
  const int n = mesh.vertex_count;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(mesh.faces.size() * 12);

  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    double l[3];
    for (int c = 0; c < 3; ++c) l[c] = mesh.edge_lengths[mesh.face_edges[f][c]];
    for (int c = 0; c < 3; ++c) {
      const double a = l[c], b = l[(c + 1) % 3], d = l[(c + 2) % 3];
      const double w = 0.125 * (b * b + d * d - a * a) / metric.face_areas[f];
      if (std::abs(w) > 0.5e8)
        ops.warnings.push_back("face " + std::to_string(f) +
                               " has a near-degenerate angle (cot = " + std::to_string(2.0 * w) +
                               ")");
      const int i = mesh.faces[f][(c + 1) % 3];
      const int j = mesh.faces[f][(c + 2) % 3];
      trips.emplace_back(i, i, w);
      trips.emplace_back(j, j, w);
      trips.emplace_back(i, j, -w);
      trips.emplace_back(j, i, -w);
    }
  }
  ops.stiffness.resize(n, n);
  ops.stiffness.setFromTriplets(trips.begin(), trips.end());
  ops.mass = metric.vertex_areas;

  for (int v = 0; v < n; ++v) trips.emplace_back(v, v, ops.mass[v]);
  ops.helmholtz.resize(n, n);
  ops.helmholtz.setFromTriplets(trips.begin(), trips.end());
  return ops;
}

inline double integrate(const Eigen::VectorXd& f, const BackgroundMetric& metric) {
  return f.dot(metric.vertex_areas);
}

// W^{1,2} inner product: dirichlet part + L2 part.
inline double h_inner(const Eigen::VectorXd& u, const Eigen::VectorXd& w,
                      const OperatorPair& ops) {
  return u.dot(ops.stiffness * w) + u.dot(ops.mass.cwiseProduct(w));
}

inline double h_norm(const Eigen::VectorXd& u, const OperatorPair& ops) {
  return std::sqrt(std::fmax(0.0, h_inner(u, u, ops)));
}

enum class SolverMethod { direct, cg };

// One factorization (or preconditioner), many solves. Holds references into
// the OperatorPair, which must outlive the solver. Solves are const and safe
// to issue from the flow loop.
class HelmholtzSolver {
 public:
  HelmholtzSolver(const OperatorPair& ops, SolverMethod method, double tol = 1e-10,
                  int max_iterations = 20000)
      : ops_(&ops), method_(method), tol_(tol), max_iterations_(max_iterations) {
    if (!(tol > 0.0)) throw ConfigError("solver tolerance must be positive");
    if (method_ == SolverMethod::direct) {
      ldlt_.compute(ops.helmholtz);
      if (ldlt_.info() != Eigen::Success)
        throw NumericalError("factorization of stiffness + mass failed");
    } else {
      cg_.setTolerance(tol);
      cg_.setMaxIterations(max_iterations);
      cg_.compute(ops.helmholtz);
    }
  }

  HelmholtzSolver(const HelmholtzSolver&) = delete;
  HelmholtzSolver& operator=(const HelmholtzSolver&) = delete;

  // Solves (stiffness + mass) x = rhs with rhs given in weak (already
  // mass-weighted) form.
  Eigen::VectorXd solve_weak(const Eigen::VectorXd& rhs) const {
    if (method_ == SolverMethod::direct) return ldlt_.solve(rhs);
    Eigen::VectorXd x = cg_.solve(rhs);
    const double rhs_norm = rhs.norm();
    if (rhs_norm == 0.0) return Eigen::VectorXd::Zero(rhs.size());
    const double residual = (ops_->helmholtz * x - rhs).norm() / rhs_norm;
    if (cg_.info() != Eigen::Success || !(residual <= 10.0 * tol_))
      throw NumericalError("helmholtz solve did not converge: relative residual " +
                           std::to_string(residual) + " after " +
                           std::to_string(cg_.iterations()) + " iterations (tol " +
                           std::to_string(tol_) + ")");
    return x;
  }

  // (laplacian + identity)^{-1} f in the lumped discretization.
  Eigen::VectorXd apply(const Eigen::VectorXd& f) const {
    return solve_weak(ops_->mass.cwiseProduct(f));
  }

  SolverMethod method() const { return method_; }
  double tolerance() const { return tol_; }
  const OperatorPair& operators() const { return *ops_; }

 private:
  const OperatorPair* ops_;
  SolverMethod method_;
  double tol_;
  int max_iterations_;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
  Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper,
                           Eigen::DiagonalPreconditioner<double>>
      cg_;
};

inline SolverMethod default_solver_method(int vertex_count) {
  return vertex_count < 3000 ? SolverMethod::direct : SolverMethod::cg;
}

// One-shot form. Flow code keeps a HelmholtzSolver instead.
inline Eigen::VectorXd helmholtz_solve(const Eigen::VectorXd& f, const OperatorPair& ops,
                                       double tol = 1e-10) {
  HelmholtzSolver solver(ops, default_solver_method(static_cast<int>(f.size())), tol);
  return solver.apply(f);
}

// Smallest nonzero eigenvalue of the laplacian: min over mean-zero fields of
// dirichlet(u) / l2(u)^2. Deflated inverse power iteration through
// (stiffness + mass)^{-1} mass with Rayleigh quotient stopping.
inline double poincare_lambda(const OperatorPair& ops, const BackgroundMetric& metric,
                              double tol = 1e-10) {
  const int n = static_cast<int>(ops.mass.size());
  if (n < 2) throw ConfigError("poincare_lambda needs at least two vertices");
  const double volume = metric.total_volume;
  HelmholtzSolver solver(ops, default_solver_method(n), std::min(tol, 1e-12), 200000);

  const auto deflate = [&](Eigen::VectorXd& x) { x.array() -= ops.mass.dot(x) / volume; };
  const auto m_norm = [&](const Eigen::VectorXd& x) {
    return std::sqrt(x.dot(ops.mass.cwiseProduct(x)));
  };

  std::mt19937 gen(0x5eed);
  Eigen::VectorXd x(n);
  for (int v = 0; v < n; ++v) x[v] = gen() / 2147483648.0 - 1.0;
  deflate(x);
  x /= m_norm(x);

  double lambda = 0.0;
  for (int iter = 0; iter < 1000; ++iter) {
    Eigen::VectorXd y = solver.solve_weak(ops.mass.cwiseProduct(x));
    deflate(y);
    y /= m_norm(y);
    lambda = y.dot(ops.stiffness * y) / y.dot(ops.mass.cwiseProduct(y));
    const Eigen::VectorXd res =
        ops.stiffness * y - lambda * ops.mass.cwiseProduct(y);
    const double res_norm = std::sqrt(res.cwiseQuotient(ops.mass).dot(res));
    x = y;
    if (res_norm <= tol * std::fmax(lambda, 1e-300)) {
      if (!(lambda > 1e-12))
        throw NumericalError("spectral gap collapsed (lambda = " + std::to_string(lambda) +
                             "); mesh may be disconnected");
      return lambda;
    }
  }
  throw NumericalError("poincare_lambda did not converge (last lambda " +
                       std::to_string(lambda) + ")");
}

}  // namespace kwflow
