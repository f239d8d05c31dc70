#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "kwflow/errors.hpp"
#include "kwflow/mesh.hpp"
#include "kwflow/metric.hpp"
#include "kwflow/operators.hpp"

namespace kwflow {

// Target curvature field with its cached scalars. The cached values are used
// by compatibility and seeding; they always agree with recomputation because
// construction is the only way to fill them.
struct Prescription {
  Eigen::VectorXd K;
  double sup_K = 0.0;
  double integral_K = 0.0;
};

inline Prescription make_prescription(const Eigen::VectorXd& K, const BackgroundMetric& metric) {
  if (K.size() != metric.vertex_areas.size())
    throw ConfigError("prescription length does not match vertex count");
  if (!K.allFinite()) throw ConfigError("prescription contains non-finite values");
  if (K.cwiseAbs().maxCoeff() == 0.0)
    throw ConfigError("prescription is identically zero");
  Prescription p;
  p.K = K;
  p.sup_K = K.maxCoeff();
  p.integral_K = integrate(K, metric);
  return p;
}

// The flow preserves L(u) = target with target = pi * chi(surface, divisor),
// i.e. total conformal curvature 2*pi*chi.
struct ConstraintSpec {
  double target = 0.0;
};

inline ConstraintSpec constraint_spec_for(const ConicalMesh& mesh) {
  return {std::numbers::pi * singular_euler(mesh)};
}

inline bool null_case(const ConicalMesh& mesh) {
  return std::abs(singular_euler(mesh)) <= 1e-9;
}

inline Eigen::VectorXd exp_2u(const Eigen::VectorXd& u) {
  const double m = u.maxCoeff();
  if (2.0 * m > 700.0)
    throw RangeError("e^{2u} overflows: max u = " + std::to_string(m));
  return (2.0 * u.array()).exp().matrix();
}

inline double functional_J(const Eigen::VectorXd& u, const OperatorPair& ops,
                           const BackgroundMetric& metric) {
  return 0.5 * u.dot(ops.stiffness * u) + metric.kappa * integrate(u, metric);
}

inline double functional_L(const Eigen::VectorXd& u, const Eigen::VectorXd& K,
                           const BackgroundMetric& metric) {
  return 0.5 * integrate(K.cwiseProduct(exp_2u(u)), metric);
}

inline double constraint_residual(const Eigen::VectorXd& u, const Eigen::VectorXd& K,
                                  const BackgroundMetric& metric, const ConstraintSpec& spec) {
  return functional_L(u, K, metric) - spec.target;
}

// H-gradient of J: u - (laplacian + identity)^{-1} (u - kappa).
inline Eigen::VectorXd grad_J(const Eigen::VectorXd& u, const HelmholtzSolver& solver,
                              double kappa) {
  return u - solver.apply((u.array() - kappa).matrix());
}

// H-gradient of L: (laplacian + identity)^{-1} (K e^{2u}).
inline Eigen::VectorXd grad_L(const Eigen::VectorXd& u, const Eigen::VectorXd& K,
                              const HelmholtzSolver& solver) {
  return solver.apply(K.cwiseProduct(exp_2u(u)));
}

// Component of g orthogonal (in H) to the constraint normal direction l.
inline Eigen::VectorXd project_tangential(const Eigen::VectorXd& g, const Eigen::VectorXd& l,
                                          const OperatorPair& ops) {
  const double ll = h_inner(l, l, ops);
  if (!(ll > 1e-28))
    throw DegeneracyError("constraint normal degenerate: |grad L|_H = " +
                          std::to_string(std::sqrt(std::fmax(0.0, ll))));
  return g - (h_inner(g, l, ops) / ll) * l;
}

inline Eigen::VectorXd grad_S_J(const Eigen::VectorXd& u, const Eigen::VectorXd& K,
                                const HelmholtzSolver& solver, const OperatorPair& ops,
                                double kappa) {
  return project_tangential(grad_J(u, solver, kappa), grad_L(u, K, solver), ops);
}

struct CompatibilityResult {
  bool pass = false;
  std::string reason;
};

// Sign conditions a solvable prescription must satisfy, by the sign of
// chi(surface, divisor).
inline CompatibilityResult compatibility_check(const Prescription& p, const ConicalMesh& mesh) {
  const double chi = singular_euler(mesh);
  CompatibilityResult r;
  if (chi < -1e-9) {
    r.pass = p.integral_K < 0.0;
    r.reason = r.pass ? "chi < 0 and the prescription has negative integral"
                      : "chi < 0 requires a prescription with negative integral (got " +
                            std::to_string(p.integral_K) + ")";
  } else if (chi <= 1e-9) {
    r.pass = p.integral_K < 0.0 && p.sup_K > 0.0;
    r.reason = r.pass ? "chi = 0 and the prescription changes sign with negative integral"
                      : "chi = 0 requires negative integral and positive supremum (got integral " +
                            std::to_string(p.integral_K) + ", sup " + std::to_string(p.sup_K) +
                            ")";
  } else {
    r.pass = p.sup_K > 0.0;
    r.reason = r.pass ? "chi > 0 and the prescription is positive somewhere"
                      : "chi > 0 requires a prescription with positive supremum (got sup " +
                            std::to_string(p.sup_K) + ")";
  }
  return r;
}

struct SeedOptions {
  enum class Profile { automatic, constant, bump };
  Profile profile = Profile::automatic;
  double bump_radius = 0.0;  // <= 0: three mean edge lengths
};

namespace detail {

inline std::vector<double> geodesic_distances(const ConicalMesh& mesh, int source) {
  std::vector<double> dist(mesh.vertex_count, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> queue;
  std::vector<std::vector<std::pair<int, double>>> adj(mesh.vertex_count);
  for (std::size_t e = 0; e < mesh.edges.size(); ++e) {
    adj[mesh.edges[e][0]].emplace_back(mesh.edges[e][1], mesh.edge_lengths[e]);
    adj[mesh.edges[e][1]].emplace_back(mesh.edges[e][0], mesh.edge_lengths[e]);
  }
  dist[source] = 0.0;
  queue.emplace(0.0, source);
  while (!queue.empty()) {
    const auto [d, v] = queue.top();
    queue.pop();
    if (d > dist[v]) continue;
    for (const auto& [w, len] : adj[v])
      if (d + len < dist[w]) {
        dist[w] = d + len;
        queue.emplace(dist[w], w);
      }
  }
  return dist;
}

}  // namespace detail

// Picks u0 = s * profile with L(u0) = target. Constant profile when the
// prescription integral already has the target's (strict) sign; otherwise a
// mass-normalized hat bump around the maximizer of K, scaled by bisection
// plus a Newton polish.
inline Eigen::VectorXd seed_on_constraint(const ConicalMesh& mesh, const BackgroundMetric& metric,
                                          const Prescription& p, const ConstraintSpec& spec,
                                          const SeedOptions& options = {}) {
  const double target = spec.target;
  const double tol = 1e-12 * (1.0 + std::abs(target)) * 0.5;

  auto profile_kind = options.profile;
  if (profile_kind == SeedOptions::Profile::automatic) {
    if (target * p.integral_K > 0.0)
      profile_kind = SeedOptions::Profile::constant;
    else if (p.sup_K > 0.0)
      profile_kind = SeedOptions::Profile::bump;
    else
      throw SeedError("no admissible seed: target " + std::to_string(target) +
                      " with integral " + std::to_string(p.integral_K) + " and sup " +
                      std::to_string(p.sup_K));
  }

  Eigen::VectorXd phi;
  double s = 0.0;
  if (profile_kind == SeedOptions::Profile::constant) {
    if (!(target * p.integral_K > 0.0))
      throw SeedError("constant seed needs the prescription integral to share the target's sign");
    phi = Eigen::VectorXd::Ones(mesh.vertex_count);
    s = 0.5 * std::log(2.0 * target / p.integral_K);
  } else {
    if (!(p.sup_K > 0.0))
      throw SeedError("bump seed needs a positive supremum of the prescription");
    int peak = 0;
    p.K.maxCoeff(&peak);
    double radius = options.bump_radius;
    if (!(radius > 0.0)) {
      double mean_edge = 0.0;
      for (double l : mesh.edge_lengths) mean_edge += l;
      radius = 3.0 * mean_edge / mesh.edge_lengths.size();
    }
    const auto dist = detail::geodesic_distances(mesh, peak);
    phi = Eigen::VectorXd::Zero(mesh.vertex_count);
    for (int v = 0; v < mesh.vertex_count; ++v)
      phi[v] = std::fmax(0.0, 1.0 - dist[v] / radius);
    phi /= integrate(phi, metric);

    const double phi_max = phi.maxCoeff();
    const auto G = [&](double t) { return functional_L(t * phi, p.K, metric) - target; };
    double g0 = G(0.0);
    if (std::abs(g0) > tol) {
      double lo, hi;
      if (g0 < 0.0) {
        lo = 0.0;
        hi = 1.0;
        while (G(hi) < 0.0) {
          hi *= 2.0;
          if (2.0 * hi * phi_max > 600.0)
            throw SeedError("bump seed cannot reach the target before overflow; "
                            "try a different profile or radius");
        }
      } else {
        hi = 0.0;
        lo = -1.0;
        while (G(lo) > 0.0) {
          lo *= 2.0;
          if (lo < -1e8)
            throw SeedError("bump seed cannot reach the target from above; "
                            "try a different profile or radius");
        }
      }
      for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (G(mid) < 0.0 ? lo : hi) = mid;
      }
      s = 0.5 * (lo + hi);
    }
  }

  // Newton polish along the profile.
  for (int it = 0; it < 10; ++it) {
    const double g = functional_L(s * phi, p.K, metric) - target;
    if (std::abs(g) <= tol) break;
    const double dg =
        integrate(p.K.cwiseProduct(exp_2u(s * phi)).cwiseProduct(phi), metric);
    if (!(std::abs(dg) > 0.0)) throw SeedError("seed scaling stalled (flat derivative)");
    s -= g / dg;
  }

  Eigen::VectorXd u0 = s * phi;
  if (std::abs(functional_L(u0, p.K, metric) - target) > 2.0 * tol)
    throw SeedError("seed did not reach the constraint to tolerance");
  return u0;
}

struct SmallnessReport {
  double gamma = 2.0;
  double sup_K = 0.0;
  double u0_h_norm_sq = 0.0;
  double product = 0.0;  // e^{gamma |u0|_H^2} * sup K
  bool auto_satisfied = false;  // nonpositive prescriptions satisfy any threshold
};

// Diagnostic only; meaningful for chi < 0 prescriptions.
inline SmallnessReport smallness_report(const Eigen::VectorXd& u0, const Prescription& p,
                                        const OperatorPair& ops, double gamma = 2.0) {
  if (!(gamma > 1.0)) throw ConfigError("smallness exponent gamma must exceed 1");
  SmallnessReport r;
  r.gamma = gamma;
  r.sup_K = p.sup_K;
  r.u0_h_norm_sq = h_inner(u0, u0, ops);
  const double e = gamma * r.u0_h_norm_sq;
  r.product = e > 700.0 ? std::numeric_limits<double>::infinity() * (p.sup_K >= 0 ? 1.0 : -1.0)
                        : std::exp(e) * p.sup_K;
  r.auto_satisfied = p.sup_K <= 0.0;
  return r;
}

}  // namespace kwflow
