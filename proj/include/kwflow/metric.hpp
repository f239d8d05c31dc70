#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "kwflow/errors.hpp"
#include "kwflow/mesh.hpp"

namespace kwflow {

// Derived per-element quantities of the background metric. kappa is the
// constant curvature the metric is supposed to carry; it is always inferred
// from the total-curvature identity kappa * volume = 2*pi*chi(surface, divisor)
// rather than user-supplied. Whether the metric actually realizes that
// constant pointwise is what gauss_bonnet_check reports.
struct BackgroundMetric {
  Eigen::VectorXd vertex_areas;
  std::vector<std::array<double, 3>> corner_angles;  // per face, at corner c
  std::vector<double> face_areas;
  double kappa = 0.0;
  double total_volume = 0.0;
};

inline BackgroundMetric metric_quantities(const ConicalMesh& mesh) {
  BackgroundMetric m;
  const std::size_t nf = mesh.faces.size();
  m.corner_angles.resize(nf);
  m.face_areas.resize(nf);
  m.vertex_areas = Eigen::VectorXd::Zero(mesh.vertex_count);

  for (std::size_t f = 0; f < nf; ++f) {
    // l[c] is the length of the edge opposite corner c.
    double l[3];
    for (int c = 0; c < 3; ++c) l[c] = mesh.edge_lengths[mesh.face_edges[f][c]];
    if (!(l[0] < l[1] + l[2] && l[1] < l[0] + l[2] && l[2] < l[0] + l[1]))
      throw GeometryError("face " + std::to_string(f) + " violates the triangle inequality (" +
                          std::to_string(l[0]) + ", " + std::to_string(l[1]) + ", " +
                          std::to_string(l[2]) + ")");

    for (int c = 0; c < 3; ++c) {
      const double a = l[c], b = l[(c + 1) % 3], cc = l[(c + 2) % 3];
      double q = (b * b + cc * cc - a * a) / (2.0 * b * cc);
      q = std::clamp(q, -1.0, 1.0);
      m.corner_angles[f][c] = std::acos(q);
    }

    const double s = 0.5 * (l[0] + l[1] + l[2]);
    double arg = s * (s - l[0]) * (s - l[1]) * (s - l[2]);
    arg = std::fmax(0.0, arg);
    m.face_areas[f] = std::sqrt(arg);
    if (!(m.face_areas[f] > 0.0))
      throw GeometryError("face " + std::to_string(f) +
                          " has zero area at double precision (" + std::to_string(l[0]) + ", " +
                          std::to_string(l[1]) + ", " + std::to_string(l[2]) + ")");

    for (int c = 0; c < 3; ++c) m.vertex_areas[mesh.faces[f][c]] += m.face_areas[f] / 3.0;
  }

  m.total_volume = 0.0;
  for (double a : m.face_areas) m.total_volume += a;
  m.kappa = 2.0 * std::numbers::pi * singular_euler(mesh) / m.total_volume;
  return m;
}

// Angle defect 2*pi - (sum of incident corner angles) at each vertex.
inline Eigen::VectorXd vertex_defects(const ConicalMesh& mesh, const BackgroundMetric& metric) {
  Eigen::VectorXd defect =
      Eigen::VectorXd::Constant(mesh.vertex_count, 2.0 * std::numbers::pi);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f)
    for (int c = 0; c < 3; ++c) defect[mesh.faces[f][c]] -= metric.corner_angles[f][c];
  return defect;
}

struct GaussBonnetReport {
  // |sum of defects - 2*pi*chi|: a combinatorial identity, roundoff-level on
  // any valid closed mesh no matter how distorted the metric is.
  double combinatorial_gap = 0.0;
  // |kappa * volume - 2*pi*chi(surface, divisor)|: zero by construction when
  // kappa is inferred, meaningful when a metric is checked against a target.
  double total_curvature_gap = 0.0;
  // max over vertices of |defect + 2*pi*beta - kappa * vertex_area|: whether
  // the smooth part of the curvature really is the constant kappa.
  double constant_curvature_gap = 0.0;
  double tolerance = 0.0;
  bool accepted = false;
};

// tol <= 0 selects the default, 1e-6 times the largest vertex area.
inline GaussBonnetReport gauss_bonnet_check(const ConicalMesh& mesh,
                                            const BackgroundMetric& metric,
                                            double tol = -1.0) {
  const double pi = std::numbers::pi;
  GaussBonnetReport r;
  r.tolerance = tol > 0.0 ? tol : 1e-6 * metric.vertex_areas.maxCoeff();

  const Eigen::VectorXd defect = vertex_defects(mesh, metric);
  r.combinatorial_gap = std::abs(defect.sum() - 2.0 * pi * euler_characteristic(mesh));
  r.total_curvature_gap =
      std::abs(metric.kappa * metric.total_volume - 2.0 * pi * singular_euler(mesh));

  const std::vector<double> beta = beta_by_vertex(mesh);
  double worst = 0.0;
  for (int v = 0; v < mesh.vertex_count; ++v)
    worst = std::fmax(worst, std::abs(defect[v] + 2.0 * pi * beta[v] -
                                      metric.kappa * metric.vertex_areas[v]));
  r.constant_curvature_gap = worst;

  r.accepted = r.combinatorial_gap <= r.tolerance &&
               r.total_curvature_gap <= r.tolerance &&
               r.constant_curvature_gap <= r.tolerance;
  return r;
}

}  // namespace kwflow
