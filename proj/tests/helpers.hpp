#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "kwflow/mesh.hpp"
#include "kwflow/metric.hpp"
#include "kwflow/operators.hpp"

namespace test_helpers {

// Regular tetrahedron, unit edges, no cones.
inline kwflow::ConicalMesh tetrahedron() {
  kwflow::ConicalMesh mesh;
  mesh.vertex_count = 4;
  mesh.faces = {{0, 1, 2}, {0, 2, 3}, {0, 3, 1}, {1, 3, 2}};
  kwflow::build_connectivity(mesh);
  mesh.edge_lengths.assign(mesh.edges.size(), 1.0);
  kwflow::validate_mesh(mesh);
  return mesh;
}

// Two faces over the same three vertices with opposite orientation: the
// double of a single triangle, a valid closed surface (a sphere with three
// cone-like vertices).
inline kwflow::ConicalMesh double_triangle(double l01, double l12, double l02) {
  kwflow::ConicalMesh mesh;
  mesh.vertex_count = 3;
  mesh.faces = {{0, 1, 2}, {0, 2, 1}};
  kwflow::build_connectivity(mesh);
  mesh.edge_lengths.assign(mesh.edges.size(), 0.0);
  for (std::size_t e = 0; e < mesh.edges.size(); ++e) {
    const auto& ed = mesh.edges[e];
    if (ed[0] == 0 && ed[1] == 1) mesh.edge_lengths[e] = l01;
    if (ed[0] == 1 && ed[1] == 2) mesh.edge_lengths[e] = l12;
    if (ed[0] == 0 && ed[1] == 2) mesh.edge_lengths[e] = l02;
  }
  kwflow::validate_mesh(mesh);
  return mesh;
}

// Dense cotangent stiffness built straight from edge lengths via Heron's
// formula and law-of-cosines cotangents - no corner-angle table involved.
inline Eigen::MatrixXd dense_stiffness_from_lengths(const kwflow::ConicalMesh& mesh) {
  const int n = mesh.vertex_count;
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& fv = mesh.faces[f];
    const double a = mesh.edge_lengths[mesh.face_edges[f][0]];  // opposite fv[0]
    const double b = mesh.edge_lengths[mesh.face_edges[f][1]];
    const double c = mesh.edge_lengths[mesh.face_edges[f][2]];
    const double s = 0.5 * (a + b + c);
    const double area = std::sqrt(std::fmax(0.0, s * (s - a) * (s - b) * (s - c)));
    const std::array<double, 3> cot = {(b * b + c * c - a * a) / (4.0 * area),
                                       (a * a + c * c - b * b) / (4.0 * area),
                                       (a * a + b * b - c * c) / (4.0 * area)};
    for (int corner = 0; corner < 3; ++corner) {
      const int i = fv[(corner + 1) % 3];
      const int j = fv[(corner + 2) % 3];
      const double w = 0.5 * cot[corner];
      S(i, j) -= w;
      S(j, i) -= w;
      S(i, i) += w;
      S(j, j) += w;
    }
  }
  return S;
}

inline Eigen::VectorXd random_field(int n, unsigned seed, double amplitude = 1.0) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> gauss(0.0, amplitude);
  Eigen::VectorXd f(n);
  for (int v = 0; v < n; ++v) f[v] = gauss(rng);
  return f;
}

// Exact lowest nonzero eigenvalue of the grid torus operator pair.
inline double grid_torus_lambda(int n) {
  const double pi = 3.14159265358979323846;
  return (2.0 - 2.0 * std::cos(2.0 * pi / n)) * n * n;
}

}  // namespace test_helpers
