#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "kwflow/errors.hpp"
#include "kwflow/mesh.hpp"

namespace kwflow {

// Unit-side square torus on an n x n grid, each cell split along one
// diagonal. The metric is intrinsic (wrapped edges make chordal distances
// meaningless), positions keep the (x, y) chart for pointwise prescriptions.
inline ConicalMesh flat_torus(int n) {
  if (n < 3) throw ConfigError("flat_torus needs n >= 3, got " + std::to_string(n));
  ConicalMesh mesh;
  mesh.vertex_count = n * n;
  const auto vid = [n](int i, int j) { return ((j % n + n) % n) * n + ((i % n + n) % n); };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      mesh.faces.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)});
      mesh.faces.push_back({vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)});
    }
  build_connectivity(mesh);

  const double h = 1.0 / n;
  mesh.edge_lengths.resize(mesh.edges.size());
  for (std::size_t e = 0; e < mesh.edges.size(); ++e) {
    const int a = mesh.edges[e][0], b = mesh.edges[e][1];
    const int dxi = std::abs(a % n - b % n), dyi = std::abs(a / n - b / n);
    const double dx = std::min(dxi, n - dxi) * h;
    const double dy = std::min(dyi, n - dyi) * h;
    mesh.edge_lengths[e] = std::sqrt(dx * dx + dy * dy);
  }
  mesh.positions.resize(mesh.vertex_count);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) mesh.positions[vid(i, j)] = {i * h, j * h, 0.0};
  validate_mesh(mesh);
  return mesh;
}

// Double of the unit square across its boundary: two grid sheets glued along
// the rim, four beta = -1/2 cones at the corners, flat everywhere. Every edge
// lies inside one flat chart, so lengths derive from the (x, y) coordinates.
inline ConicalMesh pillowcase(int n) {
  if (n < 2) throw ConfigError("pillowcase needs n >= 2, got " + std::to_string(n));
  ConicalMesh mesh;
  const int top_count = (n + 1) * (n + 1);
  const auto top = [n](int i, int j) { return j * (n + 1) + i; };
  const auto boundary = [n](int i, int j) { return i == 0 || i == n || j == 0 || j == n; };
  const auto bottom = [&](int i, int j) {
    return boundary(i, j) ? top(i, j) : top_count + (j - 1) * (n - 1) + (i - 1);
  };
  mesh.vertex_count = top_count + (n - 1) * (n - 1);

  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      // A diagonal with both ends on the rim would coincide between the two
      // sheets (the rim vertices are shared); those cells use the other one.
      const bool flip = boundary(i, j) && boundary(i + 1, j + 1);
      if (flip) {
        mesh.faces.push_back({top(i, j), top(i + 1, j), top(i, j + 1)});
        mesh.faces.push_back({top(i + 1, j), top(i + 1, j + 1), top(i, j + 1)});
        mesh.faces.push_back({bottom(i, j), bottom(i, j + 1), bottom(i + 1, j)});
        mesh.faces.push_back({bottom(i + 1, j), bottom(i, j + 1), bottom(i + 1, j + 1)});
      } else {
        mesh.faces.push_back({top(i, j), top(i + 1, j), top(i + 1, j + 1)});
        mesh.faces.push_back({top(i, j), top(i + 1, j + 1), top(i, j + 1)});
        mesh.faces.push_back({bottom(i, j), bottom(i + 1, j + 1), bottom(i + 1, j)});
        mesh.faces.push_back({bottom(i, j), bottom(i, j + 1), bottom(i + 1, j + 1)});
      }
    }

  const double h = 1.0 / n;
  mesh.positions.resize(mesh.vertex_count);
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i) {
      mesh.positions[top(i, j)] = {i * h, j * h, 0.0};
      if (!boundary(i, j)) mesh.positions[bottom(i, j)] = {i * h, j * h, 0.0};
    }
  mesh.divisor = {{top(0, 0), -0.5}, {top(n, 0), -0.5}, {top(0, n), -0.5}, {top(n, n), -0.5}};

  build_connectivity(mesh);
  validate_mesh(mesh);
  return mesh;
}

// Octahedron refined `level` times with midpoint splits, vertices projected to
// the unit sphere, chordal edge lengths. The first betas.size() octahedron
// vertices are marked as cones; the raw metric does not realize them, so this
// mesh is meant to be uniformized before use as a background.
inline ConicalMesh cone_sphere(int level, const std::vector<double>& betas) {
  if (level < 0) throw ConfigError("cone_sphere needs level >= 0");
  if (betas.size() > 6)
    throw ConfigError("cone_sphere supports at most 6 cones, got " +
                      std::to_string(betas.size()));
  std::vector<std::array<double, 3>> pos = {{1, 0, 0},  {-1, 0, 0}, {0, 1, 0},
                                            {0, -1, 0}, {0, 0, 1},  {0, 0, -1}};
  std::vector<std::array<int, 3>> faces = {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4},
                                           {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> midpoint;
    const auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      std::array<double, 3> p = {0.5 * (pos[a][0] + pos[b][0]), 0.5 * (pos[a][1] + pos[b][1]),
                                 0.5 * (pos[a][2] + pos[b][2])};
      const double r = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
      p = {p[0] / r, p[1] / r, p[2] / r};
      const int id = static_cast<int>(pos.size());
      pos.push_back(p);
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }

  ConicalMesh mesh;
  mesh.vertex_count = static_cast<int>(pos.size());
  mesh.faces = std::move(faces);
  mesh.positions = std::move(pos);
  for (std::size_t i = 0; i < betas.size(); ++i)
    mesh.divisor.emplace_back(static_cast<int>(i), betas[i]);
  build_connectivity(mesh);
  validate_mesh(mesh);
  return mesh;
}

}  // namespace kwflow
