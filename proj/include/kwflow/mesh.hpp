#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kwflow/errors.hpp"

namespace kwflow {

// Closed oriented triangle mesh with an intrinsic metric (edge lengths) and a
// divisor of cone vertices. Vertex positions, when present, are passive data
// used only to evaluate pointwise prescriptions; the edge lengths are always
// the authoritative metric.
struct ConicalMesh {
  int vertex_count = 0;
  std::vector<std::array<int, 3>> faces;
  std::vector<std::pair<int, double>> divisor;  // (vertex, beta), beta > -1
  std::vector<std::array<double, 3>> positions;  // empty for abstract meshes

  // Filled by build_connectivity.
  std::vector<std::array<int, 2>> edges;       // canonical, lo < hi
  std::vector<std::array<int, 3>> face_edges;  // face_edges[f][c] = edge opposite corner c
  std::vector<double> edge_lengths;

  int edge_count() const { return static_cast<int>(edges.size()); }
  int face_count() const { return static_cast<int>(faces.size()); }
};

namespace detail {

inline std::int64_t directed_key(int a, int b, int n) {
  return static_cast<std::int64_t>(a) * n + b;
}

}  // namespace detail

// Derives the edge list and the face->edge table from the face list. Throws
// StructureError if an edge borders anything but two faces with opposite
// orientation (this also rejects parallel edges, which the pair-keyed edge
// model cannot represent).
inline void build_connectivity(ConicalMesh& mesh) {
  const int n = mesh.vertex_count;
  mesh.edges.clear();
  mesh.face_edges.assign(mesh.faces.size(), {-1, -1, -1});

  std::unordered_map<std::int64_t, int> edge_of_pair;
  edge_of_pair.reserve(mesh.faces.size() * 2);
  std::unordered_map<std::int64_t, int> directed_count;
  directed_count.reserve(mesh.faces.size() * 3);

  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& fv = mesh.faces[f];
    for (int c = 0; c < 3; ++c) {
      if (fv[c] < 0 || fv[c] >= n)
        throw StructureError("face " + std::to_string(f) + " references vertex " +
                             std::to_string(fv[c]) + " outside [0," + std::to_string(n) + ")");
    }
    if (fv[0] == fv[1] || fv[1] == fv[2] || fv[2] == fv[0])
      throw StructureError("face " + std::to_string(f) + " repeats a vertex");
    for (int c = 0; c < 3; ++c) {
      const int a = fv[(c + 1) % 3];
      const int b = fv[(c + 2) % 3];
      if (++directed_count[detail::directed_key(a, b, n)] > 1)
        throw StructureError("directed edge (" + std::to_string(a) + "," + std::to_string(b) +
                             ") appears twice; mesh is not an oriented manifold");
      const std::int64_t key = detail::directed_key(std::min(a, b), std::max(a, b), n);
      auto it = edge_of_pair.find(key);
      int e;
      if (it == edge_of_pair.end()) {
        e = static_cast<int>(mesh.edges.size());
        mesh.edges.push_back({std::min(a, b), std::max(a, b)});
        edge_of_pair.emplace(key, e);
      } else {
        e = it->second;
      }
      mesh.face_edges[f][c] = e;
    }
  }

  // Closedness: every undirected edge must carry both directions.
  for (const auto& e : mesh.edges) {
    if (!directed_count.count(detail::directed_key(e[1], e[0], n)) ||
        !directed_count.count(detail::directed_key(e[0], e[1], n)))
      throw StructureError("edge (" + std::to_string(e[0]) + "," + std::to_string(e[1]) +
                           ") borders only one face; mesh is not closed");
  }

  if (mesh.edge_lengths.empty() && !mesh.positions.empty()) {
    mesh.edge_lengths.resize(mesh.edges.size());
    for (std::size_t e = 0; e < mesh.edges.size(); ++e) {
      const auto& p = mesh.positions[mesh.edges[e][0]];
      const auto& q = mesh.positions[mesh.edges[e][1]];
      const double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
      mesh.edge_lengths[e] = std::sqrt(dx * dx + dy * dy + dz * dz);
    }
  }
}

inline std::vector<double> beta_by_vertex(const ConicalMesh& mesh) {
  std::vector<double> beta(mesh.vertex_count, 0.0);
  for (const auto& [v, b] : mesh.divisor) beta[v] = b;
  return beta;
}

// Full structural/metric validation. build_connectivity must have run.
inline void validate_mesh(const ConicalMesh& mesh) {
  if (mesh.vertex_count <= 0) throw StructureError("mesh has no vertices");
  if (mesh.faces.empty()) throw StructureError("mesh has no faces");
  if (mesh.face_edges.size() != mesh.faces.size())
    throw StructureError("connectivity not built");
  if (!mesh.positions.empty() &&
      static_cast<int>(mesh.positions.size()) != mesh.vertex_count)
    throw StructureError("positions array does not match vertex count");
  if (mesh.edge_lengths.size() != mesh.edges.size())
    throw StructureError("edge length array does not match edge count");

  for (std::size_t e = 0; e < mesh.edge_lengths.size(); ++e) {
    if (!(mesh.edge_lengths[e] > 0.0) || !std::isfinite(mesh.edge_lengths[e]))
      throw GeometryError("edge " + std::to_string(e) + " has non-positive length");
  }
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const double a = mesh.edge_lengths[mesh.face_edges[f][0]];
    const double b = mesh.edge_lengths[mesh.face_edges[f][1]];
    const double c = mesh.edge_lengths[mesh.face_edges[f][2]];
    if (!(a < b + c && b < a + c && c < a + b))
      throw GeometryError("face " + std::to_string(f) + " violates the triangle inequality (" +
                          std::to_string(a) + ", " + std::to_string(b) + ", " +
                          std::to_string(c) + ")");
  }

  std::vector<char> seen(mesh.vertex_count, 0);
  for (const auto& [v, b] : mesh.divisor) {
    if (v < 0 || v >= mesh.vertex_count)
      throw StructureError("divisor vertex " + std::to_string(v) + " out of range");
    if (seen[v]) throw StructureError("divisor lists vertex " + std::to_string(v) + " twice");
    seen[v] = 1;
    if (!(b > -1.0) || !std::isfinite(b))
      throw GeometryError("cone order " + std::to_string(b) + " at vertex " +
                          std::to_string(v) + " must exceed -1");
  }

  // Vertex links must be single cycles (no pinched vertices). Walk each
  // umbrella by h = twin(prev(h)) and compare the cycle length with the
  // number of incident corners.
  const int n = mesh.vertex_count;
  std::unordered_map<std::int64_t, int> face_of_directed;
  face_of_directed.reserve(mesh.faces.size() * 3);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& fv = mesh.faces[f];
    for (int c = 0; c < 3; ++c)
      face_of_directed[detail::directed_key(fv[(c + 1) % 3], fv[(c + 2) % 3], n)] =
          static_cast<int>(f);
  }
  std::vector<int> corner_count(n, 0);
  std::vector<int> some_neighbor(n, -1);
  for (const auto& fv : mesh.faces)
    for (int c = 0; c < 3; ++c) {
      ++corner_count[fv[c]];
      some_neighbor[fv[c]] = fv[(c + 1) % 3];
    }
  for (int v = 0; v < n; ++v) {
    if (corner_count[v] == 0)
      throw StructureError("vertex " + std::to_string(v) + " is isolated");
    int b0 = some_neighbor[v];
    int b = b0;
    int steps = 0;
    do {
      const auto it = face_of_directed.find(detail::directed_key(v, b, n));
      if (it == face_of_directed.end())
        throw StructureError("vertex " + std::to_string(v) + " has a broken link");
      const auto& fv = mesh.faces[it->second];
      int c = 0;
      while (fv[c] != v) ++c;
      b = fv[(c + 2) % 3];  // third vertex of this face; twin(prev) is (v, that)
      if (++steps > corner_count[v])
        throw StructureError("vertex " + std::to_string(v) + " link walk does not close");
    } while (b != b0);
    if (steps != corner_count[v])
      throw StructureError("vertex " + std::to_string(v) +
                           " has a pinched link (two umbrellas glued at one vertex)");
  }

  // Connectedness, needed by the spectral routines.
  std::vector<char> reached(n, 0);
  std::vector<int> stack = {mesh.faces[0][0]};
  reached[stack[0]] = 1;
  std::vector<std::vector<int>> adjacency(n);
  for (const auto& e : mesh.edges) {
    adjacency[e[0]].push_back(e[1]);
    adjacency[e[1]].push_back(e[0]);
  }
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int w : adjacency[v])
      if (!reached[w]) {
        reached[w] = 1;
        stack.push_back(w);
      }
  }
  if (std::count(reached.begin(), reached.end(), char(1)) != n)
    throw StructureError("mesh is disconnected");
}

inline int euler_characteristic(const ConicalMesh& mesh) {
  return mesh.vertex_count - mesh.edge_count() + mesh.face_count();
}

// chi(surface, divisor) = chi + sum of cone orders; real-valued.
inline double singular_euler(const ConicalMesh& mesh) {
  double chi = static_cast<double>(euler_characteristic(mesh));
  for (const auto& [v, b] : mesh.divisor) chi += b;
  return chi;
}

// Convenience: same combinatorics and divisor, new metric.
inline ConicalMesh mesh_with_lengths(const ConicalMesh& mesh, std::vector<double> lengths) {
  ConicalMesh out = mesh;
  out.edge_lengths = std::move(lengths);
  if (out.edge_lengths.size() != mesh.edges.size())
    throw StructureError("replacement length array does not match edge count");
  return out;
}

}  // namespace kwflow
