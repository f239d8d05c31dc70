#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <numbers>

#include "helpers.hpp"
#include "kwflow/generators.hpp"
#include "kwflow/mesh.hpp"
#include "kwflow/metric.hpp"

using namespace kwflow;
using Catch::Matchers::ContainsSubstring;

namespace {
constexpr double pi = std::numbers::pi;
}

TEST_CASE("flat torus counts and topology") {
  const ConicalMesh mesh = flat_torus(4);
  CHECK(mesh.vertex_count == 16);
  CHECK(mesh.edge_count() == 48);
  CHECK(mesh.face_count() == 32);
  CHECK(euler_characteristic(mesh) == 0);
  CHECK(singular_euler(mesh) == 0.0);
  CHECK(mesh.positions.size() == 16);

  const ConicalMesh big = flat_torus(16);
  CHECK(big.vertex_count == 256);
  CHECK(euler_characteristic(big) == 0);
}

TEST_CASE("face-edge table lists the edge opposite each corner") {
  const ConicalMesh mesh = flat_torus(5);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (int c = 0; c < 3; ++c) {
      const auto& edge = mesh.edges[mesh.face_edges[f][c]];
      const int u = mesh.faces[f][(c + 1) % 3];
      const int v = mesh.faces[f][(c + 2) % 3];
      CHECK(edge[0] == std::min(u, v));
      CHECK(edge[1] == std::max(u, v));
    }
  }
  for (const auto& e : mesh.edges) CHECK(e[0] < e[1]);
}

TEST_CASE("tetrahedron is a valid sphere") {
  const ConicalMesh mesh = test_helpers::tetrahedron();
  CHECK(mesh.edge_count() == 6);
  CHECK(euler_characteristic(mesh) == 2);

  const BackgroundMetric metric = metric_quantities(mesh);
  const double face_area = std::sqrt(3.0) / 4.0;
  CHECK_THAT(metric.total_volume, Catch::Matchers::WithinRel(4.0 * face_area, 1e-14));
  for (int v = 0; v < 4; ++v)
    CHECK_THAT(metric.vertex_areas[v], Catch::Matchers::WithinRel(face_area, 1e-14));

  const Eigen::VectorXd defects = vertex_defects(mesh, metric);
  for (int v = 0; v < 4; ++v) CHECK_THAT(defects[v], Catch::Matchers::WithinAbs(pi, 1e-13));
}

TEST_CASE("open and non-manifold face lists are rejected") {
  SECTION("single triangle is not closed") {
    ConicalMesh mesh;
    mesh.vertex_count = 3;
    mesh.faces = {{0, 1, 2}};
    CHECK_THROWS_AS(build_connectivity(mesh), StructureError);
  }
  SECTION("repeated directed edge") {
    ConicalMesh mesh;
    mesh.vertex_count = 3;
    mesh.faces = {{0, 1, 2}, {0, 1, 2}};
    CHECK_THROWS_AS(build_connectivity(mesh), StructureError);
  }
  SECTION("vertex index out of range") {
    ConicalMesh mesh;
    mesh.vertex_count = 3;
    mesh.faces = {{0, 1, 5}, {0, 2, 1}};
    CHECK_THROWS_AS(build_connectivity(mesh), StructureError);
  }
  SECTION("degenerate face") {
    ConicalMesh mesh;
    mesh.vertex_count = 3;
    mesh.faces = {{0, 1, 1}, {0, 2, 1}};
    CHECK_THROWS_AS(build_connectivity(mesh), StructureError);
  }
}

TEST_CASE("pinched and disconnected meshes are rejected") {
  SECTION("two tetrahedra sharing one vertex") {
    ConicalMesh mesh;
    mesh.vertex_count = 7;
    mesh.faces = {{0, 1, 2}, {0, 2, 3}, {0, 3, 1}, {1, 3, 2},
                  {0, 4, 5}, {0, 5, 6}, {0, 6, 4}, {4, 6, 5}};
    build_connectivity(mesh);
    mesh.edge_lengths.assign(mesh.edges.size(), 1.0);
    CHECK_THROWS_WITH(validate_mesh(mesh), ContainsSubstring("pinched"));
  }
  SECTION("two disjoint tetrahedra") {
    ConicalMesh mesh;
    mesh.vertex_count = 8;
    mesh.faces = {{0, 1, 2}, {0, 2, 3}, {0, 3, 1}, {1, 3, 2},
                  {4, 5, 6}, {4, 6, 7}, {4, 7, 5}, {5, 7, 6}};
    build_connectivity(mesh);
    mesh.edge_lengths.assign(mesh.edges.size(), 1.0);
    CHECK_THROWS_WITH(validate_mesh(mesh), ContainsSubstring("disconnected"));
  }
}

TEST_CASE("metric validation rejects broken lengths and divisors") {
  SECTION("non-positive length") {
    ConicalMesh mesh = test_helpers::tetrahedron();
    mesh.edge_lengths[2] = 0.0;
    CHECK_THROWS_AS(validate_mesh(mesh), GeometryError);
  }
  SECTION("triangle inequality violated, face named") {
    ConicalMesh mesh = test_helpers::tetrahedron();
    mesh.edge_lengths[0] = 5.0;
    CHECK_THROWS_WITH(validate_mesh(mesh), ContainsSubstring("triangle inequality"));
  }
  SECTION("cone order at most -1") {
    ConicalMesh mesh = test_helpers::tetrahedron();
    mesh.divisor = {{0, -1.0}};
    CHECK_THROWS_AS(validate_mesh(mesh), GeometryError);
  }
  SECTION("divisor vertex out of range") {
    ConicalMesh mesh = test_helpers::tetrahedron();
    mesh.divisor = {{9, -0.5}};
    CHECK_THROWS_AS(validate_mesh(mesh), StructureError);
  }
  SECTION("divisor vertex repeated") {
    ConicalMesh mesh = test_helpers::tetrahedron();
    mesh.divisor = {{1, -0.5}, {1, -0.25}};
    CHECK_THROWS_AS(validate_mesh(mesh), StructureError);
  }
}

TEST_CASE("beta lookup expands the divisor") {
  const ConicalMesh mesh = pillowcase(3);
  const std::vector<double> beta = beta_by_vertex(mesh);
  int cones = 0;
  for (int v = 0; v < mesh.vertex_count; ++v) {
    if (beta[v] != 0.0) {
      ++cones;
      CHECK(beta[v] == -0.5);
    }
  }
  CHECK(cones == 4);
  CHECK(singular_euler(mesh) == 0.0);
}

TEST_CASE("mesh_with_lengths swaps the metric only") {
  const ConicalMesh mesh = test_helpers::tetrahedron();
  std::vector<double> doubled(mesh.edge_lengths);
  for (double& l : doubled) l *= 2.0;
  const ConicalMesh scaled = mesh_with_lengths(mesh, doubled);
  CHECK(scaled.faces == mesh.faces);
  CHECK(scaled.edges == mesh.edges);
  CHECK(scaled.edge_lengths[0] == 2.0);
  CHECK_THROWS_AS(mesh_with_lengths(mesh, std::vector<double>(3, 1.0)), StructureError);
}

TEST_CASE("corner angles and areas, half-square cells") {
  const ConicalMesh mesh = flat_torus(4);
  const BackgroundMetric metric = metric_quantities(mesh);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    std::array<double, 3> sorted = metric.corner_angles[f];
    std::sort(sorted.begin(), sorted.end());
    CHECK_THAT(sorted[0], Catch::Matchers::WithinAbs(pi / 4.0, 1e-13));
    CHECK_THAT(sorted[1], Catch::Matchers::WithinAbs(pi / 4.0, 1e-13));
    CHECK_THAT(sorted[2], Catch::Matchers::WithinAbs(pi / 2.0, 1e-13));
    CHECK_THAT(metric.face_areas[f], Catch::Matchers::WithinRel(0.5 / 16.0, 1e-13));
  }
  CHECK_THAT(metric.total_volume, Catch::Matchers::WithinRel(1.0, 1e-13));
  CHECK(metric.kappa == 0.0);
}

TEST_CASE("degenerate triangle reported with its face index") {
  const ConicalMesh mesh = test_helpers::double_triangle(1.0, 1.0, 1.0);
  ConicalMesh broken = mesh_with_lengths(mesh, {2.5, 1.0, 1.0});
  CHECK_THROWS_AS(metric_quantities(broken), GeometryError);
}

TEST_CASE("metric is invariant under vertex relabeling") {
  const ConicalMesh mesh = flat_torus(4);
  const int n = mesh.vertex_count;
  std::vector<int> perm(n);
  for (int v = 0; v < n; ++v) perm[v] = (7 * v + 3) % n;  // gcd(7,16)=1, a bijection

  ConicalMesh relabeled;
  relabeled.vertex_count = n;
  for (const auto& f : mesh.faces)
    relabeled.faces.push_back({perm[f[0]], perm[f[1]], perm[f[2]]});
  build_connectivity(relabeled);

  // Transport the metric explicitly: torus positions wrap around the square,
  // so Euclidean distances of raw coordinates would not reproduce it.
  std::map<std::pair<int, int>, double> length_of;
  for (int e = 0; e < mesh.edge_count(); ++e) {
    const int a = perm[mesh.edges[e][0]], b = perm[mesh.edges[e][1]];
    length_of[{std::min(a, b), std::max(a, b)}] = mesh.edge_lengths[e];
  }
  relabeled.edge_lengths.resize(relabeled.edges.size());
  for (std::size_t e = 0; e < relabeled.edges.size(); ++e)
    relabeled.edge_lengths[e] = length_of.at({relabeled.edges[e][0], relabeled.edges[e][1]});
  validate_mesh(relabeled);

  const BackgroundMetric original = metric_quantities(mesh);
  const BackgroundMetric shuffled = metric_quantities(relabeled);
  CHECK_THAT(shuffled.total_volume, Catch::Matchers::WithinRel(original.total_volume, 1e-13));
  CHECK(shuffled.kappa == original.kappa);
  for (int v = 0; v < n; ++v)
    CHECK_THAT(shuffled.vertex_areas[perm[v]],
               Catch::Matchers::WithinRel(original.vertex_areas[v], 1e-13));
}

TEST_CASE("gauss-bonnet report on exact flat backgrounds") {
  SECTION("flat torus") {
    const ConicalMesh mesh = flat_torus(8);
    const GaussBonnetReport report = gauss_bonnet_check(mesh, metric_quantities(mesh));
    CHECK(report.accepted);
    CHECK(report.combinatorial_gap < 1e-12);
    CHECK(report.total_curvature_gap < 1e-12);
    CHECK(report.constant_curvature_gap < 1e-12);
  }
  SECTION("pillowcase absorbs its corner defects into the divisor") {
    const ConicalMesh mesh = pillowcase(4);
    const BackgroundMetric metric = metric_quantities(mesh);
    const GaussBonnetReport report = gauss_bonnet_check(mesh, metric);
    CHECK(report.accepted);
    CHECK(metric.kappa == 0.0);

    const Eigen::VectorXd defects = vertex_defects(mesh, metric);
    const std::vector<double> beta = beta_by_vertex(mesh);
    for (int v = 0; v < mesh.vertex_count; ++v) {
      const double expected = beta[v] == 0.0 ? 0.0 : pi;  // cone angle pi at the corners
      CHECK_THAT(defects[v], Catch::Matchers::WithinAbs(expected, 1e-12));
    }
  }
}

TEST_CASE("gauss-bonnet rejects a raw round sphere as non-constant") {
  const ConicalMesh mesh = cone_sphere(2, {});
  const BackgroundMetric metric = metric_quantities(mesh);
  const GaussBonnetReport report = gauss_bonnet_check(mesh, metric);
  CHECK_FALSE(report.accepted);
  CHECK(report.combinatorial_gap < 1e-10);        // topological identity still exact
  CHECK(report.total_curvature_gap < 1e-10);      // kappa is inferred from the total
  CHECK(report.constant_curvature_gap > 1e-3);    // but per-vertex it is far from constant
  CHECK(report.tolerance > 0.0);

  const GaussBonnetReport loose = gauss_bonnet_check(mesh, metric, 10.0);
  CHECK(loose.accepted);
}

TEST_CASE("generator parameter validation") {
  CHECK_THROWS_AS(flat_torus(2), ConfigError);
  CHECK_THROWS_AS(pillowcase(1), ConfigError);
  CHECK_THROWS_AS(cone_sphere(-1, {}), ConfigError);
  CHECK_THROWS_AS(cone_sphere(1, {0, 0, 0, 0, 0, 0, 0}), ConfigError);
  CHECK_THROWS_AS(cone_sphere(1, {-1.5}), GeometryError);
}

TEST_CASE("cone sphere refinement counts and divisor") {
  const ConicalMesh level0 = cone_sphere(0, {-0.9});
  CHECK(level0.vertex_count == 6);
  CHECK(level0.face_count() == 8);
  CHECK_THAT(singular_euler(level0), Catch::Matchers::WithinAbs(1.1, 1e-14));

  const ConicalMesh level3 = cone_sphere(3, {-0.9, -0.9, -0.9});
  CHECK(level3.vertex_count == 258);
  CHECK(level3.face_count() == 512);
  CHECK(euler_characteristic(level3) == 2);
  CHECK_THAT(singular_euler(level3), Catch::Matchers::WithinAbs(-0.7, 1e-12));
  for (const auto& p : level3.positions) {
    const double r = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    CHECK_THAT(r, Catch::Matchers::WithinRel(1.0, 1e-12));
  }
}

TEST_CASE("pillowcase sheets stay distinct at the rim") {
  for (int n : {2, 3, 4, 16}) {
    const ConicalMesh mesh = pillowcase(n);
    CHECK(mesh.vertex_count == (n + 1) * (n + 1) + (n - 1) * (n - 1));
    CHECK(euler_characteristic(mesh) == 2);
    const GaussBonnetReport report = gauss_bonnet_check(mesh, metric_quantities(mesh));
    CHECK(report.accepted);
  }
}
