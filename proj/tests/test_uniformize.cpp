#include <catch2/catch_amalgamated.hpp>

#include <numbers>

#include "helpers.hpp"
#include "kwflow/generators.hpp"
#include "kwflow/operators.hpp"
#include "kwflow/uniformize.hpp"

using namespace kwflow;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
constexpr double pi = std::numbers::pi;
}

TEST_CASE("conformal curvature reduces to the background curvature at u = 0") {
  const ConicalMesh mesh = cone_sphere(1, {-0.9, -0.9, -0.9});
  const auto metric = metric_quantities(mesh);
  const auto ops = assemble(mesh, metric);

  const Eigen::VectorXd at_zero =
      curvature_of_conformal(Eigen::VectorXd::Zero(mesh.vertex_count), ops, metric);
  for (int v = 0; v < mesh.vertex_count; ++v)
    CHECK_THAT(at_zero[v], WithinRel(metric.kappa, 1e-14));

  SECTION("a constant shift scales curvature by e^{-2c}") {
    const double c = 0.37;
    const Eigen::VectorXd shifted = curvature_of_conformal(
        Eigen::VectorXd::Constant(mesh.vertex_count, c), ops, metric);
    for (int v = 0; v < mesh.vertex_count; ++v)
      CHECK_THAT(shifted[v], WithinRel(std::exp(-2.0 * c) * metric.kappa, 1e-13));
  }

  SECTION("total conformal curvature telescopes to 2 pi chi for arbitrary u") {
    const Eigen::VectorXd u = 0.4 * test_helpers::random_field(mesh.vertex_count, 11);
    const Eigen::VectorXd K = curvature_of_conformal(u, ops, metric);
    const Eigen::VectorXd conformal_density =
        K.cwiseProduct((2.0 * u.array()).exp().matrix());
    const double total = integrate(conformal_density, metric);
    CHECK_THAT(total, WithinRel(2.0 * pi * singular_euler(mesh), 1e-10));
  }
}

TEST_CASE("already-flat backgrounds uniformize in zero iterations") {
  SECTION("flat torus") {
    const ConicalMesh mesh = flat_torus(6);
    const auto result = uniformize_background(mesh, metric_quantities(mesh));
    CHECK(result.converged);
    CHECK(result.iterations == 0);
    CHECK(result.kappa_bar == 0.0);
    CHECK(result.log_factor.cwiseAbs().maxCoeff() == 0.0);
    CHECK(result.residual_history.size() == 1);
    for (std::size_t e = 0; e < mesh.edges.size(); ++e)
      CHECK(result.mesh.edge_lengths[e] == mesh.edge_lengths[e]);
  }
  SECTION("pillowcase") {
    const ConicalMesh mesh = pillowcase(8);
    const auto result = uniformize_background(mesh, metric_quantities(mesh));
    CHECK(result.converged);
    CHECK(result.iterations == 0);
    CHECK(result.log_factor.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("a negatively curved cone sphere reaches constant curvature") {
  const ConicalMesh mesh = cone_sphere(3, {-0.9, -0.9, -0.9});
  const auto raw = metric_quantities(mesh);
  const auto result = uniformize_background(mesh, raw);

  REQUIRE(result.converged);
  const double chi = singular_euler(mesh);
  CHECK_THAT(chi, WithinAbs(-0.7, 1e-12));
  CHECK_THAT(result.kappa_bar, WithinRel(2.0 * pi * chi / raw.total_volume, 1e-14));
  CHECK(result.final_deviation <= 1e-10 * (1.0 + std::abs(result.kappa_bar)));

  SECTION("the rescaled metric carries the target curvature") {
    // Volume is preserved automatically: summing defect = kappa_bar * area
    // over vertices forces the new volume to 2 pi chi / kappa_bar.
    CHECK_THAT(result.metric.total_volume, WithinRel(raw.total_volume, 1e-8));
    CHECK_THAT(result.metric.kappa, WithinRel(result.kappa_bar, 1e-8));

    const Eigen::VectorXd defect = vertex_defects(result.mesh, result.metric);
    const auto beta = beta_by_vertex(result.mesh);
    for (int v = 0; v < result.mesh.vertex_count; ++v) {
      const double smooth = defect[v] + 2.0 * pi * beta[v];
      CHECK_THAT(smooth, WithinAbs(result.kappa_bar * result.metric.vertex_areas[v],
                                   1e-9 * result.metric.vertex_areas[v]));
    }

    const auto gb = gauss_bonnet_check(result.mesh, result.metric);
    CHECK(gb.accepted);
  }

  SECTION("the residual history decays to the final deviation") {
    REQUIRE(result.residual_history.size() >= 2);
    CHECK(result.residual_history.size() == std::size_t(result.iterations) + 1);
    for (std::size_t i = 1; i < result.residual_history.size(); ++i)
      CHECK(result.residual_history[i] < result.residual_history[i - 1]);
    CHECK(result.residual_history.front() > 1e3 * result.residual_history.back());
  }

  SECTION("edge lengths transform by the half-sum rule") {
    for (std::size_t e = 0; e < mesh.edges.size(); ++e) {
      const int a = mesh.edges[e][0];
      const int b = mesh.edges[e][1];
      const double expected =
          std::exp(0.5 * (result.log_factor[a] + result.log_factor[b])) * mesh.edge_lengths[e];
      CHECK_THAT(result.mesh.edge_lengths[e], WithinRel(expected, 1e-13));
    }
  }
}

TEST_CASE("a conformally wrinkled flat torus is flattened back") {
  const ConicalMesh base = flat_torus(6);
  const Eigen::VectorXd phi = 0.03 * test_helpers::random_field(base.vertex_count, 5);
  std::vector<double> lengths(base.edges.size());
  for (std::size_t e = 0; e < base.edges.size(); ++e)
    lengths[e] =
        std::exp(0.5 * (phi[base.edges[e][0]] + phi[base.edges[e][1]])) * base.edge_lengths[e];
  const ConicalMesh wrinkled = mesh_with_lengths(base, std::move(lengths));
  const auto raw = metric_quantities(wrinkled);
  REQUIRE(vertex_defects(wrinkled, raw).cwiseAbs().maxCoeff() > 1e-4);

  const auto result = uniformize_background(wrinkled, raw);
  REQUIRE(result.converged);
  CHECK(result.iterations >= 1);
  CHECK(result.kappa_bar == 0.0);
  CHECK(result.final_deviation <= 1e-10);

  // The flattening factor undoes the wrinkle up to an additive constant.
  const Eigen::VectorXd sum = result.log_factor + phi;
  CHECK(sum.maxCoeff() - sum.minCoeff() <= 1e-6);

  // Null-case gauge: the raw volume is restored exactly by the final rescale.
  CHECK_THAT(result.metric.total_volume, WithinRel(raw.total_volume, 1e-9));

  const auto gb = gauss_bonnet_check(result.mesh, result.metric);
  CHECK(gb.accepted);
}

TEST_CASE("an exhausted iteration budget is an error for solvable cases") {
  const ConicalMesh mesh = cone_sphere(2, {-0.9, -0.9, -0.9});
  UniformizeOptions options;
  options.max_iterations = 1;
  CHECK_THROWS_AS(uniformize_background(mesh, metric_quantities(mesh), options),
                  UniformizeError);
}

TEST_CASE("positive total curvature uniformizes best-effort without throwing") {
  const ConicalMesh mesh = cone_sphere(2, {0.1, 0.1});
  REQUIRE(singular_euler(mesh) > 0.0);
  UniformizeResult result;
  REQUIRE_NOTHROW(result = uniformize_background(mesh, metric_quantities(mesh)));
  CHECK(result.kappa_bar > 0.0);
  CHECK_FALSE(result.converged);
  CHECK(result.final_deviation > 0.0);
  CHECK(!result.residual_history.empty());
  // Best effort still returns a usable background.
  CHECK_NOTHROW(metric_quantities(result.mesh));
}
