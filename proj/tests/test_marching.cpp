#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>
#include <utility>

#include "meshsdf/marching.hpp"

using namespace meshsdf;

namespace {

ScalarField shape_field(const AnalyticShape& shape, int resolution) {
  return sample_field([&](const Vec3& x) { return analytic_sdf(shape, x); },
                      Grid3D::cube(1.0, resolution), 1);
}

/// Signed volume of a closed mesh via the divergence theorem; positive when
/// faces wind counter-clockwise seen from outside.
double signed_volume(const TriMesh& mesh) {
  double v = 0.0;
  for (const auto& f : mesh.faces) {
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3& b = mesh.vertices[f[1]];
    const Vec3& c = mesh.vertices[f[2]];
    v += a.dot(b.cross(c)) / 6.0;
  }
  return v;
}

}  // namespace

TEST_CASE("edge interpolation follows the linear zero crossing") {
  const Vec3 gi(0, 0, 0), gj(1, 0, 0);
  CHECK((interpolate_vertex(gi, gj, 1.0, -1.0) - Vec3(0.5, 0, 0)).norm() == 0.0);
  CHECK((interpolate_vertex(gi, gj, 3.0, -1.0) - Vec3(0.75, 0, 0)).norm() == 0.0);
  // A nudged exact zero lands on the positive endpoint.
  CHECK((interpolate_vertex(gi, gj, 1e-12, -1.0) - gi).norm() < 1e-9);
  CHECK_THROWS_AS(interpolate_vertex(gi, gj, 1.0, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(interpolate_vertex(gi, gj, -1.0, -2.0), std::invalid_argument);
}

TEST_CASE("all-positive fields produce an empty mesh") {
  const ScalarField f =
      sample_field([](const Vec3&) { return 1.0; }, Grid3D::cube(1.0, 8), 1);
  const TriMesh mesh = marching_cubes(f);
  CHECK(mesh.empty());
  CHECK(mesh.vertices.empty());
}

TEST_CASE("extracted sphere is a closed genus-0 surface near the true radius") {
  const ScalarField f = shape_field(AnalyticShape::sphere(0.5), 64);
  const TriMesh mesh = marching_cubes(f);
  REQUIRE(!mesh.empty());
  CHECK(euler_characteristic(mesh) == 2);
  CHECK(genus(mesh) == 0);

  const AnalyticShape s = AnalyticShape::sphere(0.5);
  const double h = f.grid.spacing();
  double worst = 0.0;
  for (const Vec3& v : mesh.vertices) worst = std::max(worst, std::abs(analytic_sdf(s, v)));
  CHECK(worst < h);

  // Outward winding: enclosed volume is positive and close to the ball's.
  const double vol = signed_volume(mesh);
  CHECK(vol > 0.0);
  CHECK(vol == doctest::Approx(4.0 / 3.0 * M_PI * 0.125).epsilon(0.02));
}

TEST_CASE("extracted torus has genus one") {
  const ScalarField f = shape_field(AnalyticShape::torus(0.5, 0.15), 64);
  const TriMesh mesh = marching_cubes(f);
  REQUIRE(!mesh.empty());
  CHECK(euler_characteristic(mesh) == 0);
  CHECK(genus(mesh) == 1);
  CHECK(signed_volume(mesh) > 0.0);
}

TEST_CASE("every vertex sits on its recorded edge with straddling values") {
  const ScalarField f = shape_field(AnalyticShape::torus(0.45, 0.18), 32);
  const TriMesh mesh = marching_cubes(f);
  REQUIRE(mesh.vertex_edges.size() == mesh.vertices.size());
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const VertexEdge& e = mesh.vertex_edges[i];
    REQUIRE(e.node_pos >= 0);
    REQUIRE(e.node_neg >= 0);
    CHECK(f.values[e.node_pos] >= 0.0);
    CHECK(f.values[e.node_neg] < 0.0);
    CHECK(e.t >= 0.0);
    CHECK(e.t <= 1.0);
    // Dedup: each grid edge appears exactly once.
    CHECK(seen.emplace(e.node_pos, e.node_neg).second);

    const int n = f.grid.resolution;
    const auto pos = [&](std::int64_t idx) {
      return f.grid.node_position(static_cast<int>(idx % n), static_cast<int>((idx / n) % n),
                                  static_cast<int>(idx / (std::int64_t(n) * n)));
    };
    const Vec3 expect = pos(e.node_pos) + e.t * (pos(e.node_neg) - pos(e.node_pos));
    CHECK((mesh.vertices[i] - expect).norm() < 1e-12);
  }
}

TEST_CASE("exact zeros at grid nodes do not break extraction") {
  // Odd resolution puts nodes exactly on the r=0.5 sphere along the axes.
  const ScalarField f = shape_field(AnalyticShape::sphere(0.5), 5);
  int exact_zeros = 0;
  for (double v : f.values) exact_zeros += (v == 0.0);
  REQUIRE(exact_zeros == 6);
  const TriMesh mesh = marching_cubes(f);
  REQUIRE(!mesh.empty());
  CHECK(euler_characteristic(mesh) == 2);
  CHECK(signed_volume(mesh) > 0.0);
}

TEST_CASE("unbounded band makes sparse resampling identical to dense") {
  const AnalyticShape s = AnalyticShape::sphere(0.4, Vec3(0.05, 0, 0));
  const ScalarField prev = shape_field(s, 24);
  const AnalyticShape moved = AnalyticShape::sphere(0.4, Vec3(0.08, 0, 0));
  const FieldFn fn = [&](const Vec3& x) { return analytic_sdf(moved, x); };
  const SparseResult sparse =
      sparse_resample(prev, fn, std::numeric_limits<double>::infinity(), 1);
  const ScalarField dense = sample_field(fn, prev.grid, 1);
  CHECK(sparse.evaluations == prev.grid.node_count());
  REQUIRE(sparse.field.values.size() == dense.values.size());
  for (std::size_t i = 0; i < dense.values.size(); ++i)
    CHECK(sparse.field.values[i] == dense.values[i]);
}

TEST_CASE("banded resampling reproduces the dense mesh with far fewer evaluations") {
  const int n = 64;
  const AnalyticShape before = AnalyticShape::sphere(0.42);
  const AnalyticShape after = AnalyticShape::sphere(0.43);  // field moves by 0.01 < tau - h
  const ScalarField prev = shape_field(before, n);
  const double tau = sparse_band(prev.grid.spacing(), 1.2);
  const FieldFn fn = [&](const Vec3& x) { return analytic_sdf(after, x); };

  const SparseResult sparse = sparse_resample(prev, fn, tau, 1);
  const ScalarField dense = sample_field(fn, prev.grid, 1);
  const TriMesh mesh_sparse = marching_cubes(sparse.field);
  const TriMesh mesh_dense = marching_cubes(dense);

  REQUIRE(mesh_sparse.vertices.size() == mesh_dense.vertices.size());
  REQUIRE(mesh_sparse.faces.size() == mesh_dense.faces.size());
  for (std::size_t i = 0; i < mesh_dense.vertices.size(); ++i)
    CHECK((mesh_sparse.vertices[i] - mesh_dense.vertices[i]).norm() == 0.0);
  for (std::size_t i = 0; i < mesh_dense.faces.size(); ++i)
    CHECK(mesh_sparse.faces[i] == mesh_dense.faces[i]);

  CHECK(sparse.evaluations < prev.grid.node_count() / 2);
  CHECK(sparse.evaluations <= 40 * std::int64_t(n) * n);
}

TEST_CASE("sparse resampling rejects a non-positive band") {
  const ScalarField prev = shape_field(AnalyticShape::sphere(0.5), 8);
  const FieldFn fn = [](const Vec3& x) { return x.norm() - 0.5; };
  CHECK_THROWS_AS(sparse_resample(prev, fn, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(sparse_resample(prev, fn, -1.0, 1), std::invalid_argument);
}

TEST_CASE("marching cubes output does not depend on the worker count") {
  const ScalarField f = shape_field(AnalyticShape::torus(0.5, 0.15), 32);
  const AnalyticShape moved = AnalyticShape::torus(0.5, 0.16);
  const FieldFn fn = [&](const Vec3& x) { return analytic_sdf(moved, x); };
  const double tau = sparse_band(f.grid.spacing());
  const SparseResult a = sparse_resample(f, fn, tau, 1);
  const SparseResult b = sparse_resample(f, fn, tau, 4);
  CHECK(a.evaluations == b.evaluations);
  for (std::size_t i = 0; i < a.field.values.size(); ++i)
    CHECK(a.field.values[i] == b.field.values[i]);
}
