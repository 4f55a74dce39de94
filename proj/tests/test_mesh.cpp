#include <doctest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "meshsdf/marching.hpp"
#include "meshsdf/mesh.hpp"

using namespace meshsdf;

namespace {

TriMesh tetrahedron() {
  TriMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  // Outward-wound faces of the unit corner tetrahedron.
  m.faces = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
  return m;
}

TriMesh mc_sphere(int resolution) {
  const AnalyticShape s = AnalyticShape::sphere(0.5);
  const ScalarField f = sample_field([&](const Vec3& x) { return analytic_sdf(s, x); },
                                     Grid3D::cube(1.0, resolution), 1);
  return marching_cubes(f);
}

}  // namespace

TEST_CASE("tetrahedron topology") {
  const TriMesh tet = tetrahedron();
  CHECK(euler_characteristic(tet) == 2);
  CHECK(genus(tet) == 0);
}

TEST_CASE("open surfaces are reported edge by edge") {
  TriMesh open_square;
  open_square.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0)};
  open_square.faces = {{0, 1, 2}, {0, 2, 3}};
  // Four boundary edges belong to one face each; the diagonal is fine.
  CHECK_THROWS_WITH_AS(euler_characteristic(open_square), doctest::Contains("non-manifold"),
                       std::runtime_error);
  try {
    euler_characteristic(open_square);
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("4 non-manifold") != std::string::npos);
  }
}

TEST_CASE("degenerate faces are rejected before topology is computed") {
  TriMesh bad = tetrahedron();
  bad.faces.push_back({0, 0, 1});
  CHECK_THROWS_AS(euler_characteristic(bad), std::runtime_error);
  bad = tetrahedron();
  bad.faces.push_back({0, 1, 9});
  CHECK_THROWS_AS(euler_characteristic(bad), std::runtime_error);
}

TEST_CASE("genus requires an even-deficit Euler characteristic") {
  // Two disjoint tetrahedra: chi adds per component.
  TriMesh two = tetrahedron();
  const TriMesh other = tetrahedron();
  const int base = static_cast<int>(two.vertices.size());
  for (const Vec3& v : other.vertices) two.vertices.push_back(v + Vec3(5, 0, 0));
  for (const auto& f : other.faces)
    two.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
  CHECK(euler_characteristic(two) == 4);

  // Minimal projective-plane triangulation: 6 vertices, 15 edges each on two
  // faces, 10 faces, so chi = 1 and no genus exists.
  TriMesh hemi;
  for (int i = 0; i < 6; ++i)
    hemi.vertices.push_back(Vec3(std::cos(i), std::sin(i), 0.1 * i));
  hemi.faces = {{0, 1, 2}, {0, 1, 3}, {0, 2, 4}, {0, 3, 5}, {0, 4, 5},
                {1, 2, 5}, {1, 3, 4}, {1, 4, 5}, {2, 3, 4}, {2, 3, 5}};
  CHECK(euler_characteristic(hemi) == 1);
  CHECK_THROWS_WITH_AS(genus(hemi), doctest::Contains("not of the form"), std::runtime_error);

  const TriMesh torus_mesh = [] {
    const AnalyticShape t = AnalyticShape::torus(0.5, 0.15);
    const ScalarField f = sample_field([&](const Vec3& x) { return analytic_sdf(t, x); },
                                       Grid3D::cube(1.0, 48), 1);
    return marching_cubes(f);
  }();
  CHECK(genus(torus_mesh) == 1);
}

TEST_CASE("largest component keeps the big piece and reindexes it") {
  TriMesh combined = mc_sphere(32);
  const std::size_t big_faces = combined.faces.size();
  const TriMesh tet = tetrahedron();
  const int base = static_cast<int>(combined.vertices.size());
  for (const Vec3& v : tet.vertices) {
    combined.vertices.push_back(v);
    combined.vertex_edges.push_back(VertexEdge{});
  }
  for (const auto& f : tet.faces)
    combined.faces.push_back({f[0] + base, f[1] + base, f[2] + base});

  const TriMesh kept = largest_component(combined);
  CHECK(kept.faces.size() == big_faces);
  CHECK(kept.vertices.size() == combined.vertices.size() - 4);
  CHECK(euler_characteristic(kept) == 2);
  int max_index = -1;
  for (const auto& f : kept.faces) max_index = std::max({max_index, f[0], f[1], f[2]});
  CHECK(max_index == static_cast<int>(kept.vertices.size()) - 1);
}

TEST_CASE("largest component of an empty mesh is empty") {
  CHECK(largest_component(TriMesh{}).faces.empty());
}

TEST_CASE("single triangle round-trips through OBJ exactly") {
  TriMesh tri;
  tri.vertices = {Vec3(0.125, -0.25, 0.5), Vec3(1, 2, 3), Vec3(-0.75, 0.0625, 0)};
  tri.faces = {{0, 1, 2}};
  std::stringstream buf;
  export_obj(tri, buf);
  const TriMesh back = import_obj(buf);
  REQUIRE(back.vertices.size() == 3);
  REQUIRE(back.faces.size() == 1);
  for (int i = 0; i < 3; ++i) CHECK((back.vertices[i] - tri.vertices[i]).norm() == 0.0);
  CHECK(back.faces[0] == tri.faces[0]);
}

TEST_CASE("dense extraction round-trips through OBJ within print precision") {
  const TriMesh mesh = mc_sphere(64);
  std::stringstream buf;
  export_obj(mesh, buf);
  const TriMesh back = import_obj(buf);
  REQUIRE(back.vertices.size() == mesh.vertices.size());
  REQUIRE(back.faces.size() == mesh.faces.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
    worst = std::max(worst, (mesh.vertices[i] - back.vertices[i]).lpNorm<Eigen::Infinity>());
  CHECK(worst < 1e-9);
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) CHECK(back.faces[i] == mesh.faces[i]);
}

TEST_CASE("OBJ import accepts common face variants and ignores extras") {
  std::stringstream src(
      "# comment line\n"
      "v 0 0 0\n"
      "v 1 0 0\n"
      "vn 0 0 1\n"
      "vt 0.5 0.5\n"
      "v 0 1 0\n"
      "s off\n"
      "f 1/1 2/2 3/3\n"
      "f 1//1 2//1 3//1\n");
  const TriMesh mesh = import_obj(src);
  CHECK(mesh.vertices.size() == 3);
  REQUIRE(mesh.faces.size() == 2);
  CHECK(mesh.faces[0] == std::array<int, 3>{0, 1, 2});
  CHECK(mesh.faces[1] == std::array<int, 3>{0, 1, 2});
}

TEST_CASE("malformed OBJ input names the offending line") {
  std::stringstream zero_index("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n");
  CHECK_THROWS_WITH_AS(import_obj(zero_index), doctest::Contains("line 4"), std::runtime_error);

  std::stringstream short_vertex("v 0 0\n");
  CHECK_THROWS_WITH_AS(import_obj(short_vertex), doctest::Contains("line 1"), std::runtime_error);

  std::stringstream out_of_range("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n");
  CHECK_THROWS_WITH_AS(import_obj(out_of_range), doctest::Contains("line 4"),
                       std::runtime_error);

  std::stringstream quad("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n");
  CHECK_THROWS_AS(import_obj(quad), std::runtime_error);
}
