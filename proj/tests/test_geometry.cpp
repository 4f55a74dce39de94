#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>

#include "meshsdf/geometry.hpp"

using namespace meshsdf;

namespace {

Vec3 fd_gradient(const AnalyticShape& shape, const Vec3& x, double step) {
  Vec3 g;
  for (int d = 0; d < 3; ++d) {
    Vec3 lo = x, hi = x;
    lo[d] -= step;
    hi[d] += step;
    g[d] = (analytic_sdf(shape, hi) - analytic_sdf(shape, lo)) / (2 * step);
  }
  return g;
}

}  // namespace

TEST_CASE("cube grid has symmetric corners and uniform spacing") {
  const Grid3D g = Grid3D::cube(1.0, 64);
  CHECK(g.min_corner == Vec3(-1, -1, -1));
  CHECK(g.max_corner == Vec3(1, 1, 1));
  CHECK(g.resolution == 64);
  CHECK(g.spacing() == doctest::Approx(2.0 / 63).epsilon(1e-15));
  CHECK(g.node_count() == 64 * 64 * 64);
  g.validate();
}

TEST_CASE("grid validation rejects degenerate shapes") {
  Grid3D g = Grid3D::cube(1.0, 2);
  g.validate();

  g.resolution = 1;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);

  g = Grid3D::cube(1.0, 8);
  g.max_corner.x() = g.min_corner.x() - 0.5;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);

  g = Grid3D::cube(1.0, 8);
  g.max_corner.y() = 0.5;  // y spacing no longer matches x and z
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

TEST_CASE("node indexing is x-fastest and positions hit both corners") {
  const Grid3D g = Grid3D::cube(1.0, 5);
  CHECK(g.node_index(0, 0, 0) == 0);
  CHECK(g.node_index(1, 0, 0) == 1);
  CHECK(g.node_index(0, 1, 0) == 5);
  CHECK(g.node_index(0, 0, 1) == 25);
  CHECK(g.node_index(4, 4, 4) == g.node_count() - 1);
  CHECK((g.node_position(0, 0, 0) - g.min_corner).norm() == 0.0);
  CHECK((g.node_position(4, 4, 4) - g.max_corner).norm() < 1e-15);
  CHECK(g.node_position(2, 2, 2).norm() < 1e-15);
}

TEST_CASE("sphere signed distance is radial distance minus radius") {
  const AnalyticShape s = AnalyticShape::sphere(0.5);
  CHECK(analytic_sdf(s, Vec3(0, 0, 0)) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(analytic_sdf(s, Vec3(0.5, 0, 0)) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(analytic_sdf(s, Vec3(0, 0.75, 0)) == doctest::Approx(0.25).epsilon(1e-15));

  const AnalyticShape moved = AnalyticShape::sphere(0.3, Vec3(0.1, -0.2, 0.05));
  CHECK(analytic_sdf(moved, Vec3(0.1, -0.2, 0.05)) == doctest::Approx(-0.3).epsilon(1e-15));
  CHECK(analytic_sdf(moved, Vec3(0.1, 0.3, 0.05)) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("torus signed distance at spine, center, and surface") {
  const AnalyticShape t = AnalyticShape::torus(0.5, 0.15);
  CHECK(analytic_sdf(t, Vec3(0.5, 0, 0)) == doctest::Approx(-0.15).epsilon(1e-15));
  CHECK(analytic_sdf(t, Vec3(0, 0, 0)) == doctest::Approx(0.35).epsilon(1e-15));
  CHECK(analytic_sdf(t, Vec3(0.65, 0, 0)) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(analytic_sdf(t, Vec3(0.5, 0, 0.15)) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(analytic_sdf(t, Vec3(0, 0.5, -0.1)) == doctest::Approx(-0.05).epsilon(1e-12));
}

TEST_CASE("signed distance is negative strictly inside and positive outside") {
  const AnalyticShape s = AnalyticShape::sphere(0.4);
  CHECK(analytic_sdf(s, Vec3(0.2, 0.1, -0.1)) < 0);
  CHECK(analytic_sdf(s, Vec3(0.5, 0.5, 0.5)) > 0);

  const AnalyticShape t = AnalyticShape::torus(0.45, 0.12);
  CHECK(analytic_sdf(t, Vec3(0.45, 0, 0.05)) < 0);
  CHECK(analytic_sdf(t, Vec3(0, 0, 1)) > 0);
  CHECK(analytic_sdf(t, Vec3(0, 0, 0)) > 0);  // hole of the ring
}

TEST_CASE("analytic gradients match finite differences and have unit norm") {
  Rng rng(42);
  const AnalyticShape shapes[] = {AnalyticShape::sphere(0.35, Vec3(0.05, 0, -0.1)),
                                  AnalyticShape::torus(0.5, 0.15)};
  for (const AnalyticShape& shape : shapes) {
    int tested = 0;
    while (tested < 50) {
      const Vec3 x(rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9));
      const Vec3 g = analytic_sdf_gradient(shape, x);
      if (g.norm() < 0.5) continue;  // skip the medial neighborhood
      const Vec3 fd = fd_gradient(shape, x, 1e-6);
      if (fd.norm() < 0.999 || fd.norm() > 1.001) continue;  // stencil straddles the medial set
      CHECK((g - fd).norm() < 1e-6);
      CHECK(g.norm() == doctest::Approx(1.0).epsilon(1e-12));
      ++tested;
    }
  }
}

TEST_CASE("finite-difference gradient norm is one away from the medial axis") {
  // Eikonal property of a true signed distance field.
  Rng rng(7);
  const AnalyticShape t = AnalyticShape::torus(0.5, 0.15);
  int tested = 0;
  while (tested < 100) {
    const Vec3 x(rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9));
    // The gradient is singular on the z-axis and on the spine circle; the
    // spine distance equals sdf + minor radius.
    if (std::hypot(x.x(), x.y()) < 0.05) continue;
    if (analytic_sdf(t, x) + 0.15 < 0.05) continue;
    const double n = fd_gradient(t, x, 1e-5).norm();
    CHECK(n == doctest::Approx(1.0).epsilon(1e-4));
    ++tested;
  }
}

TEST_CASE("gradient vanishes exactly on the medial set") {
  CHECK(analytic_sdf_gradient(AnalyticShape::sphere(0.5), Vec3(0, 0, 0)).norm() == 0.0);
  CHECK(analytic_sdf_gradient(AnalyticShape::torus(0.5, 0.15), Vec3(0.5, 0, 0)).norm() == 0.0);
}

TEST_CASE("field sampling evaluates every node") {
  const Grid3D g = Grid3D::cube(1.0, 3);
  const ScalarField constant = sample_field([](const Vec3&) { return 1.0; }, g, 1);
  REQUIRE(constant.values.size() == 27);
  CHECK(constant.all_valid());
  for (double v : constant.values) CHECK(v == 1.0);

  const AnalyticShape s = AnalyticShape::sphere(0.5);
  const ScalarField f = sample_field([&](const Vec3& x) { return analytic_sdf(s, x); }, g, 1);
  CHECK(f.values[f.grid.node_index(1, 1, 1)] == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(f.values[f.grid.node_index(0, 0, 0)] ==
        doctest::Approx(std::sqrt(3.0) - 0.5).epsilon(1e-15));
}

TEST_CASE("node values are pointwise exact regardless of resolution") {
  const AnalyticShape s = AnalyticShape::sphere(0.5);
  const Grid3D g = Grid3D::cube(1.0, 33);
  const ScalarField f = sample_field([&](const Vec3& x) { return analytic_sdf(s, x); }, g, 1);
  const int c = 16;  // node exactly at the origin for odd resolution
  CHECK(g.node_position(c, c, c).norm() == 0.0);
  CHECK(f.values[g.node_index(c, c, c)] == analytic_sdf(s, Vec3::Zero()));
}

TEST_CASE("field sampling does not depend on the worker count") {
  const AnalyticShape t = AnalyticShape::torus(0.45, 0.18);
  const Grid3D g = Grid3D::cube(1.0, 17);
  const FieldFn fn = [&](const Vec3& x) { return analytic_sdf(t, x); };
  const ScalarField a = sample_field(fn, g, 1);
  const ScalarField b = sample_field(fn, g, 3);
  REQUIRE(a.values.size() == b.values.size());
  for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == b.values[i]);
}

TEST_CASE("non-finite field values raise an error naming the node") {
  const Grid3D g = Grid3D::cube(1.0, 4);
  const FieldFn bad = [](const Vec3& x) {
    return x.x() > 0.5 ? std::numeric_limits<double>::quiet_NaN() : 0.25;
  };
  CHECK_THROWS_WITH_AS(sample_field(bad, g, 1), doctest::Contains("node"), std::runtime_error);
}

TEST_CASE("training samples carry exact labels and honor counts") {
  const AnalyticShape s = AnalyticShape::sphere(0.3);
  Rng rng(11);
  const SampleSet set = sample_training_points(s, 200, 50, Vec3(-1, -1, -1), Vec3(1, 1, 1),
                                               0.005, 0.05, rng);
  REQUIRE(set.points.size() == 250);
  REQUIRE(set.sdf.size() == 250);
  for (std::size_t i = 0; i < set.points.size(); ++i)
    CHECK(set.sdf[i] == analytic_sdf(s, set.points[i]));
  // Uniform tail stays in the box.
  for (std::size_t i = 200; i < 250; ++i) {
    CHECK(set.points[i].minCoeff() >= -1.0);
    CHECK(set.points[i].maxCoeff() <= 1.0);
  }
}

TEST_CASE("zero displacement noise lands labels on the surface") {
  const AnalyticShape t = AnalyticShape::torus(0.5, 0.15);
  Rng rng(3);
  const SampleSet set =
      sample_training_points(t, 300, 1, Vec3(-1, -1, -1), Vec3(1, 1, 1), 0.0, 0.0, rng);
  for (std::size_t i = 0; i + 1 < set.points.size(); ++i) CHECK(std::abs(set.sdf[i]) < 1e-12);
}

TEST_CASE("surface-biased labels concentrate within the noise scale") {
  const AnalyticShape s = AnalyticShape::sphere(0.3);
  Rng rng(5);
  const SampleSet set = sample_training_points(s, 4000, 1, Vec3(-1, -1, -1), Vec3(1, 1, 1),
                                               0.005, 0.05, rng);
  int tight = 0, loose = 0;
  for (int i = 0; i < 4000; ++i) {
    if (std::abs(set.sdf[i]) < 0.02) ++tight;
    if (std::abs(set.sdf[i]) > 0.25) ++loose;
  }
  // Half the points use the small sigma, so at least that many are tight;
  // essentially none land far from the surface.
  CHECK(tight >= 1800);
  CHECK(loose == 0);
}

TEST_CASE("training sampling is deterministic for a fixed seed") {
  const AnalyticShape s = AnalyticShape::sphere(0.25, Vec3(0.1, 0.1, 0.1));
  Rng a(99), b(99);
  const SampleSet sa = sample_training_points(s, 64, 16, Vec3(-1, -1, -1), Vec3(1, 1, 1),
                                              0.005, 0.05, a);
  const SampleSet sb = sample_training_points(s, 64, 16, Vec3(-1, -1, -1), Vec3(1, 1, 1),
                                              0.005, 0.05, b);
  REQUIRE(sa.points.size() == sb.points.size());
  for (std::size_t i = 0; i < sa.points.size(); ++i) {
    CHECK(sa.points[i] == sb.points[i]);
    CHECK(sa.sdf[i] == sb.sdf[i]);
  }
}
