#include "meshsdf/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "meshsdf/parallel.hpp"

namespace meshsdf {

Grid3D Grid3D::cube(double half_extent, int resolution) {
  Grid3D g;
  g.min_corner = Vec3::Constant(-half_extent);
  g.max_corner = Vec3::Constant(half_extent);
  g.resolution = resolution;
  g.validate();
  return g;
}

void Grid3D::validate() const {
  if (resolution < 2) {
    throw std::invalid_argument("Grid3D: resolution must be at least 2, got " +
                                std::to_string(resolution));
  }
  const Vec3 extent = max_corner - min_corner;
  if (!(extent.minCoeff() > 0.0)) {
    throw std::invalid_argument("Grid3D: max_corner must exceed min_corner on every axis");
  }
  const double h = extent.x() / (resolution - 1);
  for (int a = 1; a < 3; ++a) {
    const double ha = extent[a] / (resolution - 1);
    if (std::abs(ha - h) > 1e-9 * h) {
      throw std::invalid_argument("Grid3D: node spacing must match on all axes");
    }
  }
}

bool ScalarField::all_valid() const {
  if (valid.size() != values.size()) return false;
  for (std::uint8_t v : valid) {
    if (!v) return false;
  }
  return true;
}

AnalyticShape AnalyticShape::sphere(double radius, const Vec3& center) {
  if (!(radius > 0.0)) throw std::invalid_argument("sphere: radius must be positive");
  AnalyticShape s;
  s.kind = Kind::Sphere;
  s.radius = radius;
  s.center = center;
  return s;
}

AnalyticShape AnalyticShape::torus(double major_radius, double minor_radius, const Vec3& center) {
  if (!(major_radius > 0.0) || !(minor_radius > 0.0)) {
    throw std::invalid_argument("torus: radii must be positive");
  }
  if (!(minor_radius < major_radius)) {
    throw std::invalid_argument("torus: minor radius must be smaller than the ring radius");
  }
  AnalyticShape s;
  s.kind = Kind::Torus;
  s.major_radius = major_radius;
  s.minor_radius = minor_radius;
  s.center = center;
  return s;
}

double analytic_sdf(const AnalyticShape& shape, const Vec3& x) {
  const Vec3 p = x - shape.center;
  switch (shape.kind) {
    case AnalyticShape::Kind::Sphere:
      return p.norm() - shape.radius;
    case AnalyticShape::Kind::Torus: {
      const double ring = std::hypot(p.x(), p.y()) - shape.major_radius;
      return std::hypot(ring, p.z()) - shape.minor_radius;
    }
  }
  throw std::logic_error("analytic_sdf: unknown shape kind");
}

Vec3 analytic_sdf_gradient(const AnalyticShape& shape, const Vec3& x) {
  const Vec3 p = x - shape.center;
  switch (shape.kind) {
    case AnalyticShape::Kind::Sphere: {
      const double n = p.norm();
      if (n == 0.0) return Vec3::Zero();
      return p / n;
    }
    case AnalyticShape::Kind::Torus: {
      const double rho = std::hypot(p.x(), p.y());
      if (rho == 0.0) return Vec3::Zero();  // on the torus axis
      const double ring = rho - shape.major_radius;
      const double q = std::hypot(ring, p.z());
      if (q == 0.0) return Vec3::Zero();  // on the core circle
      Vec3 g;
      g.x() = ring / q * (p.x() / rho);
      g.y() = ring / q * (p.y() / rho);
      g.z() = p.z() / q;
      return g;
    }
  }
  throw std::logic_error("analytic_sdf_gradient: unknown shape kind");
}

ScalarField sample_field(const FieldFn& fn, const Grid3D& grid, int workers) {
  grid.validate();
  ScalarField field;
  field.grid = grid;
  field.values.resize(grid.node_count());
  field.valid.assign(grid.node_count(), 1);

  const int n = grid.resolution;
  parallel_for_slots(grid.node_count(), workers,
                     [&](int, std::int64_t begin, std::int64_t end) {
                       for (std::int64_t idx = begin; idx < end; ++idx) {
                         const int i = static_cast<int>(idx % n);
                         const int j = static_cast<int>((idx / n) % n);
                         const int k = static_cast<int>(idx / (static_cast<std::int64_t>(n) * n));
                         field.values[idx] = fn(grid.node_position(i, j, k));
                       }
                     });

  for (std::int64_t idx = 0; idx < grid.node_count(); ++idx) {
    if (!std::isfinite(field.values[idx])) {
      const int i = static_cast<int>(idx % n);
      const int j = static_cast<int>((idx / n) % n);
      const int k = static_cast<int>(idx / (static_cast<std::int64_t>(n) * n));
      throw std::runtime_error("sample_field: non-finite value at node (" + std::to_string(i) +
                               ", " + std::to_string(j) + ", " + std::to_string(k) + ")");
    }
  }
  return field;
}

namespace {

Vec3 surface_point(const AnalyticShape& shape, Rng& rng) {
  switch (shape.kind) {
    case AnalyticShape::Kind::Sphere: {
      // Uniform direction via normalized Gaussian triple.
      Vec3 d;
      do {
        d = Vec3(rng.normal(), rng.normal(), rng.normal());
      } while (d.norm() < 1e-12);
      return shape.center + shape.radius * d.normalized();
    }
    case AnalyticShape::Kind::Torus: {
      // Area element scales with R + r*cos(v); rejection keeps it uniform.
      const double R = shape.major_radius;
      const double r = shape.minor_radius;
      double u = 0.0, v = 0.0;
      for (;;) {
        u = rng.uniform(0.0, 2.0 * M_PI);
        v = rng.uniform(0.0, 2.0 * M_PI);
        const double accept = (R + r * std::cos(v)) / (R + r);
        if (rng.uniform() <= accept) break;
      }
      const double rho = R + r * std::cos(v);
      return shape.center + Vec3(rho * std::cos(u), rho * std::sin(u), r * std::sin(v));
    }
  }
  throw std::logic_error("surface_point: unknown shape kind");
}

}  // namespace

SampleSet sample_training_points(const AnalyticShape& shape, int n_surface, int n_uniform,
                                 const Vec3& box_min, const Vec3& box_max, double sigma_near,
                                 double sigma_far, Rng& rng) {
  if (n_surface < 0 || n_uniform < 0) {
    throw std::invalid_argument("sample_training_points: counts must be non-negative");
  }
  SampleSet set;
  set.points.reserve(n_surface + n_uniform);
  set.sdf.reserve(n_surface + n_uniform);

  for (int i = 0; i < n_surface; ++i) {
    const double sigma = (i % 2 == 0) ? sigma_near : sigma_far;
    Vec3 p = surface_point(shape, rng);
    p += sigma * Vec3(rng.normal(), rng.normal(), rng.normal());
    set.points.push_back(p);
    set.sdf.push_back(analytic_sdf(shape, p));
  }
  for (int i = 0; i < n_uniform; ++i) {
    Vec3 p;
    for (int a = 0; a < 3; ++a) p[a] = rng.uniform(box_min[a], box_max[a]);
    set.points.push_back(p);
    set.sdf.push_back(analytic_sdf(shape, p));
  }
  return set;
}

}  // namespace meshsdf
