#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <functional>
#include <vector>

#include "meshsdf/rng.hpp"

namespace meshsdf {

using Vec3 = Eigen::Vector3d;

/// Scalar field evaluated anywhere in space. Must be a pure function of the
/// position for sparse re-sampling to reproduce dense sampling bit for bit.
using FieldFn = std::function<double(const Vec3&)>;

/// Axis-aligned node lattice with `resolution` nodes per axis and identical
/// spacing on all three axes.
struct Grid3D {
  Vec3 min_corner{-1.0, -1.0, -1.0};
  Vec3 max_corner{1.0, 1.0, 1.0};
  int resolution = 2;

  static Grid3D cube(double half_extent, int resolution);

  /// Throws std::invalid_argument on resolution < 2, inverted corners, or
  /// anisotropic spacing.
  void validate() const;

  double spacing() const { return (max_corner.x() - min_corner.x()) / (resolution - 1); }
  std::int64_t node_count() const {
    const std::int64_t n = resolution;
    return n * n * n;
  }
  /// Linear index with x fastest: i + n*j + n*n*k.
  std::int64_t node_index(int i, int j, int k) const {
    const std::int64_t n = resolution;
    return i + n * (j + n * k);
  }
  Vec3 node_position(int i, int j, int k) const {
    const double h = spacing();
    return min_corner + h * Vec3(i, j, k);
  }
};

/// Grid plus one value per node. `valid` marks nodes whose value is usable;
/// both sampling paths produce fully valid fields.
struct ScalarField {
  Grid3D grid;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  bool all_valid() const;
};

/// Closed analytic shapes with exact signed distance (negative inside).
struct AnalyticShape {
  enum class Kind { Sphere, Torus };

  Kind kind = Kind::Sphere;
  Vec3 center{0.0, 0.0, 0.0};
  double radius = 0.5;        // sphere
  double major_radius = 0.5;  // torus: ring radius in the xy-plane
  double minor_radius = 0.15; // torus: tube radius

  static AnalyticShape sphere(double radius, const Vec3& center = Vec3::Zero());
  static AnalyticShape torus(double major_radius, double minor_radius,
                             const Vec3& center = Vec3::Zero());
};

double analytic_sdf(const AnalyticShape& shape, const Vec3& x);

/// Exact gradient of analytic_sdf; unit length away from the medial axis,
/// zero exactly on it.
Vec3 analytic_sdf_gradient(const AnalyticShape& shape, const Vec3& x);

/// Evaluates fn at every grid node. Throws std::runtime_error naming the
/// node if any value comes back non-finite. workers = 0 uses the hardware
/// default; results do not depend on the worker count.
ScalarField sample_field(const FieldFn& fn, const Grid3D& grid, int workers = 0);

/// Point set with signed-distance labels for one shape.
struct SampleSet {
  std::vector<Vec3> points;
  std::vector<double> sdf;
};

/// Training-data generator: n_surface points sampled uniformly by area on
/// the shape boundary and displaced by isotropic Gaussian noise (half with
/// sigma_near, half with sigma_far), plus n_uniform points uniform in the
/// box. Labels are exact signed distances of the final positions.
SampleSet sample_training_points(const AnalyticShape& shape, int n_surface, int n_uniform,
                                 const Vec3& box_min, const Vec3& box_max, double sigma_near,
                                 double sigma_far, Rng& rng);

}  // namespace meshsdf
