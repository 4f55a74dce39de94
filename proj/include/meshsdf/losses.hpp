#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "meshsdf/geometry.hpp"
#include "meshsdf/mesh.hpp"

namespace meshsdf {

using PointCloud = std::vector<Vec3>;

struct ChamferResult {
  double value = 0.0;
  std::vector<Vec3> grad;  // d value / d P[i]
};

/// Two-sided squared-distance Chamfer with per-side mean normalization:
/// mean_p min_q ||p-q||^2 + mean_q min_p ||p-q||^2, with the gradient taken
/// on P through both terms. Nearest-neighbor ties break toward the smallest
/// index, so the gradient is deterministic.
ChamferResult chamfer_l2(const PointCloud& p, const PointCloud& q, int workers = 0);

/// Same two-sided mean with unsquared Euclidean distances. No gradient.
double chamfer_sqrt_l2(const PointCloud& p, const PointCloud& q, int workers = 0);

/// Exact earth mover's distance: minimum over bijections of the summed
/// Euclidean distances, by the Hungarian method. Requires |p| = |q| <= 256.
double emd_exact(const PointCloud& p, const PointCloud& q);

/// Harmonic mean of precision and recall (each the percentage of points
/// within `threshold` of the other cloud), in [0, 100].
double fscore(const PointCloud& p, const PointCloud& q, double threshold);

/// Occupancy IoU of the two clouds voxelized over their joint bounding box
/// at resolution^3 cells.
double surface_iou(const PointCloud& p, const PointCloud& q, int resolution);

enum class SampleMode {
  Vertices,      // the vertex list itself (n ignored); differentiable chain
  AreaWeighted,  // n points uniform by surface area, deterministic per seed
};

PointCloud sample_mesh_points(const TriMesh& mesh, int n, SampleMode mode, std::uint64_t seed);

/// One evaluation record; unset metrics are omitted from the JSON line.
struct MetricReport {
  std::optional<double> chamfer_l2;
  std::optional<double> chamfer_sqrt_l2;
  std::optional<double> emd;
  std::optional<double> fscore;
  std::optional<double> surface_iou;
};

/// Single-line JSON object, keys in the declaration order above.
std::string to_json_line(const MetricReport& report);

/// 5% of the diagonal of the joint axis-aligned bounding box: the distance
/// threshold convention used for F-score reporting.
double fscore_threshold(const PointCloud& p, const PointCloud& q);

}  // namespace meshsdf
