#pragma once

#include <functional>
#include <vector>

#include "meshsdf/mesh.hpp"
#include "meshsdf/network.hpp"
#include "meshsdf/pipeline.hpp"

namespace meshsdf {

struct DragConfig {
  Vec3 flow_direction{1.0, 0.0, 0.0};
  double dynamic_pressure = 1.0;

  void validate() const;
};

struct ConstraintBox {
  Vec3 min_corner;
  Vec3 max_corner;
  double weight = 1.0;

  void validate() const;
};

struct RegularizerConfig {
  double alpha = 0.2;
  int k = 10;
  std::vector<VecXd> latent_table;

  void validate() const;
};

struct AdamConfig {
  double learning_rate = 0.02;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int iterations = 400;

  void validate() const;
};

struct FaceGeometry {
  Vec3 normal{0.0, 0.0, 1.0};  // unit; arbitrary for degenerate faces
  double area = 0.0;
  Vec3 centroid = Vec3::Zero();
};

std::vector<FaceGeometry> face_geometry(const TriMesh& mesh);

/// Newtonian windward pressure proxy: q * max(0, n . d)^2.
double newtonian_pressure(const Vec3& unit_normal, const DragConfig& cfg);

struct ValueGrad3 {
  double value = 0.0;
  std::vector<Vec3> grad;  // per vertex
};

/// Drag functional sum_f pressure(n_f) * (n_f . d) * area_f with the exact
/// vertex gradient through normals, areas and the pressure proxy. Leeward
/// faces contribute exactly zero value and gradient.
ValueGrad3 drag(const TriMesh& mesh, const DragConfig& cfg);

/// Same surface integral with a constant pressure instead of the proxy;
/// vanishes on closed meshes (the discrete divergence identity), which makes
/// it a mesh-orientation diagnostic.
ValueGrad3 drag_constant_pressure(const TriMesh& mesh, double pressure,
                                  const Vec3& flow_direction);

/// Soft keep-out-of-the-interior penalty: each box is probed on a fixed
/// 8x8x8 lattice of cell centers; a probe contributes weight * s^2 where
/// s = max(0, (probe - nearest vertex) . vertex_normal) is its signed
/// offset outside the surface (nearest-vertex test, area-weighted vertex
/// normals). Zero when the mesh encloses every probe. The gradient treats
/// the vertex normals as locally constant.
ValueGrad3 constraint_penalty(const TriMesh& mesh, const std::vector<ConstraintBox>& boxes);

struct ValueGradZ {
  double value = 0.0;
  VecXd grad;
};

/// alpha * mean_{k nearest table entries z'} ||z - z'||^2, gradient exact.
ValueGradZ latent_knn_regularizer(const VecXd& z, const RegularizerConfig& cfg);

using Objective = std::function<ValueGradZ(const VecXd&)>;

struct TrajectoryPoint {
  VecXd z;
  double value = 0.0;
};

struct OptimizeResult {
  std::vector<TrajectoryPoint> trajectory;  // iterate 0 is z0 itself
  VecXd best_z;
  double best_value = 0.0;
  int best_index = 0;
  bool aborted_non_finite = false;
};

/// Adam descent on the latent. Records every iterate and returns the one
/// with the smallest objective, which by construction is never worse than
/// the start. Stops early (flagged) if the objective or gradient turns
/// non-finite.
OptimizeResult optimize_latent(const Objective& objective, const VecXd& z0,
                               const AdamConfig& adam);

/// Per-evaluation breakdown of the drag objective, for run logs.
struct DragObjectiveParts {
  int iteration = 0;  // evaluation counter, starting at 0
  double total = 0.0;
  double drag = 0.0;
  double constraint = 0.0;
  double regularizer = 0.0;
  double grad_norm = 0.0;
  std::int64_t field_evaluations = 0;
  std::size_t vertex_count = 0;
};

/// Full drag objective over the latent: sparse-pipeline extraction, drag
/// plus constraint penalties pulled back through the surface, plus the
/// latent regularizer. Stateful (owns a LatentSurface), so evaluate
/// sequentially. A latent whose surface vanishes yields +infinity, which
/// optimize_latent treats as a non-finite stop. on_eval, when set, receives
/// the breakdown of every evaluation.
Objective assemble_drag_objective(const SdfNetwork& net, const PipelineConfig& pipeline,
                                  const DragConfig& drag_cfg,
                                  const std::vector<ConstraintBox>& boxes,
                                  const RegularizerConfig& reg_cfg,
                                  std::function<void(const DragObjectiveParts&)> on_eval = {});

}  // namespace meshsdf
