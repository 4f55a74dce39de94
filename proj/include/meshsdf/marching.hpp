#pragma once

#include <cstdint>

#include "meshsdf/geometry.hpp"
#include "meshsdf/mesh.hpp"

namespace meshsdf {

/// Vertex on the segment from gi (value si) to gj (value sj) at the zero
/// crossing of the linear interpolant: gi + si/(si - sj) * (gj - gi).
/// Requires strictly opposite signs; callers nudge exact zeros beforehand.
Vec3 interpolate_vertex(const Vec3& gi, const Vec3& gj, double si, double sj);

/// Zero iso-surface of the field as a triangle mesh. Exact zeros in the
/// field are treated as +1e-12 so every node has a definite sign. Vertices
/// on shared grid edges are emitted once; faces wind so right-hand normals
/// point toward the positive (outside) side. Triangles with area <= 1e-12
/// are dropped. Deterministic: same field, same mesh, bit for bit.
TriMesh marching_cubes(const ScalarField& field);

struct SparseResult {
  ScalarField field;
  std::int64_t evaluations = 0;  // nodes actually re-evaluated
};

/// Re-evaluates fn only at nodes whose previous value lies inside the band
/// |value| < tau, copying everything else. With a band wide enough to cover
/// the surface motion, marching_cubes on the result is bit-identical to a
/// dense re-sample. prev must be fully valid (bootstrap densely).
SparseResult sparse_resample(const ScalarField& prev, const FieldFn& fn, double tau,
                             int workers = 0);

/// 3 * h * band_factor: the band half-width used by the sparse pipeline.
double sparse_band(double spacing, double band_factor = 1.2);

}  // namespace meshsdf
