#pragma once

#include <cstdint>

#include "meshsdf/marching.hpp"
#include "meshsdf/network.hpp"

namespace meshsdf {

struct PipelineConfig {
  Grid3D grid;
  double band_factor = 1.2;  // band half-width = 3 * spacing * band_factor
  int workers = 0;
  /// Fall back to a dense re-sample when the latent has moved this far from
  /// the last dense one (the sparse band only tracks bounded per-step
  /// motion), or after this many consecutive sparse steps. 0 disables the
  /// respective trigger.
  double dense_refresh_step = 0.2;
  int dense_refresh_interval = 25;
};

/// Latent-to-mesh extraction with the sparse acceleration: the first call
/// samples the field densely, subsequent calls re-evaluate only the nodes
/// inside the surface band. Keeps the last field, mesh and latent so the
/// backward pass can run against exactly the geometry it extracted.
class LatentSurface {
 public:
  LatentSurface(const SdfNetwork& net, PipelineConfig cfg);

  const TriMesh& extract(const VecXd& z);

  /// Eq.-4 pull-back of per-vertex gradients onto the latent of the last
  /// extract() call.
  VecXd backward(const std::vector<Vec3>& upstream) const;

  const TriMesh& mesh() const;
  const VecXd& latent() const { return z_; }
  std::int64_t last_evaluations() const { return last_evaluations_; }
  std::int64_t total_evaluations() const { return total_evaluations_; }
  bool last_was_dense() const { return last_was_dense_; }
  /// Forces the next extract() to sample densely.
  void invalidate() { has_field_ = false; }

 private:
  const SdfNetwork* net_;
  PipelineConfig cfg_;
  double tau_;
  ScalarField field_;
  TriMesh mesh_;
  VecXd z_;
  VecXd z_last_dense_;
  bool has_field_ = false;
  bool has_mesh_ = false;
  bool last_was_dense_ = false;
  int sparse_streak_ = 0;
  std::int64_t last_evaluations_ = 0;
  std::int64_t total_evaluations_ = 0;
};

}  // namespace meshsdf
