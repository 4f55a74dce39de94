#include "meshsdf/pipeline.hpp"

#include <stdexcept>

#include "meshsdf/diffiso.hpp"
#include "meshsdf/log.hpp"

namespace meshsdf {

LatentSurface::LatentSurface(const SdfNetwork& net, PipelineConfig cfg)
    : net_(&net), cfg_(std::move(cfg)), tau_(sparse_band(cfg_.grid.spacing(), cfg_.band_factor)) {
  cfg_.grid.validate();
  net_->config.validate();
}

const TriMesh& LatentSurface::extract(const VecXd& z) {
  const FieldFn fn = field_for_latent(*net_, z);
  bool dense = !has_field_;
  if (!dense && cfg_.dense_refresh_step > 0.0 &&
      (z - z_last_dense_).norm() > cfg_.dense_refresh_step) {
    dense = true;
  }
  if (!dense && cfg_.dense_refresh_interval > 0 &&
      sparse_streak_ >= cfg_.dense_refresh_interval) {
    dense = true;
  }

  if (dense) {
    field_ = sample_field(fn, cfg_.grid, cfg_.workers);
    last_evaluations_ = cfg_.grid.node_count();
    z_last_dense_ = z;
    sparse_streak_ = 0;
  } else {
    SparseResult result = sparse_resample(field_, fn, tau_, cfg_.workers);
    field_ = std::move(result.field);
    last_evaluations_ = result.evaluations;
    ++sparse_streak_;
  }
  last_was_dense_ = dense;
  total_evaluations_ += last_evaluations_;
  has_field_ = true;

  mesh_ = marching_cubes(field_);
  z_ = z;
  has_mesh_ = true;
  log_line(2, std::string("extract: ") + (dense ? "dense" : "sparse") + ", " +
                  std::to_string(last_evaluations_) + " field evaluations, " +
                  std::to_string(mesh_.vertices.size()) + " vertices");
  return mesh_;
}

VecXd LatentSurface::backward(const std::vector<Vec3>& upstream) const {
  if (!has_mesh_) throw std::logic_error("LatentSurface::backward before extract");
  return backward_latent(*net_, z_, mesh_, upstream, cfg_.workers);
}

const TriMesh& LatentSurface::mesh() const {
  if (!has_mesh_) throw std::logic_error("LatentSurface::mesh before extract");
  return mesh_;
}

}  // namespace meshsdf
