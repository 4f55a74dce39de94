#pragma once

#include <functional>
#include <vector>

#include "meshsdf/mesh.hpp"
#include "meshsdf/network.hpp"

namespace meshsdf {

/// Spatial-gradient statistics of one backward pass, recorded as a
/// diagnostic for how far the field is from unit-gradient.
struct GradNormStats {
  double min_norm = 0.0;
  double max_norm = 0.0;
  double mean_norm = 0.0;
};

/// Pulls per-vertex loss gradients back to the latent code: for each vertex
/// v, the surface moves along -grad_x f under a field increase, so the chain
/// is sum_v (dL/dv . -grad_x f(v, z)) * grad_z f(v, z). Uses the raw spatial
/// gradient; normalized=true rescales it to unit length (diagnostic mode),
/// skipping vertices with ||grad_x f|| < 1e-12. Worker-count independent.
VecXd backward_latent(const SdfNetwork& net, const VecXd& z, const TriMesh& mesh,
                      const std::vector<Vec3>& upstream, int workers = 0,
                      bool normalized = false, GradNormStats* stats = nullptr);

/// Same chain ending in the network parameters instead of the latent code.
Parameters backward_params(const SdfNetwork& net, const VecXd& z, const TriMesh& mesh,
                           const std::vector<Vec3>& upstream, int workers = 0,
                           bool normalized = false, GradNormStats* stats = nullptr);

struct DisplacementCheck {
  Vec3 predicted = Vec3::Zero();
  Vec3 observed = Vec3::Zero();
};

/// Spatially varying field perturbation weight; the checked perturbation is
/// a decrement of eps * w(x).
using PerturbationFn = std::function<double(const Vec3&)>;

/// First-order surface-motion check at a surface point v of the field
/// `evaluator`: decreasing the field by eps * w moves the surface point to
/// the root of evaluator(p) - eps * w(p) along the outward normal ray, found
/// by bisection to 1e-12. predicted = eps * w(v) * n(v); observed = root
/// displacement. With the default uniform w the remainder vanishes for exact
/// signed distance fields; non-uniform w exposes the O(eps^2) term.
DisplacementCheck theorem1_check(const FieldFn& evaluator, const Vec3& v, double eps,
                                 const PerturbationFn& perturbation = nullptr);

}  // namespace meshsdf
