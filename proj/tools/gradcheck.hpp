#pragma once

#include <json.hpp>

#include "meshsdf/network.hpp"
#include "run_config.hpp"

namespace meshsdf::cli {

struct GradcheckReport {
  nlohmann::ordered_json body;
  bool pass = false;
};

/// Finite-difference audit of every analytic gradient the pipeline exposes:
/// network input/latent/parameter gradients, the Chamfer gradient, the
/// rasterizer vertex gradient, the drag and latent-regularizer gradients,
/// and the latent pull-back through a full re-extraction. Deterministic for
/// a fixed (checkpoint, config, seed).
GradcheckReport run_gradcheck(const Checkpoint& ckpt, const RunConfig& cfg);

}  // namespace meshsdf::cli
