#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <string>
#include <vector>

#include "meshsdf/geometry.hpp"
#include "meshsdf/rng.hpp"

namespace meshsdf {

using VecXd = Eigen::VectorXd;
using MatXd = Eigen::MatrixXd;

/// Architecture of the latent-conditioned signed-distance network. The
/// network maps (x, z) to a scalar; hidden layers share one width and use
/// softplus, the output layer is linear. The layer at index skip_layer
/// (counting hidden layers from 0) additionally receives the raw (x, z)
/// input concatenated to the previous activation.
struct NetworkConfig {
  int latent_dim = 4;
  int hidden_width = 128;
  int hidden_layers = 4;
  int skip_layer = 2;  // -1 disables the skip concatenation
  std::string activation = "softplus";

  int input_dim() const { return 3 + latent_dim; }
  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
  /// Input width of hidden layer l (0-based).
  int layer_input_dim(int l) const;
};

/// Weight container shaped like a network; also reused for parameter
/// gradients and Adam moments.
struct Parameters {
  std::vector<MatXd> weights;  // weights[l] is (out x in)
  std::vector<VecXd> biases;

  static Parameters zeros_like(const NetworkConfig& config);
  void set_zero();
  void axpy(double alpha, const Parameters& other);  // this += alpha * other
  double squared_norm() const;
};

struct SdfNetwork {
  NetworkConfig config;
  Parameters params;

  /// Xavier-uniform weights, zero biases.
  static SdfNetwork xavier_init(const NetworkConfig& config, Rng& rng);

  int layer_count() const { return config.hidden_layers + 1; }
  std::int64_t parameter_count() const;
};

/// Scratch buffers for one point's forward and backward pass. Reusing one
/// workspace across calls avoids per-point allocation; a workspace sized for
/// one network must not be shared across threads.
struct NetworkWorkspace {
  std::vector<VecXd> inputs;  // per-layer input (after any skip concat)
  std::vector<VecXd> pre;     // per-hidden-layer pre-activation
  std::vector<VecXd> grad;    // backward buffers, one per layer input
  VecXd point;                // assembled (x, z)

  void resize(const NetworkConfig& config);
};

/// f(x, z). The per-point evaluation order is fixed, so identical inputs
/// produce bit-identical outputs no matter how calls are batched or
/// distributed over threads.
double forward(const SdfNetwork& net, const Vec3& x, const VecXd& z, NetworkWorkspace& ws);
double forward(const SdfNetwork& net, const Vec3& x, const VecXd& z);

struct InputGradient {
  double value = 0.0;
  Vec3 dx = Vec3::Zero();
  VecXd dz;
};

/// Value plus exact reverse-mode gradients with respect to x and z.
InputGradient input_gradient(const SdfNetwork& net, const Vec3& x, const VecXd& z,
                             NetworkWorkspace& ws);

/// Accumulates upstream * d f(x,z) / d theta into acc (exact reverse mode).
void accumulate_param_gradient(const SdfNetwork& net, const Vec3& x, const VecXd& z,
                               double upstream, NetworkWorkspace& ws, Parameters& acc);

/// Convenience wrapper returning a fresh parameter-shaped gradient.
Parameters param_gradient(const SdfNetwork& net, const Vec3& x, const VecXd& z);

/// Field closure for a fixed latent, suitable for grid sampling.
FieldFn field_for_latent(const SdfNetwork& net, VecXd z);

struct TrainConfig {
  int steps = 4000;
  int batch_size = 1024;
  double learning_rate = 1e-3;
  double lambda_reg = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int workers = 0;  // 0 = hardware default
};

struct TrainResult {
  SdfNetwork network;
  std::vector<VecXd> latents;      // one code per training shape
  std::vector<double> loss_trace;  // pre-update objective of each step's batch
};

/// Full-dataset objective: sum over shapes of mean |f(x, z_s) - sdf| plus
/// lambda_reg * sum ||z_s||^2.
double sdf_loss(const SdfNetwork& net, const std::vector<VecXd>& latents,
                const std::vector<SampleSet>& shapes, double lambda_reg);

/// Auto-decoder training: joint Adam over network parameters and one latent
/// code per shape (codes start at zero). Batches draw (shape, sample) pairs
/// uniformly; the regularizer applies to every code each step. Deterministic
/// for a fixed rng stream and independent of the worker count.
TrainResult train_sdf(const NetworkConfig& config, const std::vector<SampleSet>& shapes,
                      const TrainConfig& train, Rng& rng);

/// Checkpoint JSON: {"config": {...}, "layer_weights": [row-major per layer],
/// "layer_biases": [...], "latent_table": [...]}. Doubles are written as
/// shortest round-trip decimals.
void save_checkpoint(const SdfNetwork& net, const std::vector<VecXd>& latents,
                     std::ostream& out);
void save_checkpoint_file(const SdfNetwork& net, const std::vector<VecXd>& latents,
                          const std::string& path);

struct Checkpoint {
  SdfNetwork network;
  std::vector<VecXd> latents;
};

/// Throws std::runtime_error naming the offending entry on malformed input.
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint_file(const std::string& path);

}  // namespace meshsdf
