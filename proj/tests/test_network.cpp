#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "meshsdf/geometry.hpp"
#include "meshsdf/network.hpp"

using namespace meshsdf;

namespace {

NetworkConfig tiny_config(int latent_dim = 2, int width = 4, int layers = 2, int skip = -1) {
  NetworkConfig c;
  c.latent_dim = latent_dim;
  c.hidden_width = width;
  c.hidden_layers = layers;
  c.skip_layer = skip;
  return c;
}

/// Network computing w . (x, z) + b exactly (to double rounding): a wide
/// softplus layer biased deep into its linear regime, bias subtracted at the
/// output. softplus(t + 40) - 40 differs from t by under 1e-17 for |t| < 2.
SdfNetwork near_linear_net(const VecXd& w, double b) {
  const int in = static_cast<int>(w.size());
  NetworkConfig cfg = tiny_config(in - 3, in, 1);
  SdfNetwork net;
  net.config = cfg;
  net.params = Parameters::zeros_like(cfg);
  for (int i = 0; i < in; ++i) {
    net.params.weights[0](i, i) = 1.0;
    net.params.biases[0][i] = 40.0;
  }
  for (int i = 0; i < in; ++i) net.params.weights[1](0, i) = w[i];
  net.params.biases[1][0] = b - 40.0 * w.sum();
  return net;
}

double fd_step(SdfNetwork& net, MatXd& mat, int r, int c, const Vec3& x, const VecXd& z,
               double step) {
  const double saved = mat(r, c);
  mat(r, c) = saved + step;
  const double hi = forward(net, x, z);
  mat(r, c) = saved - step;
  const double lo = forward(net, x, z);
  mat(r, c) = saved;
  return (hi - lo) / (2 * step);
}

}  // namespace

TEST_CASE("config validation rejects inconsistent architectures") {
  tiny_config().validate();
  CHECK_THROWS_AS(tiny_config(0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(tiny_config(2, 0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(tiny_config(2, 4, 0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(tiny_config(2, 4, 2, 5).validate(), std::invalid_argument);
  NetworkConfig bad = tiny_config();
  bad.activation = "relu";
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("skip layer widens exactly its own input") {
  const NetworkConfig c = tiny_config(3, 8, 4, 2);
  CHECK(c.input_dim() == 6);
  CHECK(c.layer_input_dim(0) == 6);
  CHECK(c.layer_input_dim(1) == 8);
  CHECK(c.layer_input_dim(2) == 8 + 6);
  CHECK(c.layer_input_dim(3) == 8);
}

TEST_CASE("zero weights reduce the network to its output bias") {
  const NetworkConfig cfg = tiny_config(2, 4, 3);
  SdfNetwork net;
  net.config = cfg;
  net.params = Parameters::zeros_like(cfg);
  net.params.biases.back()[0] = 0.125;
  const VecXd z = VecXd::Zero(2);
  CHECK(forward(net, Vec3(0.3, -0.7, 0.2), z) == 0.125);
  CHECK(forward(net, Vec3(0, 0, 0), VecXd::Ones(2)) == 0.125);
}

TEST_CASE("near-linear network reproduces its defining map and gradients") {
  VecXd w(5);
  w << 1.0, 0.0, 0.0, 0.0, 0.0;
  SdfNetwork net = near_linear_net(w, 0.0);
  const VecXd z = VecXd::Zero(2);
  NetworkWorkspace ws;
  ws.resize(net.config);

  CHECK(forward(net, Vec3(0.3, 0, 0), z) == doctest::Approx(0.3).epsilon(1e-12));
  InputGradient g = input_gradient(net, Vec3(0.3, 0, 0), z, ws);
  CHECK((g.dx - Vec3(1, 0, 0)).norm() < 1e-12);
  CHECK(g.dz.norm() < 1e-12);

  // A pure latent map exposes that latent slots follow the spatial slots.
  VecXd c(5);
  c << 0.0, 0.0, 0.0, 0.7, -0.4;
  SdfNetwork latent_net = near_linear_net(c, 0.0);
  VecXd z2(2);
  z2 << 0.5, 0.25;
  CHECK(forward(latent_net, Vec3(0.9, -0.9, 0.4), z2) ==
        doctest::Approx(0.7 * 0.5 - 0.4 * 0.25).epsilon(1e-10));
  g = input_gradient(latent_net, Vec3(0.1, 0.2, 0.3), z2, ws);
  CHECK(g.dx.norm() < 1e-12);
  CHECK(std::abs(g.dz[0] - 0.7) < 1e-12);
  CHECK(std::abs(g.dz[1] + 0.4) < 1e-12);
}

TEST_CASE("forward is pure and latent length is enforced") {
  Rng rng(1);
  SdfNetwork net = SdfNetwork::xavier_init(tiny_config(3, 8, 3, 1), rng);
  VecXd z(3);
  z << 0.1, -0.2, 0.3;
  const Vec3 x(0.4, 0.5, -0.6);
  const double a = forward(net, x, z);
  const double b = forward(net, x, z);
  CHECK(a == b);
  CHECK_THROWS_AS(forward(net, x, VecXd::Zero(2)), std::invalid_argument);
}

TEST_CASE("input gradients match central finite differences") {
  Rng rng(42);
  SdfNetwork net = SdfNetwork::xavier_init(tiny_config(4, 16, 3, 1), rng);
  NetworkWorkspace ws;
  ws.resize(net.config);
  const double step = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 x(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    VecXd z(4);
    for (int d = 0; d < 4; ++d) z[d] = rng.uniform(-1, 1);
    const InputGradient g = input_gradient(net, x, z, ws);
    CHECK(g.value == forward(net, x, z));

    Vec3 fdx;
    for (int d = 0; d < 3; ++d) {
      Vec3 hi = x, lo = x;
      hi[d] += step;
      lo[d] -= step;
      fdx[d] = (forward(net, hi, z) - forward(net, lo, z)) / (2 * step);
    }
    CHECK((fdx - g.dx).norm() / std::max(fdx.norm(), 1e-12) < 1e-5);

    VecXd fdz(4);
    for (int d = 0; d < 4; ++d) {
      VecXd hi = z, lo = z;
      hi[d] += step;
      lo[d] -= step;
      fdz[d] = (forward(net, x, hi) - forward(net, x, lo)) / (2 * step);
    }
    CHECK((fdz - g.dz).norm() / std::max(fdz.norm(), 1e-12) < 1e-5);
  }
}

TEST_CASE("parameter gradients match per-entry finite differences") {
  Rng rng(7);
  SdfNetwork net = SdfNetwork::xavier_init(tiny_config(2, 4, 2), rng);
  const Vec3 x(0.3, -0.5, 0.7);
  VecXd z(2);
  z << 0.4, -0.1;
  const Parameters g = param_gradient(net, x, z);
  const double step = 1e-5;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    for (int r = 0; r < g.weights[l].rows(); ++r) {
      for (int c = 0; c < g.weights[l].cols(); ++c) {
        const double fd = fd_step(net, net.params.weights[l], r, c, x, z, step);
        CHECK(std::abs(fd - g.weights[l](r, c)) <
              1e-5 * std::max({std::abs(fd), std::abs(g.weights[l](r, c)), 1e-6}));
      }
    }
    for (int r = 0; r < g.biases[l].size(); ++r) {
      const double saved = net.params.biases[l][r];
      net.params.biases[l][r] = saved + step;
      const double hi = forward(net, x, z);
      net.params.biases[l][r] = saved - step;
      const double lo = forward(net, x, z);
      net.params.biases[l][r] = saved;
      const double fd = (hi - lo) / (2 * step);
      CHECK(std::abs(fd - g.biases[l][r]) <
            1e-5 * std::max({std::abs(fd), std::abs(g.biases[l][r]), 1e-6}));
    }
  }
}

TEST_CASE("parameter gradient is linear in the upstream factor") {
  Rng rng(13);
  SdfNetwork net = SdfNetwork::xavier_init(tiny_config(2, 6, 2, 1), rng);
  NetworkWorkspace ws;
  ws.resize(net.config);
  const Vec3 x(0.2, 0.1, -0.3);
  VecXd z(2);
  z << -0.6, 0.2;

  Parameters zero = Parameters::zeros_like(net.config);
  accumulate_param_gradient(net, x, z, 0.0, ws, zero);
  CHECK(zero.squared_norm() == 0.0);

  Parameters g1 = Parameters::zeros_like(net.config);
  Parameters g2 = Parameters::zeros_like(net.config);
  accumulate_param_gradient(net, x, z, 1.0, ws, g1);
  accumulate_param_gradient(net, x, z, 2.0, ws, g2);
  for (std::size_t l = 0; l < g1.weights.size(); ++l) {
    CHECK((g2.weights[l] - 2.0 * g1.weights[l]).norm() == 0.0);
    CHECK((g2.biases[l] - 2.0 * g1.biases[l]).norm() == 0.0);
  }
}

TEST_CASE("xavier initialization is bounded, zero-biased, and seeded") {
  const NetworkConfig cfg = tiny_config(3, 16, 3, 1);
  Rng a(5), b(5), c(6);
  const SdfNetwork na = SdfNetwork::xavier_init(cfg, a);
  const SdfNetwork nb = SdfNetwork::xavier_init(cfg, b);
  const SdfNetwork nc = SdfNetwork::xavier_init(cfg, c);
  bool identical = true, differs = false;
  for (std::size_t l = 0; l < na.params.weights.size(); ++l) {
    const double limit =
        std::sqrt(6.0 / (na.params.weights[l].rows() + na.params.weights[l].cols()));
    CHECK(na.params.weights[l].cwiseAbs().maxCoeff() <= limit);
    CHECK(na.params.biases[l].norm() == 0.0);
    identical = identical && (na.params.weights[l] - nb.params.weights[l]).norm() == 0.0;
    differs = differs || (na.params.weights[l] - nc.params.weights[l]).norm() > 0.0;
  }
  CHECK(identical);
  CHECK(differs);
}

TEST_CASE("exact network at zero latents has zero loss") {
  const NetworkConfig cfg = tiny_config(2, 4, 2);
  SdfNetwork net;
  net.config = cfg;
  net.params = Parameters::zeros_like(cfg);
  net.params.biases.back()[0] = 0.25;  // f == 0.25 everywhere

  SampleSet set;
  for (int i = 0; i < 10; ++i) {
    set.points.push_back(Vec3(0.1 * i, 0, 0));
    set.sdf.push_back(0.25);
  }
  const std::vector<VecXd> latents = {VecXd::Zero(2)};
  CHECK(sdf_loss(net, latents, {set}, 1e-4) == 0.0);
}

TEST_CASE("training fits a small shape family") {
  std::vector<SampleSet> shapes;
  Rng data_rng(17);
  std::vector<AnalyticShape> family = {
      AnalyticShape::sphere(0.25), AnalyticShape::sphere(0.38),
      AnalyticShape::torus(0.45, 0.16), AnalyticShape::torus(0.55, 0.2)};
  for (const AnalyticShape& s : family) {
    Rng stream = data_rng.stream("shape-" + std::to_string(shapes.size()));
    shapes.push_back(sample_training_points(s, 4096, 1024, Vec3(-1, -1, -1), Vec3(1, 1, 1),
                                            0.005, 0.05, stream));
  }

  NetworkConfig cfg;
  cfg.latent_dim = 4;
  cfg.hidden_width = 64;
  cfg.hidden_layers = 4;
  cfg.skip_layer = 2;
  TrainConfig train;
  train.steps = 2000;
  train.batch_size = 1024;
  train.learning_rate = 1e-3;
  train.workers = 1;
  Rng rng(0);
  const TrainResult result = train_sdf(cfg, shapes, train, rng);

  REQUIRE(result.latents.size() == 4);
  REQUIRE(static_cast<int>(result.loss_trace.size()) == train.steps);
  for (double l : result.loss_trace) CHECK(std::isfinite(l));
  CHECK(result.loss_trace.back() < result.loss_trace.front());

  // Held-out accuracy against the analytic oracle. The bar is the best
  // constant predictor (the median of the held-out distances): a field that
  // actually learned the family beats it by a wide factor, one that ignores
  // the inputs or the latents cannot.
  NetworkWorkspace ws;
  ws.resize(cfg);
  double err = 0.0;
  std::vector<double> truth;
  for (std::size_t s = 0; s < family.size(); ++s) {
    Rng held = data_rng.stream("held-" + std::to_string(s));
    const SampleSet probe = sample_training_points(family[s], 512, 128, Vec3(-1, -1, -1),
                                                   Vec3(1, 1, 1), 0.005, 0.05, held);
    for (std::size_t i = 0; i < probe.points.size(); ++i) {
      err += std::abs(forward(result.network, probe.points[i], result.latents[s], ws) -
                      probe.sdf[i]);
      truth.push_back(probe.sdf[i]);
    }
  }
  err /= truth.size();
  std::nth_element(truth.begin(), truth.begin() + truth.size() / 2, truth.end());
  const double median = truth[truth.size() / 2];
  double baseline = 0.0;
  for (double t : truth) baseline += std::abs(t - median);
  baseline /= truth.size();
  CHECK(err < 0.4 * baseline);
  CHECK(err < 0.05);

  // The trained field's spatial gradient approximates the outward unit normal
  // on the first sphere's surface.
  const InputGradient g =
      input_gradient(result.network, Vec3(0.25, 0, 0), result.latents[0], ws);
  const double angle =
      std::acos(g.dx.normalized().dot(Vec3(1, 0, 0))) * 180.0 / 3.14159265358979323846;
  CHECK(angle < 5.0);
}

TEST_CASE("training aborts on divergence instead of returning garbage") {
  SampleSet set;
  Rng rng(3);
  for (int i = 0; i < 256; ++i) {
    const Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    set.points.push_back(p);
    set.sdf.push_back(p.norm() - 0.5);
  }
  TrainConfig train;
  train.steps = 200;
  train.batch_size = 64;
  // L1 gradients are bounded and Adam caps each move at roughly the learning
  // rate, so overflow needs the product across layers to pass 1e308: params
  // near 1e120 give activations ~1e120 -> ~1e240 -> inf at the output.
  train.learning_rate = 1e120;
  train.workers = 1;
  Rng seed(0);
  CHECK_THROWS_AS(train_sdf(tiny_config(2, 8, 2), {set}, train, seed), std::runtime_error);
}

TEST_CASE("checkpoints round-trip bit-exactly and reject malformed input") {
  Rng rng(21);
  SdfNetwork net = SdfNetwork::xavier_init(tiny_config(3, 8, 3, 1), rng);
  std::vector<VecXd> latents;
  for (int s = 0; s < 2; ++s) {
    VecXd z(3);
    for (int d = 0; d < 3; ++d) z[d] = rng.normal();
    latents.push_back(z);
  }

  std::stringstream buf;
  save_checkpoint(net, latents, buf);
  const Checkpoint ck = load_checkpoint(buf);
  CHECK(ck.network.config.hidden_width == 8);
  CHECK(ck.network.config.skip_layer == 1);
  REQUIRE(ck.latents.size() == 2);
  for (std::size_t l = 0; l < net.params.weights.size(); ++l) {
    CHECK((ck.network.params.weights[l] - net.params.weights[l]).norm() == 0.0);
    CHECK((ck.network.params.biases[l] - net.params.biases[l]).norm() == 0.0);
  }
  for (int s = 0; s < 2; ++s) CHECK((ck.latents[s] - latents[s]).norm() == 0.0);

  std::stringstream bad1("{\"config\": 3}");
  CHECK_THROWS_AS(load_checkpoint(bad1), std::runtime_error);
  std::stringstream bad2("not json at all");
  CHECK_THROWS_AS(load_checkpoint(bad2), std::runtime_error);

  // Truncated weight row: error message names the offending layer.
  std::stringstream buf2;
  save_checkpoint(net, latents, buf2);
  nlohmann::json doc = nlohmann::json::parse(buf2.str());
  doc["layer_weights"][0].erase(doc["layer_weights"][0].size() - 1);
  std::stringstream bad3(doc.dump());
  CHECK_THROWS_WITH_AS(load_checkpoint(bad3), doctest::Contains("layer_weights"),
                       std::runtime_error);

  // Latent of the wrong length is named by index.
  nlohmann::json doc2 = nlohmann::json::parse(buf2.str());
  doc2["latent_table"][1].push_back(0.0);
  std::stringstream bad4(doc2.dump());
  CHECK_THROWS_WITH_AS(load_checkpoint(bad4), doctest::Contains("latent_table[1]"),
                       std::runtime_error);
}
