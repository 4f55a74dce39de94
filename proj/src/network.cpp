#include "meshsdf/network.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "meshsdf/log.hpp"
#include "meshsdf/parallel.hpp"

namespace meshsdf {

namespace {

double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double sigmoid(double t) {
  if (t >= 0.0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

void NetworkConfig::validate() const {
  if (latent_dim < 1) throw std::invalid_argument("NetworkConfig: latent_dim must be >= 1");
  if (hidden_width < 1) throw std::invalid_argument("NetworkConfig: hidden_width must be >= 1");
  if (hidden_layers < 1) throw std::invalid_argument("NetworkConfig: hidden_layers must be >= 1");
  if (skip_layer != -1 && (skip_layer < 1 || skip_layer >= hidden_layers)) {
    throw std::invalid_argument(
        "NetworkConfig: skip_layer must be -1 or in [1, hidden_layers - 1]");
  }
  if (activation != "softplus") {
    throw std::invalid_argument("NetworkConfig: unsupported activation '" + activation + "'");
  }
}

int NetworkConfig::layer_input_dim(int l) const {
  if (l == 0) return input_dim();
  int dim = hidden_width;
  if (l == skip_layer) dim += input_dim();
  return dim;
}

Parameters Parameters::zeros_like(const NetworkConfig& config) {
  config.validate();
  Parameters p;
  const int layers = config.hidden_layers + 1;
  p.weights.resize(layers);
  p.biases.resize(layers);
  for (int l = 0; l < config.hidden_layers; ++l) {
    p.weights[l] = MatXd::Zero(config.hidden_width, config.layer_input_dim(l));
    p.biases[l] = VecXd::Zero(config.hidden_width);
  }
  p.weights[config.hidden_layers] = MatXd::Zero(1, config.hidden_width);
  p.biases[config.hidden_layers] = VecXd::Zero(1);
  return p;
}

void Parameters::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

void Parameters::axpy(double alpha, const Parameters& other) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l].noalias() += alpha * other.weights[l];
    biases[l].noalias() += alpha * other.biases[l];
  }
}

double Parameters::squared_norm() const {
  double s = 0.0;
  for (const auto& w : weights) s += w.squaredNorm();
  for (const auto& b : biases) s += b.squaredNorm();
  return s;
}

SdfNetwork SdfNetwork::xavier_init(const NetworkConfig& config, Rng& rng) {
  config.validate();
  SdfNetwork net;
  net.config = config;
  net.params = Parameters::zeros_like(config);
  for (std::size_t l = 0; l < net.params.weights.size(); ++l) {
    MatXd& w = net.params.weights[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        w(r, c) = rng.uniform(-bound, bound);
      }
    }
  }
  return net;
}

std::int64_t SdfNetwork::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& w : params.weights) n += w.size();
  for (const auto& b : params.biases) n += b.size();
  return n;
}

void NetworkWorkspace::resize(const NetworkConfig& config) {
  const int hidden = config.hidden_layers;
  inputs.resize(hidden + 1);
  grad.resize(hidden + 1);
  pre.resize(hidden);
  for (int l = 0; l < hidden; ++l) {
    inputs[l].resize(config.layer_input_dim(l));
    grad[l].resize(config.layer_input_dim(l));
    pre[l].resize(config.hidden_width);
  }
  inputs[hidden].resize(config.hidden_width);
  grad[hidden].resize(config.hidden_width);
  point.resize(config.input_dim());
}

namespace {

void ensure_workspace(const SdfNetwork& net, NetworkWorkspace& ws) {
  const int hidden = net.config.hidden_layers;
  if (ws.point.size() != net.config.input_dim() ||
      static_cast<int>(ws.inputs.size()) != hidden + 1 ||
      ws.inputs[hidden].size() != net.config.hidden_width ||
      ws.inputs[0].size() != net.config.layer_input_dim(0)) {
    ws.resize(net.config);
  }
}

double forward_into(const SdfNetwork& net, const Vec3& x, const VecXd& z, NetworkWorkspace& ws) {
  const NetworkConfig& cfg = net.config;
  if (z.size() != cfg.latent_dim) {
    throw std::invalid_argument("forward: latent has length " + std::to_string(z.size()) +
                                ", network expects " + std::to_string(cfg.latent_dim));
  }
  ensure_workspace(net, ws);
  ws.point.head<3>() = x;
  ws.point.tail(cfg.latent_dim) = z;

  const int hidden = cfg.hidden_layers;
  const int width = cfg.hidden_width;
  ws.inputs[0] = ws.point;
  for (int l = 0; l < hidden; ++l) {
    ws.pre[l].noalias() = net.params.weights[l] * ws.inputs[l];
    ws.pre[l] += net.params.biases[l];
    VecXd& next = ws.inputs[l + 1];
    for (int i = 0; i < width; ++i) next[i] = softplus(ws.pre[l][i]);
    if (l + 1 == cfg.skip_layer) next.tail(cfg.input_dim()) = ws.point;
  }
  return net.params.weights[hidden].row(0).dot(ws.inputs[hidden]) + net.params.biases[hidden][0];
}

/// Reverse pass over the state left in ws by forward_into. Scales everything
/// by upstream. When param_acc is set, accumulates d/d(weights, biases); when
/// point_grad is set, adds d/d(x, z) into it (size input_dim).
void backward_core(const SdfNetwork& net, NetworkWorkspace& ws, double upstream,
                   Parameters* param_acc, VecXd* point_grad) {
  const NetworkConfig& cfg = net.config;
  const int hidden = cfg.hidden_layers;
  const int width = cfg.hidden_width;

  if (param_acc != nullptr) {
    param_acc->weights[hidden].row(0).noalias() += upstream * ws.inputs[hidden].transpose();
    param_acc->biases[hidden][0] += upstream;
  }
  ws.grad[hidden] = upstream * net.params.weights[hidden].row(0).transpose();

  for (int l = hidden - 1; l >= 0; --l) {
    // Pre-activation gradient: the activation part of the next layer's input
    // gradient times softplus'. A skip concatenation routes the tail of that
    // gradient directly to the raw input.
    VecXd& g_next = ws.grad[l + 1];
    if (l + 1 == cfg.skip_layer && point_grad != nullptr) {
      point_grad->noalias() += g_next.tail(cfg.input_dim());
    }
    for (int i = 0; i < width; ++i) g_next[i] *= sigmoid(ws.pre[l][i]);
    const auto d_pre = g_next.head(width);
    if (param_acc != nullptr) {
      param_acc->weights[l].noalias() += d_pre * ws.inputs[l].transpose();
      param_acc->biases[l].noalias() += d_pre;
    }
    ws.grad[l].noalias() = net.params.weights[l].transpose() * d_pre;
  }
  if (point_grad != nullptr) point_grad->noalias() += ws.grad[0];
}

}  // namespace

double forward(const SdfNetwork& net, const Vec3& x, const VecXd& z, NetworkWorkspace& ws) {
  return forward_into(net, x, z, ws);
}

double forward(const SdfNetwork& net, const Vec3& x, const VecXd& z) {
  static thread_local NetworkWorkspace ws;
  return forward_into(net, x, z, ws);
}

InputGradient input_gradient(const SdfNetwork& net, const Vec3& x, const VecXd& z,
                             NetworkWorkspace& ws) {
  InputGradient out;
  out.value = forward_into(net, x, z, ws);
  VecXd point_grad = VecXd::Zero(net.config.input_dim());
  backward_core(net, ws, 1.0, nullptr, &point_grad);
  out.dx = point_grad.head<3>();
  out.dz = point_grad.tail(net.config.latent_dim);
  return out;
}

void accumulate_param_gradient(const SdfNetwork& net, const Vec3& x, const VecXd& z,
                               double upstream, NetworkWorkspace& ws, Parameters& acc) {
  forward_into(net, x, z, ws);
  backward_core(net, ws, upstream, &acc, nullptr);
}

Parameters param_gradient(const SdfNetwork& net, const Vec3& x, const VecXd& z) {
  Parameters acc = Parameters::zeros_like(net.config);
  NetworkWorkspace ws;
  accumulate_param_gradient(net, x, z, 1.0, ws, acc);
  return acc;
}

FieldFn field_for_latent(const SdfNetwork& net, VecXd z) {
  // The caller keeps the network alive for the closure's lifetime.
  const SdfNetwork* n = &net;
  return [n, z = std::move(z)](const Vec3& x) {
    static thread_local NetworkWorkspace ws;
    return forward_into(*n, x, z, ws);
  };
}

double sdf_loss(const SdfNetwork& net, const std::vector<VecXd>& latents,
                const std::vector<SampleSet>& shapes, double lambda_reg) {
  if (latents.size() != shapes.size()) {
    throw std::invalid_argument("sdf_loss: one latent per shape required");
  }
  double total = 0.0;
  NetworkWorkspace ws;
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    const SampleSet& set = shapes[s];
    if (set.points.empty()) throw std::invalid_argument("sdf_loss: empty sample set");
    double acc = 0.0;
    for (std::size_t i = 0; i < set.points.size(); ++i) {
      acc += std::abs(forward_into(net, set.points[i], latents[s], ws) - set.sdf[i]);
    }
    total += acc / static_cast<double>(set.points.size());
    total += lambda_reg * latents[s].squaredNorm();
  }
  return total;
}

namespace {

struct AdamScalars {
  double lr, beta1, beta2, epsilon;
  int t = 0;

  template <typename TP, typename TM, typename TV, typename TG>
  void apply(TP&& p, TM&& m, TV&& v, const TG& g) const {
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.array().square().matrix();
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon);
  }
};

}  // namespace

TrainResult train_sdf(const NetworkConfig& config, const std::vector<SampleSet>& shapes,
                      const TrainConfig& train, Rng& rng) {
  config.validate();
  if (shapes.empty()) throw std::invalid_argument("train_sdf: no training shapes");
  for (const auto& s : shapes) {
    if (s.points.size() != s.sdf.size() || s.points.empty()) {
      throw std::invalid_argument("train_sdf: malformed sample set");
    }
  }
  if (train.steps < 0 || train.batch_size < 1) {
    throw std::invalid_argument("train_sdf: steps must be >= 0 and batch_size >= 1");
  }

  const int S = static_cast<int>(shapes.size());
  const int Z = config.latent_dim;
  Rng init_rng = rng.stream("xavier-init");
  Rng batch_rng = rng.stream("batch-sampler");

  TrainResult result;
  result.network = SdfNetwork::xavier_init(config, init_rng);
  result.latents.assign(S, VecXd::Zero(Z));
  result.loss_trace.reserve(train.steps);

  SdfNetwork& net = result.network;
  AdamScalars adam{train.learning_rate, train.adam_beta1, train.adam_beta2, train.adam_epsilon};
  Parameters m = Parameters::zeros_like(config);
  Parameters v = Parameters::zeros_like(config);
  MatXd zm = MatXd::Zero(Z, S);
  MatXd zv = MatXd::Zero(Z, S);

  Parameters grad = Parameters::zeros_like(config);
  std::vector<Parameters> slot_grads(kReductionSlots, Parameters::zeros_like(config));
  std::vector<MatXd> slot_zgrads(kReductionSlots, MatXd::Zero(Z, S));
  std::vector<double> slot_loss(kReductionSlots, 0.0);
  std::vector<NetworkWorkspace> slot_ws(kReductionSlots);
  std::vector<VecXd> slot_point(kReductionSlots, VecXd::Zero(config.input_dim()));

  const int B = train.batch_size;
  std::vector<int> batch_shape(B);
  std::vector<int> batch_index(B);

  for (int step = 0; step < train.steps; ++step) {
    for (int b = 0; b < B; ++b) {
      batch_shape[b] = batch_rng.uniform_int(0, S - 1);
      batch_index[b] =
          batch_rng.uniform_int(0, static_cast<int>(shapes[batch_shape[b]].points.size()) - 1);
    }
    for (int s = 0; s < kReductionSlots; ++s) {
      slot_grads[s].set_zero();
      slot_zgrads[s].setZero();
      slot_loss[s] = 0.0;
    }

    parallel_for_slots(B, train.workers, [&](int slot, std::int64_t begin, std::int64_t end) {
      NetworkWorkspace& ws = slot_ws[slot];
      VecXd& pgrad = slot_point[slot];
      for (std::int64_t b = begin; b < end; ++b) {
        const int s = batch_shape[b];
        const SampleSet& set = shapes[s];
        const Vec3& x = set.points[batch_index[b]];
        const double f = forward_into(net, x, result.latents[s], ws);
        const double r = f - set.sdf[batch_index[b]];
        slot_loss[slot] += std::abs(r);
        const double upstream = (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) / B;
        pgrad.setZero();
        backward_core(net, ws, upstream, &slot_grads[slot], &pgrad);
        slot_zgrads[slot].col(s) += pgrad.tail(Z);
      }
    });

    grad.set_zero();
    MatXd zgrad = MatXd::Zero(Z, S);
    double data_loss = 0.0;
    for (int s = 0; s < kReductionSlots; ++s) {
      grad.axpy(1.0, slot_grads[s]);
      zgrad += slot_zgrads[s];
      data_loss += slot_loss[s];
    }
    data_loss /= B;

    double reg = 0.0;
    for (int s = 0; s < S; ++s) {
      reg += result.latents[s].squaredNorm();
      zgrad.col(s) += 2.0 * train.lambda_reg * result.latents[s];
    }
    result.loss_trace.push_back(data_loss + train.lambda_reg * reg);
    if (!std::isfinite(result.loss_trace.back())) {
      throw std::runtime_error("train_sdf: non-finite loss at step " + std::to_string(step + 1) +
                               "; try a smaller learning rate");
    }

    adam.t = step + 1;
    for (std::size_t l = 0; l < net.params.weights.size(); ++l) {
      adam.apply(net.params.weights[l], m.weights[l], v.weights[l], grad.weights[l]);
      adam.apply(net.params.biases[l], m.biases[l], v.biases[l], grad.biases[l]);
    }
    for (int s = 0; s < S; ++s) {
      adam.apply(result.latents[s], zm.col(s), zv.col(s), zgrad.col(s));
    }

    if (log_level() >= 2 || (log_level() >= 1 && (step + 1) % 500 == 0)) {
      log_line(1, "train step " + std::to_string(step + 1) + "/" + std::to_string(train.steps) +
                      " loss " + std::to_string(result.loss_trace.back()));
    }
  }
  return result;
}

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json flatten_row_major(const MatXd& m) {
  ordered_json arr = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) arr.push_back(m(r, c));
  }
  return arr;
}

}  // namespace

void save_checkpoint(const SdfNetwork& net, const std::vector<VecXd>& latents,
                     std::ostream& out) {
  ordered_json j;
  j["config"] = {{"latent_dim", net.config.latent_dim},
                 {"hidden_width", net.config.hidden_width},
                 {"hidden_layers", net.config.hidden_layers},
                 {"skip_layer", net.config.skip_layer},
                 {"activation", net.config.activation}};
  ordered_json weights = ordered_json::array();
  ordered_json biases = ordered_json::array();
  for (std::size_t l = 0; l < net.params.weights.size(); ++l) {
    weights.push_back(flatten_row_major(net.params.weights[l]));
    ordered_json b = ordered_json::array();
    for (Eigen::Index i = 0; i < net.params.biases[l].size(); ++i) {
      b.push_back(net.params.biases[l][i]);
    }
    biases.push_back(b);
  }
  j["layer_weights"] = weights;
  j["layer_biases"] = biases;
  ordered_json table = ordered_json::array();
  for (const auto& z : latents) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index i = 0; i < z.size(); ++i) row.push_back(z[i]);
    table.push_back(row);
  }
  j["latent_table"] = table;
  out << j.dump(2) << "\n";
}

void save_checkpoint_file(const SdfNetwork& net, const std::vector<VecXd>& latents,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  save_checkpoint(net, latents, out);
}

Checkpoint load_checkpoint(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: invalid JSON: ") + e.what());
  }

  auto require = [&](const nlohmann::json& obj, const char* key) -> const nlohmann::json& {
    auto it = obj.find(key);
    if (it == obj.end()) {
      throw std::runtime_error(std::string("checkpoint: missing field '") + key + "'");
    }
    return *it;
  };

  Checkpoint ck;
  const auto& cfg = require(j, "config");
  NetworkConfig& config = ck.network.config;
  try {
    config.latent_dim = require(cfg, "latent_dim").get<int>();
    config.hidden_width = require(cfg, "hidden_width").get<int>();
    config.hidden_layers = require(cfg, "hidden_layers").get<int>();
    config.skip_layer = require(cfg, "skip_layer").get<int>();
    config.activation = require(cfg, "activation").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: malformed config: ") + e.what());
  }
  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("checkpoint: ") + e.what());
  }

  ck.network.params = Parameters::zeros_like(config);
  const auto& weights = require(j, "layer_weights");
  const auto& biases = require(j, "layer_biases");
  const std::size_t layers = ck.network.params.weights.size();
  if (!weights.is_array() || weights.size() != layers) {
    throw std::runtime_error("checkpoint: layer_weights must list " + std::to_string(layers) +
                             " layers");
  }
  if (!biases.is_array() || biases.size() != layers) {
    throw std::runtime_error("checkpoint: layer_biases must list " + std::to_string(layers) +
                             " layers");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    MatXd& w = ck.network.params.weights[l];
    const auto& wl = weights[l];
    if (!wl.is_array() || wl.size() != static_cast<std::size_t>(w.size())) {
      throw std::runtime_error("checkpoint: layer_weights[" + std::to_string(l) + "] must hold " +
                               std::to_string(w.size()) + " values");
    }
    std::size_t idx = 0;
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = wl[idx++].get<double>();
    }
    VecXd& b = ck.network.params.biases[l];
    const auto& bl = biases[l];
    if (!bl.is_array() || bl.size() != static_cast<std::size_t>(b.size())) {
      throw std::runtime_error("checkpoint: layer_biases[" + std::to_string(l) + "] must hold " +
                               std::to_string(b.size()) + " values");
    }
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = bl[i].get<double>();
  }

  const auto& table = require(j, "latent_table");
  if (!table.is_array()) throw std::runtime_error("checkpoint: latent_table must be an array");
  for (std::size_t s = 0; s < table.size(); ++s) {
    const auto& row = table[s];
    if (!row.is_array() || row.size() != static_cast<std::size_t>(config.latent_dim)) {
      throw std::runtime_error("checkpoint: latent_table[" + std::to_string(s) + "] must hold " +
                               std::to_string(config.latent_dim) + " values");
    }
    VecXd z(config.latent_dim);
    for (int i = 0; i < config.latent_dim; ++i) z[i] = row[i].get<double>();
    ck.latents.push_back(std::move(z));
  }
  return ck;
}

Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  return load_checkpoint(in);
}

}  // namespace meshsdf
