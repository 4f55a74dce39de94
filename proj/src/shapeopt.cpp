#include "meshsdf/shapeopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <utility>

#include "meshsdf/diffiso.hpp"
#include "meshsdf/log.hpp"

namespace meshsdf {

void DragConfig::validate() const {
  if (!flow_direction.allFinite() || flow_direction.norm() < 1e-12) {
    throw std::invalid_argument("DragConfig: flow_direction must be a nonzero finite vector");
  }
  if (!(dynamic_pressure > 0.0) || !std::isfinite(dynamic_pressure)) {
    throw std::invalid_argument("DragConfig: dynamic_pressure must be positive and finite");
  }
}

void ConstraintBox::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (!(min_corner[a] < max_corner[a])) {
      throw std::invalid_argument("ConstraintBox: min_corner must be strictly below max_corner");
    }
  }
  if (!(weight >= 0.0) || !std::isfinite(weight)) {
    throw std::invalid_argument("ConstraintBox: weight must be non-negative and finite");
  }
}

void RegularizerConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("RegularizerConfig: alpha must be non-negative and finite");
  }
  if (k < 1) {
    throw std::invalid_argument("RegularizerConfig: k must be at least 1");
  }
}

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("AdamConfig: learning_rate must be positive and finite");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("AdamConfig: betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("AdamConfig: epsilon must be positive");
  }
  if (iterations < 0) {
    throw std::invalid_argument("AdamConfig: iterations must be non-negative");
  }
}

std::vector<FaceGeometry> face_geometry(const TriMesh& mesh) {
  std::vector<FaceGeometry> out(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& tri = mesh.faces[f];
    const Vec3& a = mesh.vertices[tri[0]];
    const Vec3& b = mesh.vertices[tri[1]];
    const Vec3& c = mesh.vertices[tri[2]];
    const Vec3 n = (b - a).cross(c - a);
    const double len = n.norm();
    FaceGeometry& g = out[f];
    g.area = 0.5 * len;
    g.normal = len > 1e-300 ? Vec3(n / len) : Vec3(0.0, 0.0, 1.0);
    g.centroid = (a + b + c) / 3.0;
  }
  return out;
}

double newtonian_pressure(const Vec3& unit_normal, const DragConfig& cfg) {
  const Vec3 d = cfg.flow_direction.normalized();
  const double u = std::max(0.0, unit_normal.dot(d));
  return cfg.dynamic_pressure * u * u;
}

namespace {

// Per-face drag in terms of the raw cross product N = (b-a) x (c-a):
//   F = (q/2) * max(0, N . d)^3 / ||N||^2
// equals pressure(n) * (n . d) * area with n = N/||N||, area = ||N||/2.
// dF/dN = (q/2) * (3 u^2 d / ||N||^2 - 2 u^3 N / ||N||^4), u = max(0, N . d),
// and w . dN/da = (b-c) x w, cyclically for b and c.
struct FaceDrag {
  double value = 0.0;
  Vec3 dF_dN = Vec3::Zero();
};

FaceDrag face_drag(const Vec3& raw_normal, const Vec3& unit_flow, double q) {
  FaceDrag out;
  const double norm2 = raw_normal.squaredNorm();
  if (norm2 < 1e-300) return out;
  const double u = raw_normal.dot(unit_flow);
  if (u <= 0.0) return out;
  const double half_q = 0.5 * q;
  out.value = half_q * u * u * u / norm2;
  out.dF_dN = half_q * (3.0 * u * u / norm2 * unit_flow
                        - 2.0 * u * u * u / (norm2 * norm2) * raw_normal);
  return out;
}

}  // namespace

ValueGrad3 drag(const TriMesh& mesh, const DragConfig& cfg) {
  cfg.validate();
  const Vec3 d = cfg.flow_direction.normalized();
  ValueGrad3 out;
  out.grad.assign(mesh.vertices.size(), Vec3::Zero());
  for (const auto& tri : mesh.faces) {
    const Vec3& a = mesh.vertices[tri[0]];
    const Vec3& b = mesh.vertices[tri[1]];
    const Vec3& c = mesh.vertices[tri[2]];
    const Vec3 n = (b - a).cross(c - a);
    const FaceDrag fd = face_drag(n, d, cfg.dynamic_pressure);
    if (fd.value == 0.0 && fd.dF_dN.isZero()) continue;
    out.value += fd.value;
    out.grad[tri[0]] += (b - c).cross(fd.dF_dN);
    out.grad[tri[1]] += (c - a).cross(fd.dF_dN);
    out.grad[tri[2]] += (a - b).cross(fd.dF_dN);
  }
  return out;
}

ValueGrad3 drag_constant_pressure(const TriMesh& mesh, double pressure,
                                  const Vec3& flow_direction) {
  if (flow_direction.norm() < 1e-12) {
    throw std::invalid_argument("drag_constant_pressure: flow_direction must be nonzero");
  }
  const Vec3 d = flow_direction.normalized();
  ValueGrad3 out;
  out.grad.assign(mesh.vertices.size(), Vec3::Zero());
  // F = p * (N . d) / 2 per face; over a closed mesh the N sum telescopes to 0.
  const Vec3 dF_dN = 0.5 * pressure * d;
  for (const auto& tri : mesh.faces) {
    const Vec3& a = mesh.vertices[tri[0]];
    const Vec3& b = mesh.vertices[tri[1]];
    const Vec3& c = mesh.vertices[tri[2]];
    const Vec3 n = (b - a).cross(c - a);
    out.value += 0.5 * pressure * n.dot(d);
    out.grad[tri[0]] += (b - c).cross(dF_dN);
    out.grad[tri[1]] += (c - a).cross(dF_dN);
    out.grad[tri[2]] += (a - b).cross(dF_dN);
  }
  return out;
}

namespace {

std::vector<Vec3> vertex_normals(const TriMesh& mesh) {
  std::vector<Vec3> normals(mesh.vertices.size(), Vec3::Zero());
  for (const auto& tri : mesh.faces) {
    const Vec3& a = mesh.vertices[tri[0]];
    const Vec3& b = mesh.vertices[tri[1]];
    const Vec3& c = mesh.vertices[tri[2]];
    const Vec3 n = (b - a).cross(c - a);  // area-weighted
    normals[tri[0]] += n;
    normals[tri[1]] += n;
    normals[tri[2]] += n;
  }
  for (auto& n : normals) {
    const double len = n.norm();
    n = len > 1e-300 ? Vec3(n / len) : Vec3(0.0, 0.0, 1.0);
  }
  return normals;
}

}  // namespace

ValueGrad3 constraint_penalty(const TriMesh& mesh, const std::vector<ConstraintBox>& boxes) {
  ValueGrad3 out;
  out.grad.assign(mesh.vertices.size(), Vec3::Zero());
  if (boxes.empty() || mesh.vertices.empty()) return out;

  const std::vector<Vec3> normals = vertex_normals(mesh);
  constexpr int kProbesPerAxis = 8;

  for (const auto& box : boxes) {
    box.validate();
    const Vec3 extent = box.max_corner - box.min_corner;
    for (int i = 0; i < kProbesPerAxis; ++i) {
      for (int j = 0; j < kProbesPerAxis; ++j) {
        for (int k = 0; k < kProbesPerAxis; ++k) {
          const Vec3 frac{(i + 0.5) / kProbesPerAxis, (j + 0.5) / kProbesPerAxis,
                          (k + 0.5) / kProbesPerAxis};
          const Vec3 p = box.min_corner + frac.cwiseProduct(extent);

          std::size_t best = 0;
          double best_d2 = std::numeric_limits<double>::infinity();
          for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
            const double d2 = (p - mesh.vertices[v]).squaredNorm();
            if (d2 < best_d2) {
              best_d2 = d2;
              best = v;
            }
          }

          const double s = (p - mesh.vertices[best]).dot(normals[best]);
          if (s <= 0.0) continue;  // probe is inside (or on) the surface
          out.value += box.weight * s * s;
          out.grad[best] += -2.0 * box.weight * s * normals[best];
        }
      }
    }
  }
  return out;
}

ValueGradZ latent_knn_regularizer(const VecXd& z, const RegularizerConfig& cfg) {
  cfg.validate();
  ValueGradZ out;
  out.grad = VecXd::Zero(z.size());
  if (cfg.latent_table.empty() || cfg.alpha == 0.0) return out;

  std::vector<std::pair<double, std::size_t>> dists;
  dists.reserve(cfg.latent_table.size());
  for (std::size_t i = 0; i < cfg.latent_table.size(); ++i) {
    if (cfg.latent_table[i].size() != z.size()) {
      throw std::invalid_argument("latent_knn_regularizer: table entry dimension mismatch");
    }
    dists.emplace_back((z - cfg.latent_table[i]).squaredNorm(), i);
  }
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.k), dists.size());
  std::partial_sort(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k), dists.end());

  const double scale = cfg.alpha / static_cast<double>(k);
  for (std::size_t i = 0; i < k; ++i) {
    const VecXd& zi = cfg.latent_table[dists[i].second];
    out.value += scale * dists[i].first;
    out.grad += 2.0 * scale * (z - zi);
  }
  return out;
}

OptimizeResult optimize_latent(const Objective& objective, const VecXd& z0,
                               const AdamConfig& adam) {
  adam.validate();
  OptimizeResult result;
  VecXd z = z0;
  VecXd m = VecXd::Zero(z0.size());
  VecXd v = VecXd::Zero(z0.size());

  ValueGradZ eval = objective(z);
  if (!std::isfinite(eval.value) || !eval.grad.allFinite()) {
    result.aborted_non_finite = true;
    result.best_z = z0;
    result.best_value = eval.value;
    return result;
  }
  result.trajectory.push_back({z, eval.value});
  result.best_z = z;
  result.best_value = eval.value;
  result.best_index = 0;

  for (int it = 1; it <= adam.iterations; ++it) {
    m = adam.beta1 * m + (1.0 - adam.beta1) * eval.grad;
    v = adam.beta2 * v + (1.0 - adam.beta2) * eval.grad.array().square().matrix();
    const double c1 = 1.0 - std::pow(adam.beta1, it);
    const double c2 = 1.0 - std::pow(adam.beta2, it);
    z.array() -= adam.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + adam.epsilon);

    eval = objective(z);
    if (!std::isfinite(eval.value) || !eval.grad.allFinite()) {
      result.aborted_non_finite = true;
      break;
    }
    result.trajectory.push_back({z, eval.value});
    if (eval.value < result.best_value) {
      result.best_value = eval.value;
      result.best_z = z;
      result.best_index = static_cast<int>(result.trajectory.size()) - 1;
    }
  }
  return result;
}

Objective assemble_drag_objective(const SdfNetwork& net, const PipelineConfig& pipeline,
                                  const DragConfig& drag_cfg,
                                  const std::vector<ConstraintBox>& boxes,
                                  const RegularizerConfig& reg_cfg,
                                  std::function<void(const DragObjectiveParts&)> on_eval) {
  drag_cfg.validate();
  reg_cfg.validate();
  for (const auto& box : boxes) box.validate();

  auto surface = std::make_shared<LatentSurface>(net, pipeline);
  auto counter = std::make_shared<int>(0);

  return [surface, counter, &net, drag_cfg, boxes, reg_cfg,
          on_eval = std::move(on_eval)](const VecXd& z) -> ValueGradZ {
    ValueGradZ out;
    out.grad = VecXd::Zero(z.size());
    const int iteration = (*counter)++;

    surface->extract(z);
    const TriMesh& mesh = surface->mesh();

    if (mesh.faces.empty()) {
      // Surface vanished for this latent; surface drag is undefined, so
      // report a non-finite objective and let the optimizer stop.
      out.value = std::numeric_limits<double>::infinity();
      log_line(1, "drag objective: empty surface, aborting");
      return out;
    }

    const ValueGrad3 d = drag(mesh, drag_cfg);
    const ValueGrad3 c = constraint_penalty(mesh, boxes);
    const ValueGradZ r = latent_knn_regularizer(z, reg_cfg);

    std::vector<Vec3> upstream(mesh.vertices.size());
    for (std::size_t i = 0; i < upstream.size(); ++i) upstream[i] = d.grad[i] + c.grad[i];

    out.value = d.value + c.value + r.value;
    out.grad = surface->backward(upstream) + r.grad;

    if (on_eval) {
      DragObjectiveParts parts;
      parts.iteration = iteration;
      parts.total = out.value;
      parts.drag = d.value;
      parts.constraint = c.value;
      parts.regularizer = r.value;
      parts.grad_norm = out.grad.norm();
      parts.field_evaluations = surface->last_evaluations();
      parts.vertex_count = mesh.vertices.size();
      on_eval(parts);
    }
    return out;
  };
}

}  // namespace meshsdf
