#include "meshsdf/diffiso.hpp"

#include <cmath>
#include <stdexcept>

#include "meshsdf/log.hpp"
#include "meshsdf/parallel.hpp"

namespace meshsdf {

namespace {

void check_upstream(const TriMesh& mesh, const std::vector<Vec3>& upstream) {
  if (upstream.size() != mesh.vertices.size()) {
    throw std::invalid_argument("backward pass: got " + std::to_string(upstream.size()) +
                                " upstream gradients for " +
                                std::to_string(mesh.vertices.size()) + " vertices");
  }
}

void finish_stats(GradNormStats& stats, double sum, std::size_t count) {
  if (count == 0) {
    stats = GradNormStats{};
    return;
  }
  stats.mean_norm = sum / static_cast<double>(count);
}

}  // namespace

VecXd backward_latent(const SdfNetwork& net, const VecXd& z, const TriMesh& mesh,
                      const std::vector<Vec3>& upstream, int workers, bool normalized,
                      GradNormStats* stats) {
  check_upstream(mesh, upstream);
  const int Z = net.config.latent_dim;

  std::vector<VecXd> slot_grad(kReductionSlots, VecXd::Zero(Z));
  std::vector<GradNormStats> slot_stats(
      kReductionSlots, GradNormStats{1e300, 0.0, 0.0});
  std::vector<std::int64_t> slot_count(kReductionSlots, 0);
  std::vector<NetworkWorkspace> slot_ws(kReductionSlots);

  parallel_for_slots(static_cast<std::int64_t>(mesh.vertices.size()), workers,
                     [&](int slot, std::int64_t begin, std::int64_t end) {
                       for (std::int64_t i = begin; i < end; ++i) {
                         const InputGradient g =
                             input_gradient(net, mesh.vertices[i], z, slot_ws[slot]);
                         const double norm = g.dx.norm();
                         slot_stats[slot].min_norm = std::min(slot_stats[slot].min_norm, norm);
                         slot_stats[slot].max_norm = std::max(slot_stats[slot].max_norm, norm);
                         slot_stats[slot].mean_norm += norm;
                         ++slot_count[slot];
                         Vec3 normal = g.dx;
                         if (normalized) {
                           if (norm < 1e-12) continue;
                           normal /= norm;
                         }
                         const double u = -upstream[i].dot(normal);
                         slot_grad[slot].noalias() += u * g.dz;
                       }
                     });

  VecXd grad = VecXd::Zero(Z);
  GradNormStats agg{1e300, 0.0, 0.0};
  std::int64_t count = 0;
  for (int s = 0; s < kReductionSlots; ++s) {
    grad += slot_grad[s];
    if (slot_count[s] > 0) {
      agg.min_norm = std::min(agg.min_norm, slot_stats[s].min_norm);
      agg.max_norm = std::max(agg.max_norm, slot_stats[s].max_norm);
      agg.mean_norm += slot_stats[s].mean_norm;
      count += slot_count[s];
    }
  }
  if (count == 0) agg.min_norm = 0.0;
  finish_stats(agg, agg.mean_norm, count);
  if (stats != nullptr) *stats = agg;
  log_line(2, "backward_latent: |grad_x f| in [" + std::to_string(agg.min_norm) + ", " +
                  std::to_string(agg.max_norm) + "], mean " + std::to_string(agg.mean_norm));
  return grad;
}

Parameters backward_params(const SdfNetwork& net, const VecXd& z, const TriMesh& mesh,
                           const std::vector<Vec3>& upstream, int workers, bool normalized,
                           GradNormStats* stats) {
  check_upstream(mesh, upstream);

  std::vector<Parameters> slot_grad(kReductionSlots, Parameters::zeros_like(net.config));
  std::vector<GradNormStats> slot_stats(kReductionSlots, GradNormStats{1e300, 0.0, 0.0});
  std::vector<std::int64_t> slot_count(kReductionSlots, 0);
  std::vector<NetworkWorkspace> slot_ws(kReductionSlots);

  parallel_for_slots(
      static_cast<std::int64_t>(mesh.vertices.size()), workers,
      [&](int slot, std::int64_t begin, std::int64_t end) {
        NetworkWorkspace& ws = slot_ws[slot];
        for (std::int64_t i = begin; i < end; ++i) {
          const InputGradient g = input_gradient(net, mesh.vertices[i], z, ws);
          const double norm = g.dx.norm();
          slot_stats[slot].min_norm = std::min(slot_stats[slot].min_norm, norm);
          slot_stats[slot].max_norm = std::max(slot_stats[slot].max_norm, norm);
          slot_stats[slot].mean_norm += norm;
          ++slot_count[slot];
          Vec3 normal = g.dx;
          if (normalized) {
            if (norm < 1e-12) continue;
            normal /= norm;
          }
          const double u = -upstream[i].dot(normal);
          if (u != 0.0) accumulate_param_gradient(net, mesh.vertices[i], z, u, ws, slot_grad[slot]);
        }
      });

  Parameters grad = Parameters::zeros_like(net.config);
  GradNormStats agg{1e300, 0.0, 0.0};
  std::int64_t count = 0;
  for (int s = 0; s < kReductionSlots; ++s) {
    grad.axpy(1.0, slot_grad[s]);
    if (slot_count[s] > 0) {
      agg.min_norm = std::min(agg.min_norm, slot_stats[s].min_norm);
      agg.max_norm = std::max(agg.max_norm, slot_stats[s].max_norm);
      agg.mean_norm += slot_stats[s].mean_norm;
      count += slot_count[s];
    }
  }
  if (count == 0) agg.min_norm = 0.0;
  finish_stats(agg, agg.mean_norm, count);
  if (stats != nullptr) *stats = agg;
  return grad;
}

DisplacementCheck theorem1_check(const FieldFn& evaluator, const Vec3& v, double eps,
                                 const PerturbationFn& perturbation) {
  const double at_v = evaluator(v);
  if (std::abs(at_v) >= 1e-9) {
    throw std::invalid_argument("theorem1_check: |evaluator(v)| = " + std::to_string(at_v) +
                                ", v must lie on the zero level set");
  }
  if (eps < 0.0) throw std::invalid_argument("theorem1_check: eps must be non-negative");

  // Outward normal by central differences; fields here are smooth at surface
  // points, so the O(step^2) direction error is far below the tolerances the
  // displacement is compared against.
  const double step = 1e-6;
  Vec3 n;
  for (int a = 0; a < 3; ++a) {
    Vec3 lo = v, hi = v;
    lo[a] -= step;
    hi[a] += step;
    n[a] = (evaluator(hi) - evaluator(lo)) / (2.0 * step);
  }
  const double n_norm = n.norm();
  if (n_norm < 1e-12) {
    throw std::runtime_error("theorem1_check: vanishing field gradient at v");
  }
  n /= n_norm;

  const double w_at_v = perturbation ? perturbation(v) : 1.0;
  DisplacementCheck result;
  result.predicted = eps * w_at_v * n;
  if (eps == 0.0) return result;

  // Decrementing the field by eps*w moves the zero level set to the points
  // where the old field equals eps*w; track that root along the normal ray.
  auto shifted = [&](double t) {
    const Vec3 p = v + t * n;
    const double w = perturbation ? perturbation(p) : 1.0;
    return evaluator(p) - eps * w;
  };

  double lo = 0.0;
  double f_lo = shifted(0.0);
  double hi = 4.0 * std::abs(eps * w_at_v) + 1e-9;
  double f_hi = shifted(hi);
  int expansions = 0;
  while (f_lo * f_hi > 0.0) {
    if (++expansions > 8) {
      throw std::runtime_error(
          "theorem1_check: no level-set crossing along the normal ray (perturbation too large)");
    }
    hi *= 2.0;
    f_hi = shifted(hi);
  }
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = shifted(mid);
    if ((f_lo <= 0.0) == (f_mid <= 0.0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
    }
  }
  result.observed = 0.5 * (lo + hi) * n;
  return result;
}

}  // namespace meshsdf
