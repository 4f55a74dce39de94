#include "meshsdf/losses.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "meshsdf/parallel.hpp"
#include "meshsdf/rng.hpp"

namespace meshsdf {

namespace {

/// Exact nearest neighbor over a fixed cloud. Ties on distance resolve to
/// the smallest point index regardless of traversal order: candidates are
/// only pruned on strictly larger plane distance, and the running best only
/// improves on (d2, index) lexicographic order.
class KdTree3 {
 public:
  explicit KdTree3(const PointCloud& points) : points_(points) {
    if (points.empty()) throw std::invalid_argument("KdTree3: empty cloud");
    order_.resize(points.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(points.size());
    root_ = build(0, static_cast<int>(points.size()));
  }

  struct Hit {
    int index = -1;
    double d2 = 0.0;
  };

  Hit nearest(const Vec3& query) const {
    Hit best{-1, std::numeric_limits<double>::infinity()};
    search(root_, query, best);
    return best;
  }

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1;
    int right = -1;
  };

  int build(int begin, int end) {
    if (begin >= end) return -1;
    Vec3 lo = points_[order_[begin]];
    Vec3 hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) {
                       const double ca = points_[a][axis];
                       const double cb = points_[b][axis];
                       return ca < cb || (ca == cb && a < b);
                     });
    const int node_index = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{order_[mid], axis, -1, -1});
    const int left = build(begin, mid);
    const int right = build(mid + 1, end);
    nodes_[node_index].left = left;
    nodes_[node_index].right = right;
    return node_index;
  }

  void search(int node_index, const Vec3& query, Hit& best) const {
    if (node_index < 0) return;
    const Node& node = nodes_[node_index];
    const Vec3& p = points_[node.point];
    const double d2 = (query - p).squaredNorm();
    if (d2 < best.d2 || (d2 == best.d2 && node.point < best.index)) {
      best.d2 = d2;
      best.index = node.point;
    }
    const double delta = query[node.axis] - p[node.axis];
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    search(near, query, best);
    if (delta * delta <= best.d2) search(far, query, best);
  }

  const PointCloud& points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

void check_nonempty(const PointCloud& p, const PointCloud& q, const char* op) {
  if (p.empty() || q.empty()) {
    throw std::invalid_argument(std::string(op) + ": point clouds must be nonempty");
  }
}

/// Nearest hits of every `from` point in `to`, parallel with fixed slots.
std::vector<KdTree3::Hit> all_nearest(const PointCloud& from, const KdTree3& tree,
                                      int workers) {
  std::vector<KdTree3::Hit> hits(from.size());
  parallel_for_slots(static_cast<std::int64_t>(from.size()), workers,
                     [&](int, std::int64_t begin, std::int64_t end) {
                       for (std::int64_t i = begin; i < end; ++i) {
                         hits[i] = tree.nearest(from[i]);
                       }
                     });
  return hits;
}

}  // namespace

ChamferResult chamfer_l2(const PointCloud& p, const PointCloud& q, int workers) {
  check_nonempty(p, q, "chamfer_l2");
  const KdTree3 tree_q(q);
  const KdTree3 tree_p(p);
  const auto p_hits = all_nearest(p, tree_q, workers);
  const auto q_hits = all_nearest(q, tree_p, workers);

  ChamferResult result;
  result.grad.assign(p.size(), Vec3::Zero());
  const double wp = 1.0 / static_cast<double>(p.size());
  const double wq = 1.0 / static_cast<double>(q.size());
  double forward = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    forward += p_hits[i].d2;
    result.grad[i] += 2.0 * wp * (p[i] - q[p_hits[i].index]);
  }
  double backward = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j) {
    backward += q_hits[j].d2;
    result.grad[q_hits[j].index] += 2.0 * wq * (p[q_hits[j].index] - q[j]);
  }
  result.value = wp * forward + wq * backward;
  return result;
}

double chamfer_sqrt_l2(const PointCloud& p, const PointCloud& q, int workers) {
  check_nonempty(p, q, "chamfer_sqrt_l2");
  const KdTree3 tree_q(q);
  const KdTree3 tree_p(p);
  const auto p_hits = all_nearest(p, tree_q, workers);
  const auto q_hits = all_nearest(q, tree_p, workers);
  double forward = 0.0;
  for (const auto& h : p_hits) forward += std::sqrt(h.d2);
  double backward = 0.0;
  for (const auto& h : q_hits) backward += std::sqrt(h.d2);
  return forward / static_cast<double>(p.size()) + backward / static_cast<double>(q.size());
}

double emd_exact(const PointCloud& p, const PointCloud& q) {
  check_nonempty(p, q, "emd_exact");
  if (p.size() != q.size()) {
    throw std::invalid_argument("emd_exact: clouds must have equal size, got " +
                                std::to_string(p.size()) + " and " + std::to_string(q.size()));
  }
  if (p.size() > 256) {
    throw std::invalid_argument("emd_exact: exact assignment supports at most 256 points");
  }

  // Hungarian method with potentials, O(n^3); rows are P, columns are Q.
  const int n = static_cast<int>(p.size());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0);  // match[j]: row matched to column j; 1-based
  std::vector<double> min_to(n + 1);
  std::vector<int> prev(n + 1);
  std::vector<char> used(n + 1);

  auto cost = [&](int i, int j) { return (p[i - 1] - q[j - 1]).norm(); };

  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::fill(min_to.begin(), min_to.end(), kInf);
    std::fill(prev.begin(), prev.end(), -1);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = kInf;
      int j1 = -1;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < min_to[j]) {
          min_to[j] = cur;
          prev[j] = j0;
        }
        if (min_to[j] < delta) {
          delta = min_to[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          min_to[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    while (j0 != 0) {
      const int j1 = prev[j0];
      match[j0] = match[j1];
      j0 = j1;
    }
  }

  double total = 0.0;
  for (int j = 1; j <= n; ++j) total += cost(match[j], j);
  return total;
}

double fscore(const PointCloud& p, const PointCloud& q, double threshold) {
  check_nonempty(p, q, "fscore");
  if (!(threshold > 0.0)) throw std::invalid_argument("fscore: threshold must be positive");
  const KdTree3 tree_q(q);
  const KdTree3 tree_p(p);
  const double t2 = threshold * threshold;
  std::int64_t hit_p = 0;
  for (const auto& point : p) {
    if (tree_q.nearest(point).d2 <= t2) ++hit_p;
  }
  std::int64_t hit_q = 0;
  for (const auto& point : q) {
    if (tree_p.nearest(point).d2 <= t2) ++hit_q;
  }
  const double precision = 100.0 * static_cast<double>(hit_p) / static_cast<double>(p.size());
  const double recall = 100.0 * static_cast<double>(hit_q) / static_cast<double>(q.size());
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

namespace {

std::unordered_set<std::int64_t> occupied_voxels(const PointCloud& cloud, const Vec3& lo,
                                                 const Vec3& extent, int resolution) {
  std::unordered_set<std::int64_t> cells;
  cells.reserve(cloud.size());
  for (const auto& point : cloud) {
    std::int64_t idx = 0;
    for (int a = 0; a < 3; ++a) {
      int bin = 0;
      if (extent[a] > 0.0) {
        bin = static_cast<int>((point[a] - lo[a]) / extent[a] * resolution);
        bin = std::clamp(bin, 0, resolution - 1);
      }
      idx = idx * resolution + bin;
    }
    cells.insert(idx);
  }
  return cells;
}

}  // namespace

double surface_iou(const PointCloud& p, const PointCloud& q, int resolution) {
  check_nonempty(p, q, "surface_iou");
  if (resolution < 2) throw std::invalid_argument("surface_iou: resolution must be >= 2");
  Vec3 lo = p[0];
  Vec3 hi = p[0];
  for (const auto& point : p) {
    lo = lo.cwiseMin(point);
    hi = hi.cwiseMax(point);
  }
  for (const auto& point : q) {
    lo = lo.cwiseMin(point);
    hi = hi.cwiseMax(point);
  }
  const Vec3 extent = hi - lo;
  const auto cells_p = occupied_voxels(p, lo, extent, resolution);
  const auto cells_q = occupied_voxels(q, lo, extent, resolution);
  std::int64_t intersection = 0;
  for (std::int64_t c : cells_p) intersection += cells_q.count(c);
  const std::int64_t unions =
      static_cast<std::int64_t>(cells_p.size() + cells_q.size()) - intersection;
  return static_cast<double>(intersection) / static_cast<double>(unions);
}

PointCloud sample_mesh_points(const TriMesh& mesh, int n, SampleMode mode, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_mesh_points: n must be >= 1");
  if (mode == SampleMode::Vertices) {
    if (mesh.vertices.empty()) {
      throw std::invalid_argument("sample_mesh_points: mesh has no vertices");
    }
    return mesh.vertices;
  }

  if (mesh.faces.empty()) throw std::invalid_argument("sample_mesh_points: mesh has no faces");
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& face = mesh.faces[f];
    const Vec3& a = mesh.vertices[face[0]];
    const Vec3& b = mesh.vertices[face[1]];
    const Vec3& c = mesh.vertices[face[2]];
    total += 0.5 * (b - a).cross(c - a).norm();
    cumulative[f] = total;
  }
  if (!(total > 0.0)) {
    throw std::invalid_argument("sample_mesh_points: mesh has zero total area");
  }

  Rng rng(seed);
  PointCloud out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double pick = rng.uniform() * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    const std::size_t f = std::min<std::size_t>(it - cumulative.begin(), mesh.faces.size() - 1);
    const auto& face = mesh.faces[f];
    double r1 = rng.uniform();
    double r2 = rng.uniform();
    if (r1 + r2 > 1.0) {
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    const Vec3& a = mesh.vertices[face[0]];
    const Vec3& b = mesh.vertices[face[1]];
    const Vec3& c = mesh.vertices[face[2]];
    out.push_back(a + r1 * (b - a) + r2 * (c - a));
  }
  return out;
}

std::string to_json_line(const MetricReport& report) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  if (report.chamfer_l2) j["chamfer_l2"] = *report.chamfer_l2;
  if (report.chamfer_sqrt_l2) j["chamfer_sqrt_l2"] = *report.chamfer_sqrt_l2;
  if (report.emd) j["emd"] = *report.emd;
  if (report.fscore) j["fscore"] = *report.fscore;
  if (report.surface_iou) j["surface_iou"] = *report.surface_iou;
  return j.dump();
}

double fscore_threshold(const PointCloud& p, const PointCloud& q) {
  check_nonempty(p, q, "fscore_threshold");
  Vec3 lo = p[0];
  Vec3 hi = p[0];
  for (const auto& point : p) {
    lo = lo.cwiseMin(point);
    hi = hi.cwiseMax(point);
  }
  for (const auto& point : q) {
    lo = lo.cwiseMin(point);
    hi = hi.cwiseMax(point);
  }
  return 0.05 * (hi - lo).norm();
}

}  // namespace meshsdf
