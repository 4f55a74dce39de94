#include "meshsdf/marching.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "meshsdf/parallel.hpp"
#include "mc_tables.hpp"

namespace meshsdf {

Vec3 interpolate_vertex(const Vec3& gi, const Vec3& gj, double si, double sj) {
  if (!(si > 0.0) == !(sj > 0.0)) {
    throw std::invalid_argument("interpolate_vertex: endpoint values must straddle zero");
  }
  const double t = si / (si - sj);
  return gi + t * (gj - gi);
}

namespace {

double nudged(double v) { return v == 0.0 ? 1e-12 : v; }

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

}  // namespace

TriMesh marching_cubes(const ScalarField& field) {
  field.grid.validate();
  if (field.values.size() != static_cast<std::size_t>(field.grid.node_count()) ||
      !field.all_valid()) {
    throw std::invalid_argument("marching_cubes: field must cover every grid node");
  }

  const Grid3D& grid = field.grid;
  const int n = grid.resolution;
  TriMesh mesh;
  // Keyed by 3 * (linear index of the lexicographically lower node) + axis.
  std::unordered_map<std::int64_t, int> edge_vertex;
  edge_vertex.reserve(static_cast<std::size_t>(8) * n * n);

  int corner_i[8], corner_j[8], corner_k[8];
  std::int64_t corner_idx[8];
  double corner_val[8];

  for (int k = 0; k + 1 < n; ++k) {
    for (int j = 0; j + 1 < n; ++j) {
      for (int i = 0; i + 1 < n; ++i) {
        static constexpr int kCornerOffset[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                                    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
        int config = 0;
        for (int c = 0; c < 8; ++c) {
          corner_i[c] = i + kCornerOffset[c][0];
          corner_j[c] = j + kCornerOffset[c][1];
          corner_k[c] = k + kCornerOffset[c][2];
          corner_idx[c] = grid.node_index(corner_i[c], corner_j[c], corner_k[c]);
          corner_val[c] = nudged(field.values[corner_idx[c]]);
          if (corner_val[c] < 0.0) config |= 1 << c;
        }
        if (config == 0 || config == 255) continue;

        int cell_vertex[12];
        const std::uint16_t edges = detail::kEdgeTable[config];
        for (int e = 0; e < 12; ++e) {
          if (!(edges & (1u << e))) continue;
          const int a = detail::kEdgeCorners[e][0];
          const int b = detail::kEdgeCorners[e][1];
          const std::int64_t na = corner_idx[a];
          const std::int64_t nb = corner_idx[b];
          int axis = 0;
          if (corner_j[a] != corner_j[b]) axis = 1;
          if (corner_k[a] != corner_k[b]) axis = 2;
          const std::int64_t key = 3 * std::min(na, nb) + axis;
          auto [it, inserted] = edge_vertex.try_emplace(key, -1);
          if (inserted) {
            // Orient the crossing from the non-negative node to the negative
            // one; the interpolation parameter is then t = s_pos/(s_pos-s_neg).
            const bool a_pos = corner_val[a] >= 0.0;
            const int cp = a_pos ? a : b;
            const int cn = a_pos ? b : a;
            const Vec3 gp = grid.node_position(corner_i[cp], corner_j[cp], corner_k[cp]);
            const Vec3 gn = grid.node_position(corner_i[cn], corner_j[cn], corner_k[cn]);
            it->second = static_cast<int>(mesh.vertices.size());
            mesh.vertices.push_back(
                interpolate_vertex(gp, gn, corner_val[cp], corner_val[cn]));
            mesh.vertex_edges.push_back(VertexEdge{
                corner_idx[cp], corner_idx[cn],
                corner_val[cp] / (corner_val[cp] - corner_val[cn])});
          }
          cell_vertex[e] = it->second;
        }

        const std::int8_t* row = detail::kTriangleTable[config];
        for (int m = 0; row[m] != -1; m += 3) {
          // Table order winds clockwise under this corner layout; swapping
          // the last two indices makes right-hand normals point outward.
          const int v0 = cell_vertex[static_cast<int>(row[m])];
          const int v1 = cell_vertex[static_cast<int>(row[m + 2])];
          const int v2 = cell_vertex[static_cast<int>(row[m + 1])];
          if (triangle_area(mesh.vertices[v0], mesh.vertices[v1], mesh.vertices[v2]) <= 1e-12) {
            continue;
          }
          mesh.faces.push_back({v0, v1, v2});
        }
      }
    }
  }
  return mesh;
}

double sparse_band(double spacing, double band_factor) { return 3.0 * spacing * band_factor; }

SparseResult sparse_resample(const ScalarField& prev, const FieldFn& fn, double tau,
                             int workers) {
  if (!(tau > 0.0)) throw std::invalid_argument("sparse_resample: tau must be positive");
  prev.grid.validate();
  if (prev.values.size() != static_cast<std::size_t>(prev.grid.node_count()) ||
      !prev.all_valid()) {
    throw std::invalid_argument("sparse_resample: previous field must cover every grid node");
  }

  SparseResult out;
  out.field = prev;
  const int n = prev.grid.resolution;
  std::int64_t slot_evals[kReductionSlots] = {};
  parallel_for_slots(prev.grid.node_count(), workers,
                     [&](int slot, std::int64_t begin, std::int64_t end) {
                       for (std::int64_t idx = begin; idx < end; ++idx) {
                         if (std::abs(prev.values[idx]) >= tau) continue;
                         const int i = static_cast<int>(idx % n);
                         const int j = static_cast<int>((idx / n) % n);
                         const int k =
                             static_cast<int>(idx / (static_cast<std::int64_t>(n) * n));
                         out.field.values[idx] = fn(prev.grid.node_position(i, j, k));
                         ++slot_evals[slot];
                       }
                     });
  for (std::int64_t e : slot_evals) out.evaluations += e;

  for (std::int64_t idx = 0; idx < prev.grid.node_count(); ++idx) {
    if (!std::isfinite(out.field.values[idx])) {
      throw std::runtime_error("sparse_resample: non-finite value at node " +
                               std::to_string(idx));
    }
  }
  return out;
}

}  // namespace meshsdf
