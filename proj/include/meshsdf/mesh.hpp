#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "meshsdf/geometry.hpp"

namespace meshsdf {

/// Grid edge a vertex was interpolated on: linear node indices of the
/// non-negative and negative endpoints plus the interpolation parameter
/// toward the negative one. Empty for meshes that did not come from a grid.
struct VertexEdge {
  std::int64_t node_pos = -1;
  std::int64_t node_neg = -1;
  double t = 0.0;
};

/// Indexed triangle mesh. Faces wind counter-clockwise seen from outside
/// (right-hand normals point out of the enclosed volume).
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<VertexEdge> vertex_edges;  // one per vertex when grid-extracted

  bool empty() const { return faces.empty(); }
};

/// V - E + F over vertices referenced by faces. Requires a closed 2-manifold:
/// throws std::runtime_error listing offending edges when some edge is not
/// shared by exactly two faces.
int euler_characteristic(const TriMesh& mesh);

/// (2 - chi) / 2 for a closed orientable surface; use on one connected
/// component. Throws if chi is odd.
int genus(const TriMesh& mesh);

/// Face-connected component with the most faces, vertices reindexed.
TriMesh largest_component(const TriMesh& mesh);

/// Wavefront OBJ with positions printed to 9 significant digits.
void export_obj(const TriMesh& mesh, std::ostream& out);
void export_obj_file(const TriMesh& mesh, const std::string& path);

/// Reads v/f statements, ignores comments and other attributes; faces must
/// be triangles with 1-based indices (v, v/vt, v//vn forms). Throws
/// std::runtime_error with the line number on malformed input.
TriMesh import_obj(std::istream& in);
TriMesh import_obj_file(const std::string& path);

}  // namespace meshsdf
