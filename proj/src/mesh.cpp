#include "meshsdf/mesh.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace meshsdf {

namespace {

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

}  // namespace

int euler_characteristic(const TriMesh& mesh) {
  std::unordered_map<std::uint64_t, int> edge_faces;
  std::vector<std::uint8_t> referenced(mesh.vertices.size(), 0);
  edge_faces.reserve(mesh.faces.size() * 2);
  for (const auto& f : mesh.faces) {
    for (int i = 0; i < 3; ++i) {
      const int a = f[i];
      const int b = f[(i + 1) % 3];
      if (a < 0 || b < 0 || a >= static_cast<int>(mesh.vertices.size()) ||
          b >= static_cast<int>(mesh.vertices.size())) {
        throw std::runtime_error("euler_characteristic: face references vertex out of range");
      }
      if (a == b) throw std::runtime_error("euler_characteristic: face repeats a vertex");
      referenced[a] = 1;
      ++edge_faces[edge_key(a, b)];
    }
  }

  std::string offenders;
  int offender_count = 0;
  for (const auto& [key, count] : edge_faces) {
    if (count != 2) {
      ++offender_count;
      if (offender_count <= 8) {
        const int a = static_cast<int>(key >> 32);
        const int b = static_cast<int>(key & 0xffffffffu);
        offenders += " (" + std::to_string(a) + "," + std::to_string(b) + ")x" +
                     std::to_string(count);
      }
    }
  }
  if (offender_count > 0) {
    throw std::runtime_error("euler_characteristic: " + std::to_string(offender_count) +
                             " non-manifold edge(s):" + offenders);
  }

  const std::int64_t v = std::count(referenced.begin(), referenced.end(), 1);
  const std::int64_t e = static_cast<std::int64_t>(edge_faces.size());
  const std::int64_t f = static_cast<std::int64_t>(mesh.faces.size());
  return static_cast<int>(v - e + f);
}

int genus(const TriMesh& mesh) {
  const int chi = euler_characteristic(mesh);
  if ((2 - chi) % 2 != 0) {
    throw std::runtime_error("genus: Euler characteristic " + std::to_string(chi) +
                             " is not of the form 2 - 2g");
  }
  return (2 - chi) / 2;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) {
    for (int i = 0; i < n; ++i) parent[i] = i;
  }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

TriMesh largest_component(const TriMesh& mesh) {
  if (mesh.faces.empty()) return TriMesh{};
  UnionFind uf(static_cast<int>(mesh.vertices.size()));
  for (const auto& f : mesh.faces) {
    uf.unite(f[0], f[1]);
    uf.unite(f[0], f[2]);
  }
  std::unordered_map<int, std::int64_t> face_count;
  for (const auto& f : mesh.faces) ++face_count[uf.find(f[0])];
  int best_root = -1;
  std::int64_t best = -1;
  for (const auto& [root, count] : face_count) {
    if (count > best || (count == best && root < best_root)) {
      best = count;
      best_root = root;
    }
  }

  TriMesh out;
  std::vector<int> remap(mesh.vertices.size(), -1);
  const bool has_edges = mesh.vertex_edges.size() == mesh.vertices.size();
  for (const auto& f : mesh.faces) {
    if (uf.find(f[0]) != best_root) continue;
    std::array<int, 3> nf{};
    for (int i = 0; i < 3; ++i) {
      int& m = remap[f[i]];
      if (m < 0) {
        m = static_cast<int>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[f[i]]);
        if (has_edges) out.vertex_edges.push_back(mesh.vertex_edges[f[i]]);
      }
      nf[i] = m;
    }
    out.faces.push_back(nf);
  }
  return out;
}

void export_obj(const TriMesh& mesh, std::ostream& out) {
  char line[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(line, sizeof line, "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
    out << line;
  }
  for (const auto& f : mesh.faces) {
    out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
  }
}

void export_obj_file(const TriMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open OBJ for writing: " + path);
  export_obj(mesh, out);
}

namespace {

int parse_obj_index(const std::string& token, std::size_t vertex_count, int line_no) {
  // Accept v, v/vt, v//vn, v/vt/vn; only the position index matters here.
  const std::size_t slash = token.find('/');
  const std::string head = slash == std::string::npos ? token : token.substr(0, slash);
  int idx = 0;
  try {
    idx = std::stoi(head);
  } catch (const std::exception&) {
    throw std::runtime_error("OBJ line " + std::to_string(line_no) + ": bad face index '" +
                             token + "'");
  }
  if (idx < 0) {
    // Relative (negative) indices count back from the current vertex list.
    idx = static_cast<int>(vertex_count) + idx + 1;
  }
  if (idx < 1 || idx > static_cast<int>(vertex_count)) {
    throw std::runtime_error("OBJ line " + std::to_string(line_no) + ": face index " + head +
                             " out of range (have " + std::to_string(vertex_count) +
                             " vertices)");
  }
  return idx - 1;
}

}  // namespace

TriMesh import_obj(std::istream& in) {
  TriMesh mesh;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ss >> v.x() >> v.y() >> v.z())) {
        throw std::runtime_error("OBJ line " + std::to_string(line_no) +
                                 ": vertex needs three coordinates");
      }
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<std::string> tokens;
      std::string tok;
      while (ss >> tok) tokens.push_back(tok);
      if (tokens.size() != 3) {
        throw std::runtime_error("OBJ line " + std::to_string(line_no) +
                                 ": only triangle faces are supported (got " +
                                 std::to_string(tokens.size()) + " indices)");
      }
      std::array<int, 3> f{};
      for (int i = 0; i < 3; ++i) {
        f[i] = parse_obj_index(tokens[i], mesh.vertices.size(), line_no);
      }
      mesh.faces.push_back(f);
    }
    // vn, vt, o, g, s, mtllib, usemtl and friends are ignored.
  }
  return mesh;
}

TriMesh import_obj_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open OBJ: " + path);
  return import_obj(in);
}

}  // namespace meshsdf
