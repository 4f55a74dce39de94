#include "meshsdf/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "meshsdf/parallel.hpp"

namespace meshsdf {

void Camera::validate() const {
  if ((eye - look_at).norm() < 1e-12) {
    throw std::invalid_argument("Camera: eye and look_at coincide");
  }
  if (!(vertical_fov > 0.0) || !(vertical_fov < M_PI)) {
    throw std::invalid_argument("Camera: vertical_fov must lie in (0, pi)");
  }
  if (width < 1 || height < 1) {
    throw std::invalid_argument("Camera: width and height must be >= 1");
  }
  const Vec3 forward = (look_at - eye).normalized();
  if (forward.cross(up).norm() < 1e-12) {
    throw std::invalid_argument("Camera: up vector is parallel to the view direction");
  }
}

namespace {

struct CameraFrame {
  Vec3 right, up, forward;
  double tan_half;
  double aspect;
  int width, height;

  explicit CameraFrame(const Camera& c) {
    c.validate();
    forward = (c.look_at - c.eye).normalized();
    right = forward.cross(c.up).normalized();
    up = right.cross(forward);
    tan_half = std::tan(0.5 * c.vertical_fov);
    aspect = static_cast<double>(c.width) / c.height;
    width = c.width;
    height = c.height;
  }

  /// Isotropic normalized device coords: y spans [-1, 1] over the vertical
  /// field of view, x spans [-aspect, aspect]; distances are comparable on
  /// both axes, which is what sigma is calibrated in.
  bool to_ndc(const Vec3& eye, const Vec3& v, Eigen::Vector2d& ndc,
              Eigen::Matrix<double, 2, 3>* jac) const {
    const Vec3 d = v - eye;
    const double xc = d.dot(right);
    const double yc = d.dot(up);
    const double zc = d.dot(forward);
    if (zc <= 1e-12) return false;
    const double inv = 1.0 / (zc * tan_half);
    ndc.x() = xc * inv;
    ndc.y() = yc * inv;
    if (jac != nullptr) {
      // d(xc/zc)/dv = (right*zc - xc*forward)/zc^2, all divided by tan_half.
      jac->row(0) = (right * zc - xc * forward).transpose() * (inv / zc);
      jac->row(1) = (up * zc - yc * forward).transpose() * (inv / zc);
    }
    return true;
  }

  Eigen::Vector2d ndc_to_pixel(const Eigen::Vector2d& ndc) const {
    return {(ndc.x() / aspect + 1.0) * 0.5 * width, (1.0 - ndc.y()) * 0.5 * height};
  }

  Eigen::Vector2d pixel_center_to_ndc(int px, int py) const {
    const double x = (2.0 * (px + 0.5) / width - 1.0) * aspect;
    const double y = 1.0 - 2.0 * (py + 0.5) / height;
    return {x, y};
  }
};

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

struct TriangleNdc {
  Eigen::Vector2d v[3];
  Eigen::Matrix<double, 2, 3> jac[3];
  int vertex_index[3];
  int x0, x1, y0, y1;  // inclusive pixel bounds
};

/// Squared distance from point p to the projected triangle plus everything
/// the backward pass needs: the argmin edge and the parameter along it.
struct EdgeDistance {
  double d2 = 0.0;
  double sign = -1.0;
  int edge = 0;     // argmin edge, ties to the lowest index
  double t = 0.0;   // closest point = a + t * (b - a) on that edge
  Eigen::Vector2d delta = Eigen::Vector2d::Zero();  // p - closest
};

EdgeDistance point_triangle_distance(const Eigen::Vector2d& p, const TriangleNdc& tri) {
  EdgeDistance best;
  best.d2 = std::numeric_limits<double>::infinity();
  double cross_sign[3];
  for (int e = 0; e < 3; ++e) {
    const Eigen::Vector2d& a = tri.v[e];
    const Eigen::Vector2d& b = tri.v[(e + 1) % 3];
    const Eigen::Vector2d edge = b - a;
    const Eigen::Vector2d q = p - a;
    cross_sign[e] = edge.x() * q.y() - edge.y() * q.x();
    const double len2 = edge.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp(q.dot(edge) / len2, 0.0, 1.0) : 0.0;
    const Eigen::Vector2d delta = q - t * edge;
    const double d2 = delta.squaredNorm();
    if (d2 < best.d2) {
      best.d2 = d2;
      best.edge = e;
      best.t = t;
      best.delta = delta;
    }
  }
  const double area2 = (tri.v[1] - tri.v[0]).x() * (tri.v[2] - tri.v[0]).y() -
                       (tri.v[1] - tri.v[0]).y() * (tri.v[2] - tri.v[0]).x();
  if (area2 != 0.0) {
    const double s = area2 > 0.0 ? 1.0 : -1.0;
    if (cross_sign[0] * s >= 0.0 && cross_sign[1] * s >= 0.0 && cross_sign[2] * s >= 0.0) {
      best.sign = 1.0;
    }
  }
  return best;
}

struct RasterScene {
  std::vector<TriangleNdc> triangles;
  // Per pixel: indices into `triangles`, ascending (insertion follows the
  // fixed triangle order), so per-pixel products have a fixed factor order.
  std::vector<std::vector<int>> buckets;
};

RasterScene build_scene(const TriMesh& mesh, const CameraFrame& frame, const Camera& camera,
                        double sigma, bool with_jacobians) {
  RasterScene scene;
  scene.buckets.resize(static_cast<std::size_t>(frame.width) * frame.height);
  const double inflate = 3.0 * std::sqrt(sigma);

  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    TriangleNdc tri;
    bool ok = true;
    for (int i = 0; i < 3; ++i) {
      tri.vertex_index[i] = mesh.faces[f][i];
      if (!frame.to_ndc(camera.eye, mesh.vertices[mesh.faces[f][i]], tri.v[i],
                        with_jacobians ? &tri.jac[i] : nullptr)) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;  // a vertex behind the camera excludes the triangle

    Eigen::Vector2d lo = tri.v[0].cwiseMin(tri.v[1]).cwiseMin(tri.v[2]);
    Eigen::Vector2d hi = tri.v[0].cwiseMax(tri.v[1]).cwiseMax(tri.v[2]);
    lo.array() -= inflate;
    hi.array() += inflate;
    // NDC y decreases with pixel y, so the corner roles swap.
    const Eigen::Vector2d p0 = frame.ndc_to_pixel({lo.x(), hi.y()});
    const Eigen::Vector2d p1 = frame.ndc_to_pixel({hi.x(), lo.y()});
    tri.x0 = std::max(0, static_cast<int>(std::floor(p0.x())));
    tri.y0 = std::max(0, static_cast<int>(std::floor(p0.y())));
    tri.x1 = std::min(frame.width - 1, static_cast<int>(std::ceil(p1.x())));
    tri.y1 = std::min(frame.height - 1, static_cast<int>(std::ceil(p1.y())));
    if (tri.x0 > tri.x1 || tri.y0 > tri.y1) continue;

    const int tri_index = static_cast<int>(scene.triangles.size());
    scene.triangles.push_back(tri);
    for (int y = tri.y0; y <= tri.y1; ++y) {
      for (int x = tri.x0; x <= tri.x1; ++x) {
        scene.buckets[static_cast<std::size_t>(y) * frame.width + x].push_back(tri_index);
      }
    }
  }
  return scene;
}

}  // namespace

Projected project(const Camera& camera, const Vec3& v) {
  const CameraFrame frame(camera);
  Projected out;
  Eigen::Vector2d ndc;
  Eigen::Matrix<double, 2, 3> jac;
  out.in_front = frame.to_ndc(camera.eye, v, ndc, &jac);
  if (!out.in_front) return out;
  out.pixel = frame.ndc_to_pixel(ndc);
  // Pixel = affine(ndc): x scales by width/(2*aspect), y by -height/2.
  out.jacobian.row(0) = jac.row(0) * (0.5 * frame.width / frame.aspect);
  out.jacobian.row(1) = jac.row(1) * (-0.5 * frame.height);
  return out;
}

SilhouetteImage soft_silhouette(const TriMesh& mesh, const Camera& camera,
                                const RasterConfig& cfg, int workers) {
  if (!(cfg.sigma > 0.0)) throw std::invalid_argument("soft_silhouette: sigma must be positive");
  const CameraFrame frame(camera);
  SilhouetteImage image;
  image.width = camera.width;
  image.height = camera.height;
  image.values.assign(static_cast<std::size_t>(camera.width) * camera.height, 0.0);
  if (mesh.faces.empty()) return image;

  const RasterScene scene = build_scene(mesh, frame, camera, cfg.sigma, false);
  parallel_for_slots(
      static_cast<std::int64_t>(image.values.size()), workers,
      [&](int, std::int64_t begin, std::int64_t end) {
        for (std::int64_t idx = begin; idx < end; ++idx) {
          const auto& bucket = scene.buckets[idx];
          if (bucket.empty()) continue;
          const int px = static_cast<int>(idx % camera.width);
          const int py = static_cast<int>(idx / camera.width);
          const Eigen::Vector2d p = frame.pixel_center_to_ndc(px, py);
          double survival = 1.0;
          for (int t : bucket) {
            const EdgeDistance d = point_triangle_distance(p, scene.triangles[t]);
            survival *= 1.0 - sigmoid(d.sign * d.d2 / cfg.sigma);
          }
          image.values[idx] = 1.0 - survival;
        }
      });
  return image;
}

double silhouette_l1(const SilhouetteImage& image, const SilhouetteImage& target) {
  if (image.width != target.width || image.height != target.height) {
    throw std::invalid_argument("silhouette_l1: image dimensions differ");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < image.values.size(); ++i) {
    total += std::abs(image.values[i] - target.values[i]);
  }
  return total;
}

std::vector<Vec3> backward_vertices(const TriMesh& mesh, const Camera& camera,
                                    const RasterConfig& cfg, const SilhouetteImage& target,
                                    int workers) {
  if (!(cfg.sigma > 0.0)) throw std::invalid_argument("backward_vertices: sigma must be positive");
  if (target.width != camera.width || target.height != camera.height) {
    throw std::invalid_argument("backward_vertices: target dimensions do not match the camera");
  }
  std::vector<Vec3> grad(mesh.vertices.size(), Vec3::Zero());
  if (mesh.faces.empty()) return grad;

  const CameraFrame frame(camera);
  const RasterScene scene = build_scene(mesh, frame, camera, cfg.sigma, true);

  std::vector<std::vector<Vec3>> slot_grad(kReductionSlots);
  parallel_for_slots(
      static_cast<std::int64_t>(target.values.size()), workers,
      [&](int slot, std::int64_t begin, std::int64_t end) {
        auto& acc = slot_grad[slot];
        if (acc.empty()) acc.assign(mesh.vertices.size(), Vec3::Zero());
        std::vector<EdgeDistance> dists;
        std::vector<double> suffix;
        for (std::int64_t idx = begin; idx < end; ++idx) {
          const auto& bucket = scene.buckets[idx];
          if (bucket.empty()) continue;
          const int px = static_cast<int>(idx % camera.width);
          const int py = static_cast<int>(idx / camera.width);
          const Eigen::Vector2d p = frame.pixel_center_to_ndc(px, py);

          const std::size_t m = bucket.size();
          dists.resize(m);
          suffix.assign(m + 1, 1.0);
          for (std::size_t i = 0; i < m; ++i) {
            dists[i] = point_triangle_distance(p, scene.triangles[bucket[i]]);
          }
          for (std::size_t i = m; i-- > 0;) {
            const double one_minus =
                1.0 - sigmoid(dists[i].sign * dists[i].d2 / cfg.sigma);
            suffix[i] = suffix[i + 1] * one_minus;
          }
          const double coverage = 1.0 - suffix[0];
          const double diff = coverage - target.values[idx];
          if (diff == 0.0) continue;
          const double dl_dcov = diff > 0.0 ? 1.0 : -1.0;

          double prefix = 1.0;
          for (std::size_t i = 0; i < m; ++i) {
            const EdgeDistance& d = dists[i];
            const double arg = d.sign * d.d2 / cfg.sigma;
            const double cover_t = sigmoid(arg);
            // dI/dD_t is the product of everyone else's survival.
            const double leave_one_out = prefix * suffix[i + 1];
            prefix *= 1.0 - cover_t;
            const double dl_dd2 =
                dl_dcov * leave_one_out * cover_t * (1.0 - cover_t) * d.sign / cfg.sigma;
            if (dl_dd2 == 0.0) continue;

            // d d2 / d endpoints of the argmin edge, via the closest point
            // c = a + t(b-a): the t-variation drops at the clamped ends and
            // at interior optima alike.
            const TriangleNdc& tri = scene.triangles[bucket[i]];
            const int ia = d.edge;
            const int ib = (d.edge + 1) % 3;
            const Eigen::Vector2d da = -2.0 * (1.0 - d.t) * d.delta;
            const Eigen::Vector2d db = -2.0 * d.t * d.delta;
            acc[tri.vertex_index[ia]] += dl_dd2 * (tri.jac[ia].transpose() * da);
            acc[tri.vertex_index[ib]] += dl_dd2 * (tri.jac[ib].transpose() * db);
          }
        }
      });

  for (int s = 0; s < kReductionSlots; ++s) {
    if (slot_grad[s].empty()) continue;
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += slot_grad[s][i];
  }
  return grad;
}

void write_pgm(const SilhouetteImage& image, std::ostream& out) {
  out << "P2\n" << image.width << " " << image.height << "\n255\n";
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const double v = std::clamp(image.at(x, y), 0.0, 1.0);
      const int q = static_cast<int>(std::floor(255.0 * v + 0.5));
      out << q << (x + 1 == image.width ? "\n" : " ");
    }
  }
}

void write_pgm_file(const SilhouetteImage& image, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open PGM for writing: " + path);
  write_pgm(image, out);
}

namespace {

/// Next whitespace-separated token, skipping '#' comments.
bool next_pgm_token(std::istream& in, std::string& token) {
  while (in >> token) {
    if (token[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return true;
  }
  return false;
}

int next_pgm_int(std::istream& in, const char* what) {
  std::string token;
  if (!next_pgm_token(in, token)) {
    throw std::runtime_error(std::string("PGM: unexpected end of file reading ") + what);
  }
  try {
    return std::stoi(token);
  } catch (const std::exception&) {
    throw std::runtime_error(std::string("PGM: bad ") + what + " '" + token + "'");
  }
}

}  // namespace

SilhouetteImage read_pgm(std::istream& in) {
  std::string magic;
  if (!next_pgm_token(in, magic) || magic != "P2") {
    throw std::runtime_error("PGM: expected ASCII magic 'P2'");
  }
  SilhouetteImage image;
  image.width = next_pgm_int(in, "width");
  image.height = next_pgm_int(in, "height");
  const int maxval = next_pgm_int(in, "maxval");
  if (image.width < 1 || image.height < 1 || maxval < 1) {
    throw std::runtime_error("PGM: invalid header");
  }
  image.values.resize(static_cast<std::size_t>(image.width) * image.height);
  for (auto& v : image.values) {
    const int q = next_pgm_int(in, "pixel");
    if (q < 0 || q > maxval) throw std::runtime_error("PGM: pixel out of range");
    v = static_cast<double>(q) / maxval;
  }
  return image;
}

SilhouetteImage read_pgm_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open PGM: " + path);
  return read_pgm(in);
}

std::string camera_to_json(const Camera& camera) {
  nlohmann::ordered_json j;
  j["eye"] = {camera.eye.x(), camera.eye.y(), camera.eye.z()};
  j["look_at"] = {camera.look_at.x(), camera.look_at.y(), camera.look_at.z()};
  j["up"] = {camera.up.x(), camera.up.y(), camera.up.z()};
  j["fov_deg"] = camera.vertical_fov * 180.0 / M_PI;
  j["width"] = camera.width;
  j["height"] = camera.height;
  return j.dump(2) + "\n";
}

Camera camera_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("camera JSON: ") + e.what());
  }
  auto vec = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3) {
      throw std::runtime_error(std::string("camera JSON: '") + key + "' must be a 3-array");
    }
    return Vec3(j[key][0].get<double>(), j[key][1].get<double>(), j[key][2].get<double>());
  };
  Camera camera;
  camera.eye = vec("eye");
  camera.look_at = vec("look_at");
  camera.up = vec("up");
  if (!j.contains("fov_deg")) throw std::runtime_error("camera JSON: missing 'fov_deg'");
  camera.vertical_fov = j["fov_deg"].get<double>() * M_PI / 180.0;
  if (!j.contains("width") || !j.contains("height")) {
    throw std::runtime_error("camera JSON: missing 'width' or 'height'");
  }
  camera.width = j["width"].get<int>();
  camera.height = j["height"].get<int>();
  camera.validate();
  return camera;
}

Camera camera_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open camera JSON: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return camera_from_json(ss.str());
}

}  // namespace meshsdf
