#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <string>
#include <vector>

#include "meshsdf/mesh.hpp"

namespace meshsdf {

struct Camera {
  Vec3 eye{2.0, 0.0, 0.0};
  Vec3 look_at{0.0, 0.0, 0.0};
  Vec3 up{0.0, 0.0, 1.0};
  double vertical_fov = 0.7853981633974483;  // radians
  int width = 64;
  int height = 64;

  void validate() const;
};

/// Soft coverage values in [0, 1], row-major from the top-left pixel.
struct SilhouetteImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct RasterConfig {
  double sigma = 1e-4;  // softness, in squared normalized-device units
};

struct Projected {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  Eigen::Matrix<double, 2, 3> jacobian = Eigen::Matrix<double, 2, 3>::Zero();
  bool in_front = false;
};

/// Pinhole projection to pixel coordinates with the exact 2x3 Jacobian
/// d pixel / d world point. Points at or behind the eye plane come back with
/// in_front=false and are excluded from coverage by the rasterizer.
Projected project(const Camera& camera, const Vec3& v);

/// Soft silhouette: per pixel, I = 1 - prod_t (1 - sigmoid(sign_t * d_t^2 / sigma))
/// over triangles t, where d_t is the 2D distance from the pixel center to
/// the projected triangle and sign_t is + inside, - outside. Triangles with
/// any vertex behind the camera are skipped; per-triangle work is culled to
/// the projected bounding box inflated by 3*sqrt(sigma).
SilhouetteImage soft_silhouette(const TriMesh& mesh, const Camera& camera,
                                const RasterConfig& cfg, int workers = 0);

/// Sum of absolute pixel differences (unnormalized L1).
double silhouette_l1(const SilhouetteImage& image, const SilhouetteImage& target);

/// Exact gradient of silhouette_l1(soft_silhouette(mesh), target) with
/// respect to the 3D vertex positions. Worker-count independent.
std::vector<Vec3> backward_vertices(const TriMesh& mesh, const Camera& camera,
                                    const RasterConfig& cfg, const SilhouetteImage& target,
                                    int workers = 0);

/// ASCII (P2) PGM, maxval 255, value -> floor(255 * v + 0.5).
void write_pgm(const SilhouetteImage& image, std::ostream& out);
void write_pgm_file(const SilhouetteImage& image, const std::string& path);
SilhouetteImage read_pgm(std::istream& in);
SilhouetteImage read_pgm_file(const std::string& path);

/// Camera JSON: {eye, look_at, up, fov_deg, width, height}.
std::string camera_to_json(const Camera& camera);
Camera camera_from_json(const std::string& text);
Camera camera_from_json_file(const std::string& path);

}  // namespace meshsdf
