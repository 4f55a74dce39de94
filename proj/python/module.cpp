#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>
#include <vector>

#include "meshsdf/diffiso.hpp"
#include "meshsdf/losses.hpp"
#include "meshsdf/marching.hpp"
#include "meshsdf/mesh.hpp"
#include "meshsdf/network.hpp"
#include "meshsdf/raster.hpp"

namespace py = pybind11;
using namespace meshsdf;

namespace {

using MatX3d = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using MatX3i = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

TriMesh mesh_from_arrays(const MatX3d& vertices, const MatX3i& faces) {
  TriMesh mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(vertices.rows()));
  for (Eigen::Index i = 0; i < vertices.rows(); ++i)
    mesh.vertices.emplace_back(vertices(i, 0), vertices(i, 1), vertices(i, 2));
  mesh.faces.reserve(static_cast<std::size_t>(faces.rows()));
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    for (int c = 0; c < 3; ++c)
      if (faces(f, c) < 0 || faces(f, c) >= vertices.rows())
        throw std::invalid_argument("face index out of range");
    mesh.faces.push_back({faces(f, 0), faces(f, 1), faces(f, 2)});
  }
  return mesh;
}

py::tuple mesh_to_arrays(const TriMesh& mesh) {
  MatX3d vertices(static_cast<Eigen::Index>(mesh.vertices.size()), 3);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) vertices.row(static_cast<Eigen::Index>(i)) = mesh.vertices[i];
  MatX3i faces(static_cast<Eigen::Index>(mesh.faces.size()), 3);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f)
    for (int c = 0; c < 3; ++c) faces(static_cast<Eigen::Index>(f), c) = mesh.faces[f][static_cast<std::size_t>(c)];
  return py::make_tuple(vertices, faces);
}

PointCloud cloud_from(const MatX3d& points) {
  PointCloud cloud(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    cloud[static_cast<std::size_t>(i)] = points.row(i).transpose();
  return cloud;
}

Camera make_camera(const Vec3& eye, const Vec3& look_at, const Vec3& up, double fov_deg,
                   int width, int height) {
  Camera cam;
  cam.eye = eye;
  cam.look_at = look_at;
  cam.up = up;
  cam.vertical_fov = fov_deg * M_PI / 180.0;
  cam.width = width;
  cam.height = height;
  cam.validate();
  return cam;
}

/// Trained network plus its latent table, the unit the CLI stores as a
/// checkpoint file.
struct Model {
  SdfNetwork net;
  std::vector<VecXd> latents;
  std::vector<double> loss_trace;

  static Model train(const std::vector<std::pair<MatX3d, VecXd>>& shapes,
                     const NetworkConfig& config, int steps, int batch_size,
                     double learning_rate, double lambda_reg, std::uint64_t seed, int workers) {
    std::vector<SampleSet> sets;
    sets.reserve(shapes.size());
    for (const auto& [points, sdf] : shapes) {
      if (points.rows() != sdf.size())
        throw std::invalid_argument("shape points and sdf lengths differ");
      SampleSet set;
      set.points = cloud_from(points);
      set.sdf.assign(sdf.data(), sdf.data() + sdf.size());
      sets.push_back(std::move(set));
    }
    TrainConfig train_cfg;
    train_cfg.steps = steps;
    train_cfg.batch_size = batch_size;
    train_cfg.learning_rate = learning_rate;
    train_cfg.lambda_reg = lambda_reg;
    train_cfg.workers = workers;
    Rng rng(seed);
    TrainResult result = train_sdf(config, sets, train_cfg, rng);
    return Model{std::move(result.network), std::move(result.latents),
                 std::move(result.loss_trace)};
  }

  static Model load(const std::string& path) {
    Checkpoint ckpt = load_checkpoint_file(path);
    return Model{std::move(ckpt.network), std::move(ckpt.latents), {}};
  }

  void save(const std::string& path) const { save_checkpoint_file(net, latents, path); }

  VecXd forward_many(const MatX3d& points, const VecXd& z) const {
    NetworkWorkspace ws;
    ws.resize(net.config);
    VecXd out(points.rows());
    for (Eigen::Index i = 0; i < points.rows(); ++i)
      out[i] = forward(net, points.row(i).transpose(), z, ws);
    return out;
  }

  py::tuple gradient(const Vec3& x, const VecXd& z) const {
    NetworkWorkspace ws;
    ws.resize(net.config);
    const InputGradient g = input_gradient(net, x, z, ws);
    return py::make_tuple(g.value, Vec3(g.dx), VecXd(g.dz));
  }

  py::tuple extract(const VecXd& z, int resolution, double half_extent, int workers) const {
    const Grid3D grid = Grid3D::cube(half_extent, resolution);
    const ScalarField field = sample_field(field_for_latent(net, z), grid, workers);
    return mesh_to_arrays(marching_cubes(field));
  }

  VecXd pull_back(const VecXd& z, const MatX3d& vertices, const MatX3d& upstream,
                  int workers) const {
    if (vertices.rows() != upstream.rows())
      throw std::invalid_argument("vertices and upstream gradients must pair up");
    TriMesh mesh;
    mesh.vertices = cloud_from(vertices);
    return backward_latent(net, z, mesh, cloud_from(upstream), workers);
  }
};

py::tuple sample_shape(const AnalyticShape& shape, int n_surface, int n_uniform,
                       double sigma_near, double sigma_far, std::uint64_t seed,
                       double box_half_extent) {
  Rng rng(seed);
  const SampleSet set =
      sample_training_points(shape, n_surface, n_uniform, Vec3::Constant(-box_half_extent),
                             Vec3::Constant(box_half_extent), sigma_near, sigma_far, rng);
  MatX3d points(static_cast<Eigen::Index>(set.points.size()), 3);
  VecXd sdf(static_cast<Eigen::Index>(set.sdf.size()));
  for (std::size_t i = 0; i < set.points.size(); ++i) {
    points.row(static_cast<Eigen::Index>(i)) = set.points[i];
    sdf[static_cast<Eigen::Index>(i)] = set.sdf[i];
  }
  return py::make_tuple(points, sdf);
}

}  // namespace

PYBIND11_MODULE(meshsdf, m) {
  m.doc() = "Latent signed-distance surfaces: training, differentiable iso-surface "
            "extraction, and surface losses";
  m.attr("__version__") = "0.1.0";

  py::class_<NetworkConfig>(m, "NetworkConfig")
      .def(py::init([](int latent_dim, int hidden_width, int hidden_layers, int skip_layer) {
             NetworkConfig cfg;
             cfg.latent_dim = latent_dim;
             cfg.hidden_width = hidden_width;
             cfg.hidden_layers = hidden_layers;
             cfg.skip_layer = skip_layer;
             cfg.validate();
             return cfg;
           }),
           py::arg("latent_dim") = 4, py::arg("hidden_width") = 128,
           py::arg("hidden_layers") = 4, py::arg("skip_layer") = 2)
      .def_readonly("latent_dim", &NetworkConfig::latent_dim)
      .def_readonly("hidden_width", &NetworkConfig::hidden_width)
      .def_readonly("hidden_layers", &NetworkConfig::hidden_layers)
      .def_readonly("skip_layer", &NetworkConfig::skip_layer);

  py::class_<Model>(m, "Model")
      .def_static("train", &Model::train, py::arg("shapes"), py::arg("config"),
                  py::arg("steps") = 1000, py::arg("batch_size") = 256,
                  py::arg("learning_rate") = 1e-3, py::arg("lambda_reg") = 1e-4,
                  py::arg("seed") = 1, py::arg("workers") = 1,
                  "Auto-decoder training on a list of (points, sdf) shape samples")
      .def_static("load", &Model::load, py::arg("path"))
      .def("save", &Model::save, py::arg("path"))
      .def("forward", &Model::forward_many, py::arg("points"), py::arg("z"),
           "Signed distance predictions for an (N, 3) point array")
      .def("gradient", &Model::gradient, py::arg("x"), py::arg("z"),
           "(value, d/dx, d/dz) at one point")
      .def("extract", &Model::extract, py::arg("z"), py::arg("resolution") = 64,
           py::arg("half_extent") = 1.0, py::arg("workers") = 1,
           "Zero level set of the latent as (vertices, faces)")
      .def("pull_back", &Model::pull_back, py::arg("z"), py::arg("vertices"),
           py::arg("upstream"), py::arg("workers") = 1,
           "Chain per-vertex loss gradients back to the latent code")
      .def_property_readonly("latents",
                             [](const Model& model) {
                               py::list out;
                               for (const auto& z : model.latents) out.append(VecXd(z));
                               return out;
                             })
      .def_property_readonly("loss_trace",
                             [](const Model& model) { return model.loss_trace; })
      .def_property_readonly("latent_dim",
                             [](const Model& model) { return model.net.config.latent_dim; });

  m.def(
      "sphere_samples",
      [](double radius, int n_surface, int n_uniform, double sigma_near, double sigma_far,
         std::uint64_t seed, double box_half_extent) {
        return sample_shape(AnalyticShape::sphere(radius), n_surface, n_uniform, sigma_near,
                            sigma_far, seed, box_half_extent);
      },
      py::arg("radius"), py::arg("n_surface") = 2048, py::arg("n_uniform") = 512,
      py::arg("sigma_near") = 0.005, py::arg("sigma_far") = 0.05, py::arg("seed") = 1,
      py::arg("box_half_extent") = 1.0,
      "(points, sdf) training samples for a sphere");
  m.def(
      "torus_samples",
      [](double major_radius, double minor_radius, int n_surface, int n_uniform,
         double sigma_near, double sigma_far, std::uint64_t seed, double box_half_extent) {
        return sample_shape(AnalyticShape::torus(major_radius, minor_radius), n_surface,
                            n_uniform, sigma_near, sigma_far, seed, box_half_extent);
      },
      py::arg("major_radius"), py::arg("minor_radius"), py::arg("n_surface") = 2048,
      py::arg("n_uniform") = 512, py::arg("sigma_near") = 0.005, py::arg("sigma_far") = 0.05,
      py::arg("seed") = 1, py::arg("box_half_extent") = 1.0,
      "(points, sdf) training samples for a torus");

  m.def(
      "marching_cubes",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> values,
         double half_extent) {
        if (values.ndim() != 3 || values.shape(0) != values.shape(1) ||
            values.shape(1) != values.shape(2))
          throw std::invalid_argument("values must be a cubic 3d array");
        const int n = static_cast<int>(values.shape(0));
        ScalarField field;
        field.grid = Grid3D::cube(half_extent, n);
        field.values.resize(static_cast<std::size_t>(field.grid.node_count()));
        field.valid.assign(field.values.size(), 1);
        auto v = values.unchecked<3>();
        for (int k = 0; k < n; ++k)
          for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
              field.values[static_cast<std::size_t>(field.grid.node_index(i, j, k))] = v(i, j, k);
        return mesh_to_arrays(marching_cubes(field));
      },
      py::arg("values"), py::arg("half_extent") = 1.0,
      "Triangulate the zero level set of values[i, j, k] sampled on a cube");

  m.def(
      "euler_characteristic",
      [](const MatX3d& vertices, const MatX3i& faces) {
        return euler_characteristic(mesh_from_arrays(vertices, faces));
      },
      py::arg("vertices"), py::arg("faces"));
  m.def(
      "genus",
      [](const MatX3d& vertices, const MatX3i& faces) {
        return genus(mesh_from_arrays(vertices, faces));
      },
      py::arg("vertices"), py::arg("faces"));

  m.def(
      "chamfer_l2",
      [](const MatX3d& p, const MatX3d& q, int workers) {
        const ChamferResult res = chamfer_l2(cloud_from(p), cloud_from(q), workers);
        MatX3d grad(p.rows(), 3);
        for (Eigen::Index i = 0; i < p.rows(); ++i)
          grad.row(i) = res.grad[static_cast<std::size_t>(i)];
        return py::make_tuple(res.value, grad);
      },
      py::arg("p"), py::arg("q"), py::arg("workers") = 1,
      "(value, d value / d p) of the mean two-sided squared-distance Chamfer");
  m.def(
      "chamfer_sqrt_l2",
      [](const MatX3d& p, const MatX3d& q, int workers) {
        return chamfer_sqrt_l2(cloud_from(p), cloud_from(q), workers);
      },
      py::arg("p"), py::arg("q"), py::arg("workers") = 1);
  m.def(
      "emd_exact",
      [](const MatX3d& p, const MatX3d& q) { return emd_exact(cloud_from(p), cloud_from(q)); },
      py::arg("p"), py::arg("q"));
  m.def(
      "fscore",
      [](const MatX3d& p, const MatX3d& q, double threshold) {
        return fscore(cloud_from(p), cloud_from(q), threshold);
      },
      py::arg("p"), py::arg("q"), py::arg("threshold"));
  m.def(
      "surface_iou",
      [](const MatX3d& p, const MatX3d& q, int resolution) {
        return surface_iou(cloud_from(p), cloud_from(q), resolution);
      },
      py::arg("p"), py::arg("q"), py::arg("resolution") = 32);

  m.def(
      "soft_silhouette",
      [](const MatX3d& vertices, const MatX3i& faces, const Vec3& eye, const Vec3& look_at,
         const Vec3& up, double fov_deg, int width, int height, double sigma, int workers) {
        const Camera cam = make_camera(eye, look_at, up, fov_deg, width, height);
        RasterConfig cfg;
        cfg.sigma = sigma;
        const SilhouetteImage image =
            soft_silhouette(mesh_from_arrays(vertices, faces), cam, cfg, workers);
        py::array_t<double> out({height, width});
        auto buf = out.mutable_unchecked<2>();
        for (int y = 0; y < height; ++y)
          for (int x = 0; x < width; ++x) buf(y, x) = image.at(x, y);
        return out;
      },
      py::arg("vertices"), py::arg("faces"), py::arg("eye"), py::arg("look_at"),
      py::arg("up") = Vec3(0, 0, 1), py::arg("fov_deg") = 45.0, py::arg("width") = 64,
      py::arg("height") = 64, py::arg("sigma") = 1e-4, py::arg("workers") = 1,
      "Soft coverage image of the mesh, row-major from the top-left pixel");
}
