#include "run_config.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace meshsdf::cli {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& what) { throw std::runtime_error(what); }

Vec3 vec3_from(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3) bad("config: " + key + " must be an array of 3 numbers");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

void reject_unknown(const json& j, const std::string& section,
                    std::initializer_list<const char*> known) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) bad("config: unknown key \"" + key + "\" in " + section);
  }
}

void parse_grid(const json& j, Grid3D& grid) {
  reject_unknown(j, "grid", {"min_corner", "max_corner", "half_extent", "resolution"});
  if (j.contains("half_extent")) {
    const double h = j["half_extent"].get<double>();
    grid.min_corner = Vec3::Constant(-h);
    grid.max_corner = Vec3::Constant(h);
  }
  if (j.contains("min_corner")) grid.min_corner = vec3_from(j["min_corner"], "grid.min_corner");
  if (j.contains("max_corner")) grid.max_corner = vec3_from(j["max_corner"], "grid.max_corner");
  if (j.contains("resolution")) grid.resolution = j["resolution"].get<int>();
}

void parse_network(const json& j, NetworkConfig& net) {
  reject_unknown(j, "network",
                 {"latent_dim", "hidden_width", "hidden_layers", "skip_layer", "activation"});
  net.latent_dim = j.value("latent_dim", net.latent_dim);
  net.hidden_width = j.value("hidden_width", net.hidden_width);
  net.hidden_layers = j.value("hidden_layers", net.hidden_layers);
  net.skip_layer = j.value("skip_layer", net.skip_layer);
  net.activation = j.value("activation", net.activation);
}

void parse_train(const json& j, TrainConfig& t) {
  reject_unknown(j, "train", {"steps", "batch_size", "learning_rate", "lambda_reg"});
  t.steps = j.value("steps", t.steps);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.lambda_reg = j.value("lambda_reg", t.lambda_reg);
}

void parse_dataset(const json& j, DatasetConfig& d) {
  reject_unknown(j, "dataset",
                 {"spheres", "tori", "radius_min", "radius_max", "major_min", "major_max",
                  "minor_min", "minor_max", "n_surface", "n_uniform", "sigma_near", "sigma_far",
                  "box_half_extent"});
  d.spheres = j.value("spheres", d.spheres);
  d.tori = j.value("tori", d.tori);
  d.radius_min = j.value("radius_min", d.radius_min);
  d.radius_max = j.value("radius_max", d.radius_max);
  d.major_min = j.value("major_min", d.major_min);
  d.major_max = j.value("major_max", d.major_max);
  d.minor_min = j.value("minor_min", d.minor_min);
  d.minor_max = j.value("minor_max", d.minor_max);
  d.n_surface = j.value("n_surface", d.n_surface);
  d.n_uniform = j.value("n_uniform", d.n_uniform);
  d.sigma_near = j.value("sigma_near", d.sigma_near);
  d.sigma_far = j.value("sigma_far", d.sigma_far);
  d.box_half_extent = j.value("box_half_extent", d.box_half_extent);
}

void parse_camera(const json& j, Camera& cam) {
  reject_unknown(j, "raster.camera", {"eye", "look_at", "up", "fov_deg", "width", "height"});
  if (j.contains("eye")) cam.eye = vec3_from(j["eye"], "camera.eye");
  if (j.contains("look_at")) cam.look_at = vec3_from(j["look_at"], "camera.look_at");
  if (j.contains("up")) cam.up = vec3_from(j["up"], "camera.up");
  if (j.contains("fov_deg")) cam.vertical_fov = j["fov_deg"].get<double>() * M_PI / 180.0;
  cam.width = j.value("width", cam.width);
  cam.height = j.value("height", cam.height);
}

void parse_raster(const json& j, RasterConfig& r, Camera& cam) {
  reject_unknown(j, "raster", {"sigma", "camera"});
  r.sigma = j.value("sigma", r.sigma);
  if (j.contains("camera")) parse_camera(j["camera"], cam);
}

void parse_drag(const json& j, DragConfig& d, std::vector<ConstraintBox>& boxes,
                RegularizerConfig& reg) {
  reject_unknown(j, "drag", {"flow_direction", "dynamic_pressure", "boxes", "regularizer"});
  if (j.contains("flow_direction"))
    d.flow_direction = vec3_from(j["flow_direction"], "drag.flow_direction");
  d.dynamic_pressure = j.value("dynamic_pressure", d.dynamic_pressure);
  if (j.contains("boxes")) {
    if (!j["boxes"].is_array()) bad("config: drag.boxes must be an array");
    boxes.clear();
    for (const auto& bj : j["boxes"]) {
      reject_unknown(bj, "drag.boxes[]", {"min_corner", "max_corner", "weight"});
      ConstraintBox box;
      box.min_corner = vec3_from(bj.at("min_corner"), "box.min_corner");
      box.max_corner = vec3_from(bj.at("max_corner"), "box.max_corner");
      box.weight = bj.value("weight", box.weight);
      boxes.push_back(box);
    }
  }
  if (j.contains("regularizer")) {
    const json& rj = j["regularizer"];
    reject_unknown(rj, "drag.regularizer", {"alpha", "k"});
    reg.alpha = rj.value("alpha", reg.alpha);
    reg.k = rj.value("k", reg.k);
  }
}

void parse_adam(const json& j, AdamConfig& a) {
  reject_unknown(j, "adam", {"learning_rate", "beta1", "beta2", "epsilon", "iterations"});
  a.learning_rate = j.value("learning_rate", a.learning_rate);
  a.beta1 = j.value("beta1", a.beta1);
  a.beta2 = j.value("beta2", a.beta2);
  a.epsilon = j.value("epsilon", a.epsilon);
  a.iterations = j.value("iterations", a.iterations);
}

void parse_fit(const json& j, FitConfig& f) {
  reject_unknown(j, "fit", {"target_mode", "target_samples"});
  f.target_mode = j.value("target_mode", f.target_mode);
  f.target_samples = j.value("target_samples", f.target_samples);
}

void parse_paths(const json& j, PathConfig& p) {
  reject_unknown(j, "paths", {"checkpoint", "target", "camera", "out"});
  p.checkpoint = j.value("checkpoint", p.checkpoint);
  p.target = j.value("target", p.target);
  p.camera = j.value("camera", p.camera);
  p.out = j.value("out", p.out);
}

}  // namespace

void DatasetConfig::validate() const {
  if (spheres < 0 || tori < 0 || spheres + tori == 0)
    bad("dataset: needs at least one shape");
  if (!(radius_min > 0.0 && radius_min <= radius_max))
    bad("dataset: invalid sphere radius range");
  if (!(major_min > 0.0 && major_min <= major_max) ||
      !(minor_min > 0.0 && minor_min <= minor_max) || !(minor_max < major_min))
    bad("dataset: torus radii must satisfy 0 < minor < major");
  if (n_surface < 2 || n_uniform < 0) bad("dataset: invalid sample counts");
  if (!(sigma_near >= 0.0 && sigma_far >= 0.0)) bad("dataset: sigmas must be non-negative");
  if (!(box_half_extent > 0.0)) bad("dataset: box_half_extent must be positive");
}

void FitConfig::validate() const {
  if (target_mode != "vertices" && target_mode != "area")
    bad("fit: target_mode must be \"vertices\" or \"area\"");
  if (target_samples < 1) bad("fit: target_samples must be positive");
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) bad("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    bad("config: " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) bad("config: top level must be a JSON object");
  reject_unknown(j, "config",
                 {"seed", "workers", "grid", "network", "train", "dataset", "raster", "drag",
                  "adam", "fit", "paths"});
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("workers")) cfg.workers = j["workers"].get<int>();
  if (j.contains("grid")) parse_grid(j["grid"], cfg.grid);
  if (j.contains("network")) parse_network(j["network"], cfg.network);
  if (j.contains("train")) parse_train(j["train"], cfg.train);
  if (j.contains("dataset")) parse_dataset(j["dataset"], cfg.dataset);
  if (j.contains("raster")) parse_raster(j["raster"], cfg.raster, cfg.camera);
  if (j.contains("drag")) parse_drag(j["drag"], cfg.drag, cfg.boxes, cfg.regularizer);
  if (j.contains("adam")) parse_adam(j["adam"], cfg.adam);
  if (j.contains("fit")) parse_fit(j["fit"], cfg.fit);
  if (j.contains("paths")) parse_paths(j["paths"], cfg.paths);
}

void validate_run_config(const RunConfig& cfg) {
  std::string problems;
  auto check = [&problems](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      problems += std::string(problems.empty() ? "" : "\n") + section + ": " + e.what();
    }
  };
  check("grid", [&] { cfg.grid.validate(); });
  check("network", [&] { cfg.network.validate(); });
  check("dataset", [&] { cfg.dataset.validate(); });
  check("camera", [&] { cfg.camera.validate(); });
  check("raster", [&] {
    if (!(cfg.raster.sigma > 0.0)) bad("sigma must be positive");
  });
  check("drag", [&] { cfg.drag.validate(); });
  check("drag.boxes", [&] {
    for (const auto& b : cfg.boxes) b.validate();
  });
  check("regularizer", [&] { cfg.regularizer.validate(); });
  check("adam", [&] { cfg.adam.validate(); });
  check("fit", [&] { cfg.fit.validate(); });
  check("train", [&] {
    if (cfg.train.steps < 0 || cfg.train.batch_size < 1 || !(cfg.train.learning_rate > 0.0) ||
        !(cfg.train.lambda_reg >= 0.0))
      bad("steps/batch_size/learning_rate/lambda_reg out of range");
  });
  check("workers", [&] {
    if (cfg.workers < 0) bad("workers must be non-negative");
  });
  if (!problems.empty()) throw std::runtime_error(problems);
}

std::vector<SampleSet> build_dataset(const DatasetConfig& cfg, Rng& rng,
                                     std::vector<AnalyticShape>* shapes_out) {
  cfg.validate();
  Rng params = rng.stream("shape-params");
  std::vector<AnalyticShape> shapes;
  shapes.reserve(static_cast<std::size_t>(cfg.spheres + cfg.tori));
  for (int i = 0; i < cfg.spheres; ++i) {
    shapes.push_back(
        AnalyticShape::sphere(cfg.radius_min + (cfg.radius_max - cfg.radius_min) * params.uniform()));
  }
  for (int i = 0; i < cfg.tori; ++i) {
    const double major = cfg.major_min + (cfg.major_max - cfg.major_min) * params.uniform();
    const double minor = cfg.minor_min + (cfg.minor_max - cfg.minor_min) * params.uniform();
    shapes.push_back(AnalyticShape::torus(major, minor));
  }

  const Vec3 box_min = Vec3::Constant(-cfg.box_half_extent);
  const Vec3 box_max = Vec3::Constant(cfg.box_half_extent);
  std::vector<SampleSet> sets;
  sets.reserve(shapes.size());
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    Rng shape_rng = rng.stream("samples-" + std::to_string(s));
    sets.push_back(sample_training_points(shapes[s], cfg.n_surface, cfg.n_uniform, box_min,
                                          box_max, cfg.sigma_near, cfg.sigma_far, shape_rng));
  }
  if (shapes_out) *shapes_out = std::move(shapes);
  return sets;
}

}  // namespace meshsdf::cli
