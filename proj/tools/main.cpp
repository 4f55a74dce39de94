#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gradcheck.hpp"
#include "meshsdf/diffiso.hpp"
#include "meshsdf/log.hpp"
#include "meshsdf/losses.hpp"
#include "meshsdf/marching.hpp"
#include "meshsdf/mesh.hpp"
#include "meshsdf/pipeline.hpp"
#include "meshsdf/raster.hpp"
#include "meshsdf/shapeopt.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace meshsdf;
using namespace meshsdf::cli;

namespace {

/// Shortest round-trip decimal, so reruns are byte-identical.
std::string num(double v) { return json(v).dump(); }

void require_input(const std::string& path, const char* what) {
  if (path.empty()) throw std::runtime_error(std::string(what) + ": no path given");
  if (!fs::exists(path)) throw std::runtime_error(std::string(what) + " not found: " + path);
}

std::ofstream open_output(const std::string& path, const char* what) {
  if (path.empty()) throw std::runtime_error(std::string(what) + ": no output path given");
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent))
    throw std::runtime_error(std::string(what) + ": output directory does not exist: " +
                             parent.string());
  std::ofstream out(path);
  if (!out) throw std::runtime_error(std::string(what) + ": cannot open for writing: " + path);
  return out;
}

std::string sibling(const std::string& path, const char* suffix) {
  fs::path p(path);
  const fs::path dir = p.parent_path();
  return (dir / (p.stem().string() + suffix)).string();
}

void write_latent_json(const VecXd& z, const std::string& path) {
  json arr = json::array();
  for (int i = 0; i < z.size(); ++i) arr.push_back(z[i]);
  auto out = open_output(path, "latent");
  out << arr.dump() << "\n";
}

VecXd read_latent_json(const std::string& path, int expected_dim) {
  require_input(path, "latent file");
  std::ifstream in(path);
  json arr = json::parse(in);
  if (!arr.is_array()) throw std::runtime_error("latent file must hold a JSON array: " + path);
  if (static_cast<int>(arr.size()) != expected_dim)
    throw std::runtime_error("latent length mismatch: file has " + std::to_string(arr.size()) +
                             " entries, checkpoint expects " + std::to_string(expected_dim));
  VecXd z(expected_dim);
  for (int i = 0; i < expected_dim; ++i) z[i] = arr[i].get<double>();
  return z;
}

VecXd parse_latent_list(const std::string& text, int expected_dim) {
  std::vector<double> vals;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t used = 0;
    vals.push_back(std::stod(text.substr(pos), &used));
    pos += used;
    if (pos < text.size()) {
      if (text[pos] != ',') throw std::runtime_error("latent list: expected comma in \"" + text + "\"");
      ++pos;
    }
  }
  if (static_cast<int>(vals.size()) != expected_dim)
    throw std::runtime_error("latent length mismatch: got " + std::to_string(vals.size()) +
                             " values, checkpoint expects " + std::to_string(expected_dim));
  VecXd z(expected_dim);
  for (int i = 0; i < expected_dim; ++i) z[i] = vals[static_cast<std::size_t>(i)];
  return z;
}

/// Per-command latent selection: explicit list > file > table index.
struct LatentChoice {
  int index = 0;
  std::string file;
  std::string list;

  VecXd resolve(const Checkpoint& ckpt) const {
    if (!list.empty()) return parse_latent_list(list, ckpt.network.config.latent_dim);
    if (!file.empty()) return read_latent_json(file, ckpt.network.config.latent_dim);
    if (ckpt.latents.empty()) throw std::runtime_error("checkpoint has an empty latent table");
    if (index < 0 || index >= static_cast<int>(ckpt.latents.size()))
      throw std::runtime_error("latent index " + std::to_string(index) +
                               " out of range (table size " +
                               std::to_string(ckpt.latents.size()) + ")");
    return ckpt.latents[static_cast<std::size_t>(index)];
  }
};

PointCloud target_cloud_from_obj(const std::string& path, const RunConfig& cfg, Rng& rng) {
  require_input(path, "target mesh");
  const TriMesh target = import_obj_file(path);
  if (cfg.fit.target_mode == "vertices" || target.faces.empty())
    return target.vertices;
  return sample_mesh_points(target, cfg.fit.target_samples, SampleMode::AreaWeighted,
                            rng.stream("target-samples").next_u64());
}

void write_trajectory_csv(const OptimizeResult& result, const std::string& path) {
  auto out = open_output(path, "log");
  out << "iteration,value\n";
  for (std::size_t i = 0; i < result.trajectory.size(); ++i)
    out << i << "," << num(result.trajectory[i].value) << "\n";
}

/// Shared tail of the three latent-optimization commands: run Adam, write
/// latent + mesh extracted at the best iterate + per-iteration log.
int finish_fit(const char* name, const Objective& objective, const VecXd& z0,
               const AdamConfig& adam, const SdfNetwork& net, const PipelineConfig& pipe,
               const std::string& out_prefix) {
  const OptimizeResult result = optimize_latent(objective, z0, adam);
  if (result.trajectory.empty()) {
    std::fprintf(stderr, "error: %s: objective non-finite at the initial latent\n", name);
    return 1;
  }
  write_latent_json(result.best_z, out_prefix + "_latent.json");
  write_trajectory_csv(result, out_prefix + "_log.csv");

  LatentSurface surface(net, pipe);
  surface.extract(result.best_z);
  export_obj_file(surface.mesh(), out_prefix + "_mesh.obj");

  const double initial = result.trajectory.front().value;
  std::printf("%s: initial %s best %s at iteration %d ratio %s%s\n", name, num(initial).c_str(),
              num(result.best_value).c_str(), result.best_index,
              num(initial != 0.0 ? result.best_value / initial : 1.0).c_str(),
              result.aborted_non_finite ? " (stopped early: non-finite objective)" : "");
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  Rng rng(cfg.seed);
  log_line(1, "building dataset: " + std::to_string(cfg.dataset.spheres) + " spheres, " +
                  std::to_string(cfg.dataset.tori) + " tori");
  const std::vector<SampleSet> dataset = build_dataset(cfg.dataset, rng);

  TrainConfig train = cfg.train;
  train.workers = cfg.workers;
  Rng train_rng = rng.stream("train");
  const TrainResult result = train_sdf(cfg.network, dataset, train, train_rng);

  save_checkpoint_file(result.network, result.latents, cfg.paths.out);
  const std::string loss_path = sibling(cfg.paths.out, "_loss.csv");
  auto loss_out = open_output(loss_path, "loss curve");
  loss_out << "step,loss\n";
  for (std::size_t i = 0; i < result.loss_trace.size(); ++i)
    loss_out << i << "," << num(result.loss_trace[i]) << "\n";
  std::printf("train: %zu shapes, %d steps, final batch loss %s -> %s\n", dataset.size(),
              train.steps, result.loss_trace.empty() ? "n/a" : num(result.loss_trace.back()).c_str(),
              cfg.paths.out.c_str());
  return 0;
}

int cmd_extract(const RunConfig& cfg, const LatentChoice& latent) {
  require_input(cfg.paths.checkpoint, "checkpoint");
  const Checkpoint ckpt = load_checkpoint_file(cfg.paths.checkpoint);
  const VecXd z = latent.resolve(ckpt);

  const ScalarField field =
      sample_field(field_for_latent(ckpt.network, z), cfg.grid, cfg.workers);
  const TriMesh mesh = marching_cubes(field);
  if (mesh.empty())
    std::fprintf(stderr, "warning: level set is empty at this latent and resolution\n");
  export_obj_file(mesh, cfg.paths.out);
  std::printf("extract: %zu vertices, %zu faces -> %s\n", mesh.vertices.size(), mesh.faces.size(),
              cfg.paths.out.c_str());
  return 0;
}

int cmd_fit_chamfer(const RunConfig& cfg, const LatentChoice& init) {
  require_input(cfg.paths.checkpoint, "checkpoint");
  const Checkpoint ckpt = load_checkpoint_file(cfg.paths.checkpoint);
  const VecXd z0 = init.resolve(ckpt);
  Rng rng(cfg.seed);
  const PointCloud target = target_cloud_from_obj(cfg.paths.target, cfg, rng);
  if (target.empty()) throw std::runtime_error("target mesh has no vertices");

  PipelineConfig pipe;
  pipe.grid = cfg.grid;
  pipe.workers = cfg.workers;
  auto surface = std::make_shared<LatentSurface>(ckpt.network, pipe);
  const int workers = cfg.workers;
  Objective objective = [surface, &target, workers](const VecXd& z) {
    ValueGradZ out;
    out.grad = VecXd::Zero(z.size());
    surface->extract(z);
    if (surface->mesh().empty()) {
      out.value = std::numeric_limits<double>::infinity();
      return out;
    }
    const ChamferResult ch = chamfer_l2(surface->mesh().vertices, target, workers);
    out.value = ch.value;
    out.grad = surface->backward(ch.grad);
    return out;
  };
  return finish_fit("fit-chamfer", objective, z0, cfg.adam, ckpt.network, pipe, cfg.paths.out);
}

int cmd_fit_silhouette(const RunConfig& cfg, const LatentChoice& init) {
  require_input(cfg.paths.checkpoint, "checkpoint");
  const Checkpoint ckpt = load_checkpoint_file(cfg.paths.checkpoint);
  const VecXd z0 = init.resolve(ckpt);
  require_input(cfg.paths.target, "target image");
  const SilhouetteImage target = read_pgm_file(cfg.paths.target);

  Camera camera = cfg.camera;
  if (!cfg.paths.camera.empty()) {
    require_input(cfg.paths.camera, "camera file");
    camera = camera_from_json_file(cfg.paths.camera);
  }
  camera.validate();
  if (camera.width != target.width || camera.height != target.height)
    throw std::runtime_error("camera image size " + std::to_string(camera.width) + "x" +
                             std::to_string(camera.height) + " does not match target " +
                             std::to_string(target.width) + "x" + std::to_string(target.height));

  PipelineConfig pipe;
  pipe.grid = cfg.grid;
  pipe.workers = cfg.workers;
  auto surface = std::make_shared<LatentSurface>(ckpt.network, pipe);
  const RasterConfig raster = cfg.raster;
  const int workers = cfg.workers;
  Objective objective = [surface, camera, raster, &target, workers](const VecXd& z) {
    ValueGradZ out;
    out.grad = VecXd::Zero(z.size());
    surface->extract(z);
    if (surface->mesh().empty()) {
      out.value = std::numeric_limits<double>::infinity();
      return out;
    }
    const SilhouetteImage image = soft_silhouette(surface->mesh(), camera, raster, workers);
    out.value = silhouette_l1(image, target);
    out.grad = surface->backward(backward_vertices(surface->mesh(), camera, raster, target, workers));
    return out;
  };
  return finish_fit("fit-silhouette", objective, z0, cfg.adam, ckpt.network, pipe, cfg.paths.out);
}

int cmd_optimize_drag(const RunConfig& cfg, const LatentChoice& init) {
  require_input(cfg.paths.checkpoint, "checkpoint");
  const Checkpoint ckpt = load_checkpoint_file(cfg.paths.checkpoint);
  const VecXd z0 = init.resolve(ckpt);

  PipelineConfig pipe;
  pipe.grid = cfg.grid;
  pipe.workers = cfg.workers;
  RegularizerConfig reg = cfg.regularizer;
  reg.latent_table = ckpt.latents;

  auto parts_out = open_output(cfg.paths.out + "_log.csv", "drag log");
  parts_out << "iteration,total,drag,constraint,regularizer,grad_norm,evaluations,vertices\n";
  auto on_eval = [&parts_out](const DragObjectiveParts& p) {
    parts_out << p.iteration << "," << num(p.total) << "," << num(p.drag) << ","
              << num(p.constraint) << "," << num(p.regularizer) << "," << num(p.grad_norm) << ","
              << p.field_evaluations << "," << p.vertex_count << "\n";
  };
  Objective objective =
      assemble_drag_objective(ckpt.network, pipe, cfg.drag, cfg.boxes, reg, on_eval);

  const OptimizeResult result = optimize_latent(objective, z0, cfg.adam);
  if (result.trajectory.empty()) {
    std::fprintf(stderr, "error: optimize-drag: objective non-finite at the initial latent\n");
    return 1;
  }
  write_latent_json(result.best_z, cfg.paths.out + "_latent.json");

  LatentSurface surface(ckpt.network, pipe);
  surface.extract(result.best_z);
  export_obj_file(surface.mesh(), cfg.paths.out + "_mesh.obj");

  const double initial = result.trajectory.front().value;
  const double ratio = initial != 0.0 ? result.best_value / initial : 1.0;
  std::printf("optimize-drag: initial %s best %s at iteration %d ratio %s%s\n",
              num(initial).c_str(), num(result.best_value).c_str(), result.best_index,
              num(ratio).c_str(),
              result.aborted_non_finite ? " (stopped early: non-finite objective)" : "");
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg) {
  require_input(cfg.paths.checkpoint, "checkpoint");
  const Checkpoint ckpt = load_checkpoint_file(cfg.paths.checkpoint);
  const GradcheckReport report = run_gradcheck(ckpt, cfg);
  const std::string text = report.body.dump(2) + "\n";
  if (!cfg.paths.out.empty()) {
    auto out = open_output(cfg.paths.out, "report");
    out << text;
  }
  std::fputs(text.c_str(), stdout);
  return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent signed-distance surfaces: training, extraction, and "
               "surface-driven latent optimization"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> res;
  std::optional<int> iters;
  std::optional<int> workers;
  std::string checkpoint, target, camera_path, out;
  LatentChoice latent;

  app.add_option("--config", config_path, "Run configuration JSON")->expected(1);
  app.add_option("--seed", seed, "Run seed (overrides config)");
  app.add_option("--res", res, "Grid resolution per axis (overrides config)");
  app.add_option("--iters", iters, "Training steps / optimizer iterations (overrides config)");
  app.add_option("--workers", workers, "Worker threads, 0 = all cores (overrides config)");

  auto add_common = [&](CLI::App* sub, bool needs_checkpoint) {
    sub->fallthrough();  // let --config/--seed/... appear after the subcommand
    if (needs_checkpoint)
      sub->add_option("--checkpoint", checkpoint, "Checkpoint JSON to load");
    sub->add_option("--out", out, "Output path (or path prefix for fit commands)");
  };
  auto add_latent_flags = [&](CLI::App* sub, const char* what) {
    auto* a = sub->add_option("--latent-index", latent.index,
                              std::string(what) + ": index into the checkpoint latent table");
    auto* b = sub->add_option("--latent-file", latent.file,
                              std::string(what) + ": JSON array file");
    auto* c = sub->add_option("--latent", latent.list,
                              std::string(what) + ": comma-separated values");
    a->excludes(b)->excludes(c);
    b->excludes(c);
  };

  CLI::App* train = app.add_subcommand("train", "Train the auto-decoder on the synthetic corpus");
  add_common(train, false);

  CLI::App* extract = app.add_subcommand("extract", "Extract a latent's surface to OBJ");
  add_common(extract, true);
  add_latent_flags(extract, "latent");

  CLI::App* fit_ch = app.add_subcommand("fit-chamfer", "Fit a latent to a target mesh (Chamfer)");
  add_common(fit_ch, true);
  add_latent_flags(fit_ch, "initial latent");
  fit_ch->add_option("--target", target, "Target OBJ");

  CLI::App* fit_sil =
      app.add_subcommand("fit-silhouette", "Fit a latent to a target silhouette (soft raster L1)");
  add_common(fit_sil, true);
  add_latent_flags(fit_sil, "initial latent");
  fit_sil->add_option("--target", target, "Target PGM image");
  fit_sil->add_option("--camera", camera_path, "Camera JSON");

  CLI::App* opt_drag =
      app.add_subcommand("optimize-drag", "Minimize drag plus constraints over the latent");
  add_common(opt_drag, true);
  add_latent_flags(opt_drag, "initial latent");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference audit of all gradients");
  add_common(gradcheck, true);

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg;
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    if (seed) cfg.seed = *seed;
    if (res) cfg.grid.resolution = *res;
    if (workers) cfg.workers = *workers;
    if (iters) {
      cfg.train.steps = *iters;
      cfg.adam.iterations = *iters;
    }
    if (!checkpoint.empty()) cfg.paths.checkpoint = checkpoint;
    if (!target.empty()) cfg.paths.target = target;
    if (!camera_path.empty()) cfg.paths.camera = camera_path;
    if (!out.empty()) cfg.paths.out = out;
    validate_run_config(cfg);

    if (train->parsed()) return cmd_train(cfg);
    if (extract->parsed()) return cmd_extract(cfg, latent);
    if (fit_ch->parsed()) return cmd_fit_chamfer(cfg, latent);
    if (fit_sil->parsed()) return cmd_fit_silhouette(cfg, latent);
    if (opt_drag->parsed()) return cmd_optimize_drag(cfg, latent);
    if (gradcheck->parsed()) return cmd_gradcheck(cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
