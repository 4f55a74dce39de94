#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meshsdf/geometry.hpp"
#include "meshsdf/network.hpp"
#include "meshsdf/raster.hpp"
#include "meshsdf/shapeopt.hpp"

namespace meshsdf::cli {

/// Synthetic training corpus: spheres and tori with parameters drawn
/// uniformly from the ranges below, sampled near the surface and in the box.
struct DatasetConfig {
  int spheres = 8;
  int tori = 8;
  double radius_min = 0.2;
  double radius_max = 0.4;
  double major_min = 0.35;
  double major_max = 0.55;
  double minor_min = 0.10;
  double minor_max = 0.20;
  int n_surface = 16384;
  int n_uniform = 4096;
  double sigma_near = 0.005;
  double sigma_far = 0.05;
  double box_half_extent = 1.0;

  void validate() const;
};

/// How fit targets become point clouds: the target mesh's own vertices, or
/// `target_samples` area-weighted surface samples.
struct FitConfig {
  std::string target_mode = "vertices";
  int target_samples = 4096;

  void validate() const;
};

/// Default file locations; per-command flags override these.
struct PathConfig {
  std::string checkpoint;
  std::string target;
  std::string camera;
  std::string out;
};

/// One run = one config + one seed. Defaults here, overridden by the config
/// file, overridden by flags.
struct RunConfig {
  std::uint64_t seed = 1;
  int workers = 0;
  Grid3D grid = Grid3D::cube(1.0, 64);
  NetworkConfig network;
  TrainConfig train;
  DatasetConfig dataset;
  RasterConfig raster;
  Camera camera;
  DragConfig drag;
  std::vector<ConstraintBox> boxes;
  RegularizerConfig regularizer;
  AdamConfig adam;
  FitConfig fit;
  PathConfig paths;
};

/// Merges the JSON file into cfg (file overrides defaults). Throws
/// std::runtime_error naming the offending key on unknown sections or
/// malformed values.
void apply_config_file(RunConfig& cfg, const std::string& path);

/// Validates every section, throwing with one line per problem.
void validate_run_config(const RunConfig& cfg);

/// Training corpus from the dataset section, shapes parameterized and
/// sampled from named child streams of rng. Returns one SampleSet per shape,
/// spheres first.
std::vector<SampleSet> build_dataset(const DatasetConfig& cfg, Rng& rng,
                                     std::vector<AnalyticShape>* shapes_out = nullptr);

}  // namespace meshsdf::cli
