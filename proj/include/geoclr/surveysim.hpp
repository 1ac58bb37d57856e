#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "geoclr/dataset.hpp"
#include "geoclr/kvconfig.hpp"
#include "json.hpp"

namespace geoclr {

/// Appearance of one habitat class. Frequencies are cycles per metre,
/// orientations radians from east.
struct ClassTexture {
  std::string name;
  std::array<double, 3> base_color{0.5, 0.5, 0.5};
  double noise_amplitude = 0.08;
  double stripe_frequency = 3.0;
  double stripe_orientation = 0.0;
  double stripe_amplitude = 0.1;
  double depth_offset = 0.0;  // added to the depth field inside this class
  // Each patch draws its own variant: colour shift in [-v, v] per channel and
  // a stripe frequency factor in [1 - v, 1 + v].
  double variant_color = 0.05;
  double variant_frequency = 0.2;
};

/// Per-image variation that is not tied to the seafloor: lighting, heading
/// wobble, colour cast.
struct ImagingNuisance {
  double illumination_min = 0.8;
  double illumination_max = 1.2;
  double orientation_jitter = 0.25;  // radians, std-dev
  double color_cast = 0.06;           // per-channel multiplicative, +/-
  double vignetting = 0.25;           // relative darkening at the corners
  double illumination_gradient = 0.3;  // peak-to-peak linear falloff across the tile
  int max_distractors = 3;             // small objects (shells, debris) per tile, 0..max
};

struct WorldConfig {
  double extent_east = 60.0;
  double extent_north = 60.0;
  int classes = 4;
  double patch_scale = 8.0;  // metres
  double tile_footprint = 1.5;  // metres imaged by one tile
  double base_depth = 30.0;
  double depth_relief = 4.0;
  int site_count = 0;  // Voronoi sites; 0 = round((extent/patch_scale)^2)
  // Relative share of sites per class; empty = equal shares (round-robin).
  std::vector<double> class_abundance{0.4, 0.3, 0.2, 0.1};
  std::vector<ClassTexture> textures;  // empty = defaults for `classes`
  ImagingNuisance nuisance;
  std::uint64_t seed = 1;

  void validate() const;  // throws UsageError
  /// Fills `textures` with the built-in palette when empty.
  WorldConfig resolved() const;
};

struct TrajectoryConfig {
  double line_spacing = 3.6;
  double interval = 0.5;  // along-track image spacing
  double east_min = 0.0;
  double east_max = 60.0;
  double north_min = 1.5;
  double north_max = 58.5;
  int dives = 4;  // consecutive lines are grouped into this many dives

  void validate(const WorldConfig& world) const;
};

struct Site {
  double easting = 0.0;
  double northing = 0.0;
  int label = 0;
  std::array<double, 3> color_shift{};
  double frequency_scale = 1.0;
};

/// Voronoi class field plus a smooth depth surface.
class World {
 public:
  World() = default;
  World(WorldConfig config, std::vector<Site> sites, std::array<double, 4> depth_phases);

  const WorldConfig& config() const { return config_; }
  const std::vector<Site>& sites() const { return sites_; }

  int class_at(double easting, double northing) const;
  double depth_at(double easting, double northing) const;
  /// Blending weights over classes; pure inside a patch, mixing within
  /// 0.2 * patch_scale of a boundary.
  std::vector<double> class_weights_at(double easting, double northing) const;
  /// As class_weights_at, also reporting the nearest site of each class.
  std::vector<double> class_weights_at(double easting, double northing, std::vector<int>& nearest_site) const;

  nlohmann::json to_json() const;

 private:
  WorldConfig config_;
  std::vector<Site> sites_;
  std::array<double, 4> depth_phases_{};
};

World generate_world(const WorldConfig& config);

/// Per-class area (m^2) of the class field inside the given rectangle,
/// integrated on a grid of `resolution` metres.
std::vector<double> patch_areas(const World& world, double resolution, double east_min, double east_max,
                                double north_min, double north_max);

struct SurveyPoint {
  double easting = 0.0;
  double northing = 0.0;
  double heading = 0.0;  // radians
  int dive = 0;
};

/// Boustrophedon lines parallel to east, alternating direction.
std::vector<SurveyPoint> lawnmower_path(const TrajectoryConfig& traj);

/// Number of images on a straight line of the given length.
int images_on_line(double length, double interval);

struct Survey {
  std::vector<GeorefImage> images;
  DatasetManifest manifest;  // paths "images/<id>.ppm"
};

Tile render_tile(const World& world, const SurveyPoint& at, int tile_size, std::uint64_t seed);

Survey generate_survey(const World& world, const TrajectoryConfig& traj, int tile_size, std::uint64_t seed,
                       int jobs = 0);

/// Writes manifest.csv, images/*.ppm and world.json into `dir`.
void write_survey(const std::string& dir, const Survey& survey, const World& world);

Dataset to_dataset(const Survey& survey);

/// Reads [world], [trajectory], [survey] sections of a simulate config file.
struct SimulationConfig {
  WorldConfig world;
  TrajectoryConfig trajectory;
  int tile_size = 32;
  std::uint64_t seed = 1;
};
SimulationConfig simulation_config_from(const KvConfig& kv);

}  // namespace geoclr
