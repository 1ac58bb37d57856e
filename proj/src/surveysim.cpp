#include "geoclr/surveysim.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "geoclr/common.hpp"

namespace geoclr {

namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

std::vector<ClassTexture> default_textures(int classes, std::uint64_t seed) {
  std::vector<ClassTexture> t = {
      {"sand", {0.62, 0.57, 0.44}, 0.07, 3.0, 0.0, 0.10, 0.0},
      {"kelp", {0.38, 0.42, 0.27}, 0.09, 4.5, 1.5708, 0.14, 0.0},
      {"rock", {0.47, 0.46, 0.44}, 0.12, 2.2, 0.7854, 0.09, 0.0},
      {"reef", {0.53, 0.44, 0.38}, 0.09, 3.8, 2.3562, 0.12, 0.0},
  };
  t.resize(static_cast<std::size_t>(std::max(classes, 0)));
  Rng rng = make_rng(seed, {0x7465});
  for (std::size_t c = 4; c < t.size(); ++c) {
    t[c].name = "class" + std::to_string(c);
    for (double& v : t[c].base_color) v = uniform(rng, 0.3, 0.7);
    t[c].noise_amplitude = uniform(rng, 0.05, 0.12);
    t[c].stripe_frequency = uniform(rng, 2.0, 5.0);
    t[c].stripe_orientation = uniform(rng, 0.0, M_PI);
    t[c].stripe_amplitude = uniform(rng, 0.06, 0.14);
  }
  return t;
}

}  // namespace

void WorldConfig::validate() const {
  if (classes < 2) throw UsageError("world: need at least 2 classes");
  if (!(extent_east > 0.0 && extent_north > 0.0)) throw UsageError("world: extent must be positive");
  if (!(tile_footprint > 0.0)) throw UsageError("world: tile footprint must be positive");
  if (!(patch_scale > tile_footprint)) throw UsageError("world: patch_scale must exceed the tile footprint");
  if (depth_relief < 0.0 || base_depth < 0.0) throw UsageError("world: depths must be >= 0");
  if (site_count < 0) throw UsageError("world: site_count must be >= 0");
  if (!textures.empty() && static_cast<int>(textures.size()) != classes)
    throw UsageError("world: texture count must equal class count");
  if (!class_abundance.empty()) {
    if (static_cast<int>(class_abundance.size()) != classes)
      throw UsageError("world: class_abundance needs one value per class");
    for (double a : class_abundance)
      if (!(a > 0.0)) throw UsageError("world: class abundances must be > 0");
  }
  if (nuisance.max_distractors < 0) throw UsageError("world: max_distractors must be >= 0");
  if (nuisance.illumination_min > nuisance.illumination_max || nuisance.illumination_min <= 0.0)
    throw UsageError("world: bad illumination range");
}

WorldConfig WorldConfig::resolved() const {
  WorldConfig c = *this;
  if (c.textures.empty()) c.textures = default_textures(c.classes, c.seed);
  return c;
}

void TrajectoryConfig::validate(const WorldConfig& world) const {
  if (!(interval > 0.0)) throw UsageError("trajectory: interval must be > 0");
  if (!(line_spacing > 0.0)) throw UsageError("trajectory: line spacing must be > 0");
  if (dives < 1) throw UsageError("trajectory: need at least one dive");
  if (east_min < 0.0 || north_min < 0.0 || east_max > world.extent_east || north_max > world.extent_north ||
      east_min >= east_max || north_min > north_max)
    throw UsageError("trajectory: swath must lie inside the world extent");
}

World::World(WorldConfig config, std::vector<Site> sites, std::array<double, 4> depth_phases)
    : config_(std::move(config)), sites_(std::move(sites)), depth_phases_(depth_phases) {}

int World::class_at(double e, double n) const {
  double best = INFINITY;
  int label = 0;
  for (const Site& s : sites_) {
    const double d = (s.easting - e) * (s.easting - e) + (s.northing - n) * (s.northing - n);
    if (d < best) {
      best = d;
      label = s.label;
    }
  }
  return label;
}

double World::depth_at(double e, double n) const {
  const double ex = config_.extent_east, nx = config_.extent_north;
  const double smooth = 0.6 * std::sin(kTwoPi * e / ex + depth_phases_[0]) * std::cos(kTwoPi * n / nx + depth_phases_[1]) +
                        0.4 * std::sin(kTwoPi * (0.5 * e / ex + 0.7 * n / nx) + depth_phases_[2]);
  double d = config_.base_depth + 0.5 * config_.depth_relief * smooth;
  d += config_.textures[static_cast<std::size_t>(class_at(e, n))].depth_offset;
  return std::max(0.0, d);
}

std::vector<double> World::class_weights_at(double e, double n) const {
  std::vector<int> unused;
  return class_weights_at(e, n, unused);
}

std::vector<double> World::class_weights_at(double e, double n, std::vector<int>& nearest_site) const {
  const std::size_t c_count = static_cast<std::size_t>(config_.classes);
  std::vector<double> nearest(c_count, INFINITY);
  nearest_site.assign(c_count, -1);
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    const Site& s = sites_[i];
    const double d = std::hypot(s.easting - e, s.northing - n);
    const auto c = static_cast<std::size_t>(s.label);
    if (d < nearest[c]) {
      nearest[c] = d;
      nearest_site[c] = static_cast<int>(i);
    }
  }
  const double own = *std::min_element(nearest.begin(), nearest.end());
  const double band = 0.2 * config_.patch_scale;
  std::vector<double> w(c_count, 0.0);
  double total = 0.0;
  for (std::size_t c = 0; c < c_count; ++c) {
    // Half the distance gap approximates the distance to the bisector.
    const double gap = 0.5 * (nearest[c] - own);
    w[c] = std::max(0.0, 1.0 - gap / band);
    total += w[c];
  }
  for (double& v : w) v /= total;
  return w;
}

nlohmann::json World::to_json() const {
  nlohmann::json sites = nlohmann::json::array();
  for (const Site& s : sites_)
    sites.push_back({{"easting", s.easting},
                     {"northing", s.northing},
                     {"label", s.label},
                     {"color_shift", s.color_shift},
                     {"frequency_scale", s.frequency_scale}});
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& t : config_.textures)
    classes.push_back({{"name", t.name},
                       {"base_color", t.base_color},
                       {"noise_amplitude", t.noise_amplitude},
                       {"stripe_frequency", t.stripe_frequency},
                       {"stripe_orientation", t.stripe_orientation},
                       {"stripe_amplitude", t.stripe_amplitude},
                       {"depth_offset", t.depth_offset},
                       {"variant_color", t.variant_color},
                       {"variant_frequency", t.variant_frequency}});
  return {{"extent", {config_.extent_east, config_.extent_north}},
          {"patch_scale", config_.patch_scale},
          {"tile_footprint", config_.tile_footprint},
          {"base_depth", config_.base_depth},
          {"depth_relief", config_.depth_relief},
          {"depth_phases", depth_phases_},
          {"seed", config_.seed},
          {"class_abundance", config_.class_abundance},
          {"classes", classes},
          {"sites", sites}};
}

World generate_world(const WorldConfig& input) {
  input.validate();
  WorldConfig config = input.resolved();
  Rng rng = make_rng(config.seed, {0x776f726c64});
  int count = config.site_count;
  if (count == 0)
    count = std::max(config.classes, static_cast<int>(std::lround((config.extent_east / config.patch_scale) *
                                                                  (config.extent_north / config.patch_scale))));
  // Sites per class in proportion to abundance (largest remainder, at least
  // one each); equal abundance reduces to round-robin.
  const std::size_t C = static_cast<std::size_t>(config.classes);
  std::vector<double> share = config.class_abundance;
  if (share.empty()) share.assign(C, 1.0);
  const double share_total = std::accumulate(share.begin(), share.end(), 0.0);
  count = std::max(count, config.classes);
  std::vector<int> per(C, 0);
  int assigned = 0;
  std::vector<std::pair<double, std::size_t>> remainder;
  for (std::size_t c = 0; c < C; ++c) {
    const double exact = share[c] / share_total * count;
    per[c] = static_cast<int>(std::floor(exact));
    assigned += per[c];
    remainder.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainder.begin(), remainder.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < count; ++k, ++assigned) ++per[remainder[k % C].second];
  // Every class keeps at least one site, taken from the most plentiful class.
  for (std::size_t c = 0; c < C; ++c)
    if (per[c] == 0) {
      ++per[c];
      --*std::max_element(per.begin(), per.end());
    }
  std::vector<int> labels;
  for (int round = 0; static_cast<int>(labels.size()) < count; ++round)
    for (std::size_t c = 0; c < C; ++c)
      if (round < per[c]) labels.push_back(static_cast<int>(c));
  for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[uniform_index(rng, i)]);
  std::vector<Site> sites(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < sites.size(); ++i) {
    sites[i].easting = uniform(rng, 0.0, config.extent_east);
    sites[i].northing = uniform(rng, 0.0, config.extent_north);
    sites[i].label = labels[i];
    const ClassTexture& t = config.textures[static_cast<std::size_t>(labels[i])];
    for (double& v : sites[i].color_shift) v = uniform(rng, -t.variant_color, t.variant_color);
    sites[i].frequency_scale = uniform(rng, 1.0 - t.variant_frequency, 1.0 + t.variant_frequency);
  }
  std::array<double, 4> phases{};
  for (double& p : phases) p = uniform(rng, 0.0, kTwoPi);
  return World(std::move(config), std::move(sites), phases);
}

std::vector<double> patch_areas(const World& world, double resolution, double east_min, double east_max,
                                double north_min, double north_max) {
  std::vector<double> area(static_cast<std::size_t>(world.config().classes), 0.0);
  const int ne = std::max(1, static_cast<int>(std::lround((east_max - east_min) / resolution)));
  const int nn = std::max(1, static_cast<int>(std::lround((north_max - north_min) / resolution)));
  const double de = (east_max - east_min) / ne, dn = (north_max - north_min) / nn;
  for (int i = 0; i < ne; ++i)
    for (int j = 0; j < nn; ++j)
      area[static_cast<std::size_t>(world.class_at(east_min + (i + 0.5) * de, north_min + (j + 0.5) * dn))] += de * dn;
  return area;
}

int images_on_line(double length, double interval) {
  return static_cast<int>(std::floor(length / interval + 1e-9)) + 1;
}

std::vector<SurveyPoint> lawnmower_path(const TrajectoryConfig& traj) {
  std::vector<double> lines;
  for (double n = traj.north_min; n <= traj.north_max + 1e-9; n += traj.line_spacing) lines.push_back(n);
  const int per_line = images_on_line(traj.east_max - traj.east_min, traj.interval);
  const std::size_t lines_per_dive =
      (lines.size() + static_cast<std::size_t>(traj.dives) - 1) / static_cast<std::size_t>(traj.dives);
  std::vector<SurveyPoint> path;
  for (std::size_t l = 0; l < lines.size(); ++l) {
    const bool eastward = l % 2 == 0;
    for (int i = 0; i < per_line; ++i) {
      SurveyPoint p;
      const double along = i * traj.interval;
      p.easting = eastward ? traj.east_min + along : traj.east_max - along;
      p.northing = lines[l];
      p.heading = eastward ? 0.0 : M_PI;
      p.dive = static_cast<int>(l / lines_per_dive) + 1;
      path.push_back(p);
    }
  }
  return path;
}

Tile render_tile(const World& world, const SurveyPoint& at, int tile_size, std::uint64_t seed) {
  const WorldConfig& cfg = world.config();
  const ImagingNuisance& nz = cfg.nuisance;
  Rng rng(seed);
  const double illum = uniform(rng, nz.illumination_min, nz.illumination_max);
  std::array<double, 3> cast{};
  for (double& c : cast) c = 1.0 + uniform(rng, -nz.color_cast, nz.color_cast);
  const double wobble = nz.orientation_jitter * standard_normal(rng);
  std::vector<double> phase(static_cast<std::size_t>(cfg.classes));
  for (double& p : phase) p = uniform(rng, 0.0, kTwoPi);
  const double light_dir = uniform(rng, 0.0, kTwoPi);

  struct Blob {
    double x, y, radius;
    std::array<double, 3> color;
  };
  std::vector<Blob> blobs(uniform_index(rng, static_cast<std::size_t>(nz.max_distractors) + 1));
  for (Blob& b : blobs) {
    b.x = uniform(rng, 0.0, tile_size);
    b.y = uniform(rng, 0.0, tile_size);
    b.radius = uniform(rng, 0.04, 0.1) * tile_size;
    for (double& c : b.color) c = uniform(rng, 0.15, 0.85);
  }

  const double f = cfg.tile_footprint;
  const double ch = std::cos(at.heading), sh = std::sin(at.heading);
  const auto& sites = world.sites();
  Tile tile(tile_size, tile_size);
  std::vector<int> nearest;
  for (int py = 0; py < tile_size; ++py)
    for (int px = 0; px < tile_size; ++px) {
      const double u = ((px + 0.5) / tile_size - 0.5) * f;  // along track
      const double v = ((py + 0.5) / tile_size - 0.5) * f;  // across track
      const double e = at.easting + u * ch - v * sh;
      const double n = at.northing + u * sh + v * ch;
      const std::vector<double> w = world.class_weights_at(e, n, nearest);
      const double noise = standard_normal(rng);
      const double vignette = 1.0 - nz.vignetting * (u * u + v * v) / (0.5 * f * f);
      const double ramp =
          1.0 + nz.illumination_gradient * (u * std::cos(light_dir) + v * std::sin(light_dir)) / f;
      std::array<double, 3> surface{};
      double noise_amp = 0.0;
      for (std::size_t c = 0; c < w.size(); ++c) {
        if (w[c] == 0.0) continue;
        const ClassTexture& t = cfg.textures[c];
        const Site& site = sites[static_cast<std::size_t>(nearest[c])];
        const double theta = t.stripe_orientation + wobble;
        const double stripe = std::sin(kTwoPi * t.stripe_frequency * site.frequency_scale *
                                           (e * std::cos(theta) + n * std::sin(theta)) +
                                       phase[c]);
        for (std::size_t k = 0; k < 3; ++k)
          surface[k] += w[c] * (t.base_color[k] + site.color_shift[k] + t.stripe_amplitude * stripe);
        noise_amp += w[c] * t.noise_amplitude;
      }
      for (const Blob& b : blobs) {
        const double alpha = std::clamp(b.radius - std::hypot(px + 0.5 - b.x, py + 0.5 - b.y) + 0.5, 0.0, 1.0);
        for (std::size_t k = 0; k < 3; ++k) surface[k] += alpha * (b.color[k] - surface[k]);
      }
      for (int k = 0; k < 3; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        const double value = surface[kk] * illum * cast[kk] * vignette * ramp + noise_amp * noise;
        // 8-bit quantisation so in-memory tiles equal their decoded files.
        tile.at(py, px, k) = std::lround(std::clamp(value, 0.0, 1.0) * 255.0) / 255.0;
      }
    }
  return tile;
}

Survey generate_survey(const World& world, const TrajectoryConfig& traj, int tile_size, std::uint64_t seed, int jobs) {
  traj.validate(world.config());
  if (tile_size < 4) throw UsageError("survey: tile size must be >= 4");
  const std::vector<SurveyPoint> path = lawnmower_path(traj);
  Survey s;
  s.images.resize(path.size());
  parallel_for(path.size(), jobs, [&](std::size_t i) {
    const SurveyPoint& p = path[i];
    GeorefImage& img = s.images[i];
    img.id = static_cast<ImageId>(i);
    img.georef = {p.easting, p.northing, world.depth_at(p.easting, p.northing)};
    img.dive = p.dive;
    img.label = world.class_at(p.easting, p.northing);
    img.pixels = render_tile(world, p, tile_size, derive_seed(seed, {0x74696c65, i}));
  });
  s.manifest.tile_size = tile_size;
  for (const auto& t : world.config().textures) s.manifest.class_names.push_back(t.name);
  for (const auto& img : s.images) {
    ManifestRecord r;
    r.id = img.id;
    char name[32];
    std::snprintf(name, sizeof name, "images/%06lld.ppm", static_cast<long long>(img.id));
    r.path = name;
    r.georef = img.georef;
    r.dive = img.dive;
    r.label = s.manifest.class_names[static_cast<std::size_t>(*img.label)];
    s.manifest.records.push_back(std::move(r));
  }
  return s;
}

void write_survey(const std::string& dir, const Survey& survey, const World& world) {
  fs::create_directories(fs::path(dir) / "images");
  for (std::size_t i = 0; i < survey.images.size(); ++i)
    write_ppm((fs::path(dir) / survey.manifest.records[i].path).string(), tile_to_rgb(survey.images[i].pixels));
  write_manifest((fs::path(dir) / "manifest.csv").string(), survey.manifest);
  std::ofstream f(fs::path(dir) / "world.json", std::ios::binary);
  if (!f) throw DataError("cannot write world.json in " + dir);
  f << world.to_json().dump(2) << "\n";
}

Dataset to_dataset(const Survey& survey) {
  Dataset d;
  d.images = survey.images;
  d.class_names = survey.manifest.class_names;
  d.tile_size = survey.manifest.tile_size;
  d.reindex();
  return d;
}

SimulationConfig simulation_config_from(const KvConfig& kv) {
  SimulationConfig s;
  WorldConfig& w = s.world;
  w.extent_east = kv.get_double("world.extent_east", w.extent_east);
  w.extent_north = kv.get_double("world.extent_north", w.extent_north);
  w.classes = static_cast<int>(kv.get_int("world.classes", w.classes));
  w.patch_scale = kv.get_double("world.patch_scale", w.patch_scale);
  w.tile_footprint = kv.get_double("world.tile_footprint", w.tile_footprint);
  w.base_depth = kv.get_double("world.base_depth", w.base_depth);
  w.depth_relief = kv.get_double("world.depth_relief", w.depth_relief);
  w.site_count = static_cast<int>(kv.get_int("world.site_count", w.site_count));
  w.seed = static_cast<std::uint64_t>(kv.get_int("world.seed", static_cast<long long>(w.seed)));
  w.nuisance.illumination_min = kv.get_double("nuisance.illumination_min", w.nuisance.illumination_min);
  w.nuisance.illumination_max = kv.get_double("nuisance.illumination_max", w.nuisance.illumination_max);
  w.nuisance.orientation_jitter = kv.get_double("nuisance.orientation_jitter", w.nuisance.orientation_jitter);
  w.nuisance.color_cast = kv.get_double("nuisance.color_cast", w.nuisance.color_cast);
  w.nuisance.vignetting = kv.get_double("nuisance.vignetting", w.nuisance.vignetting);
  w.nuisance.illumination_gradient = kv.get_double("nuisance.illumination_gradient", w.nuisance.illumination_gradient);
  w.nuisance.max_distractors = static_cast<int>(kv.get_int("nuisance.max_distractors", w.nuisance.max_distractors));
  if (kv.has("world.class_abundance") || w.classes != static_cast<int>(w.class_abundance.size()))
    w.class_abundance = kv.get_doubles("world.class_abundance", {});
  w = w.resolved();
  for (int c = 0; c < w.classes; ++c) {
    ClassTexture& t = w.textures[static_cast<std::size_t>(c)];
    const std::string p = "class" + std::to_string(c) + ".";
    t.name = kv.get_string(p + "name", t.name);
    const auto color = kv.get_doubles(p + "base_color", {t.base_color[0], t.base_color[1], t.base_color[2]});
    if (color.size() != 3) throw DataError("config key '" + p + "base_color' needs 3 values");
    t.base_color = {color[0], color[1], color[2]};
    t.noise_amplitude = kv.get_double(p + "noise_amplitude", t.noise_amplitude);
    t.stripe_frequency = kv.get_double(p + "stripe_frequency", t.stripe_frequency);
    t.stripe_orientation = kv.get_double(p + "stripe_orientation", t.stripe_orientation);
    t.stripe_amplitude = kv.get_double(p + "stripe_amplitude", t.stripe_amplitude);
    t.depth_offset = kv.get_double(p + "depth_offset", t.depth_offset);
    t.variant_color = kv.get_double(p + "variant_color", t.variant_color);
    t.variant_frequency = kv.get_double(p + "variant_frequency", t.variant_frequency);
  }
  TrajectoryConfig& t = s.trajectory;
  t.line_spacing = kv.get_double("trajectory.line_spacing", t.line_spacing);
  t.interval = kv.get_double("trajectory.interval", t.interval);
  t.east_min = kv.get_double("trajectory.east_min", t.east_min);
  t.east_max = kv.get_double("trajectory.east_max", t.east_max);
  t.north_min = kv.get_double("trajectory.north_min", t.north_min);
  t.north_max = kv.get_double("trajectory.north_max", t.north_max);
  t.dives = static_cast<int>(kv.get_int("trajectory.dives", t.dives));
  s.tile_size = static_cast<int>(kv.get_int("survey.tile_size", s.tile_size));
  s.seed = static_cast<std::uint64_t>(kv.get_int("survey.seed", static_cast<long long>(s.seed)));
  const auto unknown = kv.unknown_keys();
  if (!unknown.empty()) throw UsageError("unknown simulate config key '" + unknown.front() + "'");
  s.world.validate();
  s.trajectory.validate(s.world);
  return s;
}

}  // namespace geoclr
