#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "geoclr/imageio.hpp"

namespace geoclr {

using ImageId = std::int64_t;

/// Local metric georeference. Depth is positive down.
struct GeoRef {
  double easting = 0.0;
  double northing = 0.0;
  double depth = 0.0;

  bool valid() const;
  bool operator==(const GeoRef&) const = default;
};

/// H x W x 3 intensity tile, channels interleaved, values in [0, 1].
struct Tile {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tile() = default;
  Tile(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * 3, fill) {}

  double& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  bool operator==(const Tile&) const = default;
};

struct GeorefImage {
  ImageId id = 0;
  GeoRef georef;
  int dive = 0;
  Tile pixels;
  std::optional<int> label;  // index into the dataset's class_names
};

struct ManifestRecord {
  ImageId id = 0;
  std::string path;  // as written in the manifest
  GeoRef georef;
  int dive = 0;
  std::optional<std::string> label;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::vector<std::string> class_names;
  int tile_size = 32;
  std::string base_dir;  // relative image paths resolve against this

  std::optional<int> class_index(const std::string& name) const;
};

/// Immutable collection shared by every pipeline stage.
struct Dataset {
  std::vector<GeorefImage> images;
  std::vector<std::string> class_names;
  int tile_size = 32;

  std::size_t size() const { return images.size(); }
  std::size_t index_of(ImageId id) const;  // throws DataError for unknown ids
  const GeorefImage& by_id(ImageId id) const { return images[index_of(id)]; }
  std::vector<ImageId> ids() const;

  /// Rebuilds the id lookup; call after mutating `images`.
  void reindex();

 private:
  std::unordered_map<ImageId, std::size_t> lookup_;
};

/// Parses `id,path,easting,northing,depth,dive,label`. Errors name the line.
/// When `known_classes` is non-empty every label must be one of them and the
/// manifest keeps that class order.
DatasetManifest load_manifest(const std::string& path, int tile_size = 32,
                              const std::vector<std::string>& known_classes = {});
DatasetManifest parse_manifest(const std::string& text, const std::string& origin, int tile_size = 32,
                               const std::vector<std::string>& known_classes = {});
void write_manifest(const std::string& path, const DatasetManifest& manifest);

/// Center-crops to tile x tile and scales to [0, 1] (x / 255).
Tile tile_from_rgb(const RgbImage8& image, int tile_size, const std::string& origin = "<memory>");
RgbImage8 tile_to_rgb(const Tile& tile);

/// Decodes every record (optionally on `jobs` threads); output order matches
/// the manifest.
std::vector<GeorefImage> load_images(const DatasetManifest& manifest, int jobs = 0);

Dataset load_dataset(const std::string& manifest_path, int tile_size = 32, int jobs = 0);

}  // namespace geoclr
