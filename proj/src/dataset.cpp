#include "geoclr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "geoclr/common.hpp"

namespace geoclr {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestHeader = "id,path,easting,northing,depth,dive,label";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  out.push_back(field);
  return out;
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = first + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string format_coord(double v) {
  // Shortest round-trip representation so write/load is exact.
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

bool GeoRef::valid() const {
  return std::isfinite(easting) && std::isfinite(northing) && std::isfinite(depth) && depth >= 0.0;
}

std::optional<int> DatasetManifest::class_index(const std::string& name) const {
  for (std::size_t i = 0; i < class_names.size(); ++i)
    if (class_names[i] == name) return static_cast<int>(i);
  return std::nullopt;
}

std::size_t Dataset::index_of(ImageId id) const {
  if (lookup_.size() != images.size()) throw std::logic_error("Dataset::reindex() not called after mutation");
  auto it = lookup_.find(id);
  if (it == lookup_.end()) throw DataError("unknown image id " + std::to_string(id));
  return it->second;
}

std::vector<ImageId> Dataset::ids() const {
  std::vector<ImageId> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(img.id);
  return out;
}

void Dataset::reindex() {
  lookup_.clear();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!lookup_.emplace(images[i].id, i).second)
      throw DataError("duplicate image id " + std::to_string(images[i].id));
  }
}

DatasetManifest parse_manifest(const std::string& text, const std::string& origin, int tile_size,
                               const std::vector<std::string>& known_classes) {
  DatasetManifest m;
  m.tile_size = tile_size;
  m.class_names = known_classes;
  std::stringstream in(text);
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  std::set<ImageId> seen;
  auto fail = [&](const std::string& what) {
    throw DataError(origin + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header_seen) {
      if (lineno == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
      if (line != kManifestHeader) fail(std::string("expected header '") + kManifestHeader + "'");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 7) fail("expected 7 fields, got " + std::to_string(f.size()));
    ManifestRecord r;
    if (!parse_number(f[0], r.id)) fail("bad id '" + f[0] + "'");
    if (f[1].empty()) fail("empty path");
    r.path = f[1];
    if (!parse_number(f[2], r.georef.easting)) fail("bad easting '" + f[2] + "'");
    if (!parse_number(f[3], r.georef.northing)) fail("bad northing '" + f[3] + "'");
    if (!parse_number(f[4], r.georef.depth)) fail("bad depth '" + f[4] + "'");
    if (!r.georef.valid()) fail("georeference must be finite with depth >= 0");
    if (!parse_number(f[5], r.dive)) fail("bad dive '" + f[5] + "'");
    if (!seen.insert(r.id).second) fail("duplicate id " + f[0]);
    if (!f[6].empty()) {
      r.label = f[6];
      if (!m.class_index(f[6])) {
        if (!known_classes.empty()) fail("unknown label '" + f[6] + "'");
        m.class_names.push_back(f[6]);
      }
    }
    m.records.push_back(std::move(r));
  }
  if (!header_seen) throw DataError(origin + ": missing manifest header");
  return m;
}

DatasetManifest load_manifest(const std::string& path, int tile_size, const std::vector<std::string>& known_classes) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open manifest: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  DatasetManifest m = parse_manifest(ss.str(), path, tile_size, known_classes);
  m.base_dir = fs::path(path).parent_path().string();
  return m;
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write manifest: " + path);
  f << kManifestHeader << "\n";
  for (const auto& r : manifest.records) {
    f << r.id << "," << r.path << "," << format_coord(r.georef.easting) << "," << format_coord(r.georef.northing)
      << "," << format_coord(r.georef.depth) << "," << r.dive << "," << r.label.value_or("") << "\n";
  }
  if (!f) throw DataError("write failed: " + path);
}

Tile tile_from_rgb(const RgbImage8& image, int tile_size, const std::string& origin) {
  if (image.width < tile_size || image.height < tile_size)
    throw DataError("image " + origin + " is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                    ", smaller than tile size " + std::to_string(tile_size));
  const int x0 = (image.width - tile_size) / 2;
  const int y0 = (image.height - tile_size) / 2;
  Tile t(tile_size, tile_size);
  for (int y = 0; y < tile_size; ++y)
    for (int x = 0; x < tile_size; ++x)
      for (int c = 0; c < 3; ++c)
        t.at(y, x, c) =
            image.pixels[(static_cast<std::size_t>(y0 + y) * static_cast<std::size_t>(image.width) + static_cast<std::size_t>(x0 + x)) * 3 +
                         static_cast<std::size_t>(c)] /
            255.0;
  return t;
}

RgbImage8 tile_to_rgb(const Tile& tile) {
  RgbImage8 img;
  img.width = tile.width;
  img.height = tile.height;
  img.pixels.resize(tile.data.size());
  for (std::size_t i = 0; i < tile.data.size(); ++i) {
    const double v = std::clamp(tile.data[i], 0.0, 1.0);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return img;
}

std::vector<GeorefImage> load_images(const DatasetManifest& manifest, int jobs) {
  std::vector<GeorefImage> out(manifest.records.size());
  parallel_for(manifest.records.size(), jobs, [&](std::size_t i) {
    const auto& r = manifest.records[i];
    fs::path p(r.path);
    if (p.is_relative() && !manifest.base_dir.empty()) p = fs::path(manifest.base_dir) / p;
    GeorefImage& img = out[i];
    img.id = r.id;
    img.georef = r.georef;
    img.dive = r.dive;
    img.pixels = tile_from_rgb(read_image(p.string()), manifest.tile_size, p.string());
    if (r.label) {
      auto idx = manifest.class_index(*r.label);
      if (!idx) throw DataError("unresolvable label '" + *r.label + "' for id " + std::to_string(r.id));
      img.label = *idx;
    }
  });
  return out;
}

Dataset load_dataset(const std::string& manifest_path, int tile_size, int jobs) {
  const DatasetManifest m = load_manifest(manifest_path, tile_size);
  Dataset d;
  d.images = load_images(m, jobs);
  d.class_names = m.class_names;
  d.tile_size = tile_size;
  d.reindex();
  return d;
}

}  // namespace geoclr
