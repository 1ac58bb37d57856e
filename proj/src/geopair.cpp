#include "geoclr/geopair.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace geoclr {

void PairSamplerConfig::validate() const {
  if (!(r >= 0.0) || !std::isfinite(r)) throw UsageError("pair sampler: r must be finite and >= 0");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw UsageError("pair sampler: lambda must be finite and >= 0");
}

double weighted_distance(const GeoRef& a, const GeoRef& b, double lambda) {
  const double de = b.easting - a.easting;
  const double dn = b.northing - a.northing;
  const double dd = b.depth - a.depth;
  return std::sqrt(de * de + dn * dn + lambda * dd * dd);
}

std::size_t GeoIndex::CellHash::operator()(const CellKey& k) const {
  std::uint64_t h = mix_seed(static_cast<std::uint64_t>(k.x));
  h = mix_seed(h ^ static_cast<std::uint64_t>(k.y));
  h = mix_seed(h ^ static_cast<std::uint64_t>(k.z));
  return static_cast<std::size_t>(h);
}

GeoIndex::GeoIndex(const std::vector<GeorefImage>& images, const PairSamplerConfig& config) : config_(config) {
  std::vector<ImageId> ids;
  std::vector<GeoRef> geo;
  ids.reserve(images.size());
  geo.reserve(images.size());
  for (const auto& img : images) {
    ids.push_back(img.id);
    geo.push_back(img.georef);
  }
  *this = GeoIndex(ids, geo, config);
}

GeoIndex::GeoIndex(const std::vector<ImageId>& ids, const std::vector<GeoRef>& georefs,
                   const PairSamplerConfig& config)
    : config_(config), ids_(ids), georefs_(georefs) {
  config_.validate();
  if (ids_.empty()) throw DataError("build_index: empty image list");
  if (ids_.size() != georefs_.size()) throw std::invalid_argument("build_index: ids/georefs size mismatch");
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!georefs_[i].valid()) throw DataError("build_index: invalid georeference for id " + std::to_string(ids_[i]));
    if (!slot_.emplace(ids_[i], i).second) throw DataError("build_index: duplicate id " + std::to_string(ids_[i]));
  }
  if (config_.r == 0.0) return;
  vertical_edge_ = config_.lambda > 0.0 ? config_.r / std::sqrt(config_.lambda) : 0.0;
  for (std::size_t i = 0; i < ids_.size(); ++i) cells_[cell_of(georefs_[i])].push_back(i);
}

GeoIndex::CellKey GeoIndex::cell_of(const GeoRef& g) const {
  const double r = config_.r;
  CellKey k{static_cast<std::int64_t>(std::floor(g.easting / r)), static_cast<std::int64_t>(std::floor(g.northing / r)),
            0};
  if (vertical_edge_ > 0.0) k.z = static_cast<std::int64_t>(std::floor(g.depth / vertical_edge_));
  return k;
}

std::size_t GeoIndex::slot_of(ImageId id) const {
  auto it = slot_.find(id);
  if (it == slot_.end()) throw DataError("unknown anchor id " + std::to_string(id));
  return it->second;
}

std::vector<ImageId> GeoIndex::neighbors(ImageId anchor) const {
  const std::size_t a = slot_of(anchor);
  std::vector<ImageId> out;
  if (config_.r == 0.0) return out;
  const GeoRef& g = georefs_[a];
  const CellKey c = cell_of(g);
  const int zspan = vertical_edge_ > 0.0 ? 1 : 0;
  for (std::int64_t dx = -1; dx <= 1; ++dx)
    for (std::int64_t dy = -1; dy <= 1; ++dy)
      for (std::int64_t dz = -zspan; dz <= zspan; ++dz) {
        auto it = cells_.find(CellKey{c.x + dx, c.y + dy, c.z + dz});
        if (it == cells_.end()) continue;
        for (std::size_t j : it->second)
          if (j != a && weighted_distance(g, georefs_[j], config_.lambda) <= config_.r) out.push_back(ids_[j]);
      }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<ImageId> GeoIndex::neighbors_brute_force(ImageId anchor) const {
  const std::size_t a = slot_of(anchor);
  std::vector<ImageId> out;
  if (config_.r == 0.0) return out;
  for (std::size_t j = 0; j < ids_.size(); ++j)
    if (j != a && weighted_distance(georefs_[a], georefs_[j], config_.lambda) <= config_.r) out.push_back(ids_[j]);
  std::sort(out.begin(), out.end());
  return out;
}

GeoIndex build_index(const std::vector<GeorefImage>& images, const PairSamplerConfig& config) {
  return GeoIndex(images, config);
}

ImageId sample_similar(const GeoIndex& index, ImageId anchor, Rng& rng) {
  const std::vector<ImageId> candidates = index.neighbors(anchor);
  if (candidates.empty()) return anchor;
  return candidates[uniform_index(rng, candidates.size())];
}

}  // namespace geoclr
