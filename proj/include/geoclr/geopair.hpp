#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "geoclr/common.hpp"
#include "geoclr/dataset.hpp"

namespace geoclr {

struct PairSamplerConfig {
  double r = 1.0;       // closeness threshold, metres
  double lambda = 1.0;  // depth weight
  std::uint64_t rng_seed = 1;

  void validate() const;
};

/// sqrt(de^2 + dn^2 + lambda * dd^2)
double weighted_distance(const GeoRef& a, const GeoRef& b, double lambda);

/// Uniform 3D bucket grid over georeferences. Horizontal cell edge is r and
/// vertical edge r / sqrt(lambda), so every point within weighted distance r
/// lies in one of the 27 cells around the query (9 when lambda == 0, where the
/// vertical axis is collapsed). With r == 0 no image has neighbours.
class GeoIndex {
 public:
  GeoIndex(const std::vector<GeorefImage>& images, const PairSamplerConfig& config);
  GeoIndex(const std::vector<ImageId>& ids, const std::vector<GeoRef>& georefs, const PairSamplerConfig& config);

  const PairSamplerConfig& config() const { return config_; }
  std::size_t size() const { return ids_.size(); }
  bool contains(ImageId id) const { return slot_.count(id) != 0; }

  /// Ids (excluding `anchor`) within weighted distance r, ascending.
  std::vector<ImageId> neighbors(ImageId anchor) const;

  /// Brute-force O(n) version of neighbors(); test oracle.
  std::vector<ImageId> neighbors_brute_force(ImageId anchor) const;

 private:
  struct CellKey {
    std::int64_t x, y, z;
    bool operator==(const CellKey&) const = default;
  };
  struct CellHash {
    std::size_t operator()(const CellKey& k) const;
  };

  CellKey cell_of(const GeoRef& g) const;
  std::size_t slot_of(ImageId id) const;

  PairSamplerConfig config_;
  double vertical_edge_ = 0.0;
  std::vector<ImageId> ids_;
  std::vector<GeoRef> georefs_;
  std::unordered_map<ImageId, std::size_t> slot_;
  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> cells_;
};

GeoIndex build_index(const std::vector<GeorefImage>& images, const PairSamplerConfig& config);

/// Draws the similar partner for `anchor` uniformly from its neighbour set;
/// returns `anchor` itself when the set is empty.
ImageId sample_similar(const GeoIndex& index, ImageId anchor, Rng& rng);

}  // namespace geoclr
