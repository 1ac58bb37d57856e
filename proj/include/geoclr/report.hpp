#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "geoclr/dataset.hpp"

namespace geoclr {

/// Per-dive class fractions.
struct ProportionTable {
  int class_count = 0;
  std::vector<int> dives;                       // ascending
  std::vector<std::size_t> counts;              // images per dive
  std::vector<std::vector<double>> fractions;   // [dive row][class]

  const std::vector<double>& row(int dive) const;  // throws DataError for unknown dives
};

/// Fractions of `labels` (id -> class) per dive. Every id must exist in
/// `dataset`.
ProportionTable class_proportions(const std::map<ImageId, int>& labels, const Dataset& dataset, int class_count);

/// Ground-truth proportions of the labelled images in `dataset`.
ProportionTable true_proportions(const Dataset& dataset);

/// L1 distance between the rows of two tables, per dive of `estimate`.
std::vector<double> proportion_l1(const ProportionTable& estimate, const ProportionTable& truth);

void write_proportions(const std::string& path, const ProportionTable& table,
                       const std::vector<std::string>& class_names);

/// Fixed class colours; class k uses palette[k % size].
const std::vector<std::string>& class_palette();

/// Writes map.svg (easting/northing scatter, one circle per image),
/// depth_profile.svg (depth vs image index per dive, segments coloured by
/// class) and map.csv (`id,easting,northing,depth,dive,predicted,truth`)
/// into `dir`. Output is a pure function of the inputs.
void habitat_map(const std::map<ImageId, int>& predictions, const Dataset& dataset, const std::string& dir);

std::string map_svg(const std::map<ImageId, int>& predictions, const Dataset& dataset);
std::string depth_profile_svg(const std::map<ImageId, int>& predictions, const Dataset& dataset);
std::string map_csv(const std::map<ImageId, int>& predictions, const Dataset& dataset);

/// counts[class][bin] over half-open bins [origin + k*w, origin + (k+1)*w);
/// origin is floor(min depth / w) * w.
struct DepthHistogram {
  double origin = 0.0;
  double bin_width = 1.0;
  std::vector<std::vector<std::size_t>> counts;

  std::size_t total() const;
};

DepthHistogram class_depth_histogram(const std::map<ImageId, int>& predictions, const Dataset& dataset,
                                     int class_count, double bin_width);

/// CSV `class,depth_lo,depth_hi,count`.
void write_depth_histogram(const std::string& path, const DepthHistogram& hist,
                           const std::vector<std::string>& class_names);

}  // namespace geoclr
