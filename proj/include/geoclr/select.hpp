#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geoclr/dataset.hpp"

namespace geoclr {

enum class Strategy { Balanced, Random, HKmeans };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& text);

struct SelectionConfig {
  int M = 100;
  Strategy strategy = Strategy::HKmeans;
  std::optional<int> m;  // top-level clusters; empty = elbow method
  std::uint64_t seed = 1;

  void validate() const;
};

struct ClusterModel {
  Eigen::MatrixXd centroids;           // k x d
  std::vector<int> assignment;         // row -> cluster
  double distortion = 0.0;             // sum of squared distances
  std::vector<double> history;         // distortion after each Lloyd iteration
  int iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations (at most 100, stopping once
/// assignments are stable). Empty clusters are re-seeded from the point
/// farthest from its centroid. The lowest-distortion run of `restarts`
/// independent seedings is returned (earliest on ties); `history` belongs to
/// that run.
ClusterModel kmeans(const Eigen::MatrixXd& vectors, int k, std::uint64_t seed, int restarts = 10);

/// Knee of the distortion-vs-k curve: the k whose point lies farthest from
/// the chord between the curve's endpoints. Ties go to the smallest k.
int elbow_choose_m(const Eigen::MatrixXd& vectors, int k_min, int k_max, std::uint64_t seed, int jobs = 0);
/// Same rule on a precomputed curve (distortions[i] belongs to k_min + i).
int elbow_knee(const std::vector<double>& distortions, int k_min);

/// Two-level k-means selection: m top-level clusters, then floor(M/m)
/// sub-clusters in each (remainder to the largest clusters); the id nearest
/// each sub-centroid is picked. `ids` name the rows of `latents`.
std::vector<ImageId> select_hkmeans(const std::vector<ImageId>& ids, const Eigen::MatrixXd& latents, int M, int m,
                                    std::uint64_t seed);

std::vector<ImageId> select_random(const std::vector<ImageId>& ids, int M, std::uint64_t seed);

/// M / C uniform draws per class; `labels` maps id -> class index in [0, C).
std::vector<ImageId> select_balanced(const std::map<ImageId, int>& labels, int class_count, int M,
                                     std::uint64_t seed);

/// Dispatches on config.strategy. `labels` is only used by the balanced strategy.
std::vector<ImageId> select_annotations(const SelectionConfig& config, const std::vector<ImageId>& ids,
                                        const Eigen::MatrixXd& latents, const std::map<ImageId, int>& labels,
                                        int class_count, int jobs = 0);

/// CSV `rank,id`.
void write_selection(const std::string& path, const std::vector<ImageId>& ids);
std::vector<ImageId> read_selection(const std::string& path);

}  // namespace geoclr
