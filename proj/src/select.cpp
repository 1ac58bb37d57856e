#include "geoclr/select.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "geoclr/common.hpp"

namespace geoclr {

namespace {

constexpr std::uint64_t kTopStream = 0x544f50;
constexpr std::uint64_t kSubStream = 0x535542;

double sq_dist(const Eigen::MatrixXd& x, Eigen::Index i, const Eigen::MatrixXd& c, Eigen::Index j) {
  return (x.row(i) - c.row(j)).squaredNorm();
}

// Nearest centroid per row, ties to the smaller cluster index.
double assign(const Eigen::MatrixXd& x, const Eigen::MatrixXd& c, std::vector<int>& out) {
  out.assign(static_cast<std::size_t>(x.rows()), 0);
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double best = INFINITY;
    for (Eigen::Index j = 0; j < c.rows(); ++j) {
      const double d = sq_dist(x, i, c, j);
      if (d < best) {
        best = d;
        out[static_cast<std::size_t>(i)] = static_cast<int>(j);
      }
    }
    total += best;
  }
  return total;
}

Eigen::MatrixXd plus_plus_seeds(const Eigen::MatrixXd& x, int k, Rng& rng) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd c(k, x.cols());
  std::vector<double> d2(static_cast<std::size_t>(n), INFINITY);
  std::size_t pick = uniform_index(rng, static_cast<std::size_t>(n));
  for (int j = 0; j < k; ++j) {
    c.row(j) = x.row(static_cast<Eigen::Index>(pick));
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], sq_dist(x, i, c, j));
      total += d2[static_cast<std::size_t>(i)];
    }
    if (j + 1 == k) break;
    if (total <= 0.0) {
      pick = uniform_index(rng, static_cast<std::size_t>(n));
      continue;
    }
    const double target = uniform(rng, 0.0, total);
    double acc = 0.0;
    pick = static_cast<std::size_t>(n - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      acc += d2[static_cast<std::size_t>(i)];
      if (acc > target && d2[static_cast<std::size_t>(i)] > 0.0) {
        pick = static_cast<std::size_t>(i);
        break;
      }
    }
  }
  return c;
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Balanced: return "balanced";
    case Strategy::Random: return "random";
    case Strategy::HKmeans: return "hkmeans";
  }
  return "?";
}

Strategy parse_strategy(const std::string& text) {
  if (text == "balanced") return Strategy::Balanced;
  if (text == "random") return Strategy::Random;
  if (text == "hkmeans") return Strategy::HKmeans;
  throw UsageError("unknown strategy '" + text + "' (expected balanced, random or hkmeans)");
}

void SelectionConfig::validate() const {
  if (M < 1) throw UsageError("select: M must be >= 1");
  if (m && (*m < 1 || *m > M)) throw UsageError("select: m must lie in [1, M]");
}

namespace {

ClusterModel lloyd(const Eigen::MatrixXd& x, int k, std::uint64_t seed) {
  Rng rng(seed);
  ClusterModel model;
  model.centroids = plus_plus_seeds(x, k, rng);
  model.distortion = assign(x, model.centroids, model.assignment);
  model.history.push_back(model.distortion);
  std::vector<int> next;
  for (int iter = 1; iter <= 100; ++iter) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const int a = model.assignment[static_cast<std::size_t>(i)];
      sums.row(a) += x.row(i);
      ++counts[static_cast<std::size_t>(a)];
    }
    std::vector<bool> taken(static_cast<std::size_t>(x.rows()), false);
    for (int j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        model.centroids.row(j) = sums.row(j) / counts[static_cast<std::size_t>(j)];
        continue;
      }
      Eigen::Index far = 0;
      double worst = -1.0;
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (taken[static_cast<std::size_t>(i)]) continue;
        const double d = sq_dist(x, i, model.centroids, model.assignment[static_cast<std::size_t>(i)]);
        if (d > worst) {
          worst = d;
          far = i;
        }
      }
      taken[static_cast<std::size_t>(far)] = true;
      model.centroids.row(j) = x.row(far);
    }
    model.distortion = assign(x, model.centroids, next);
    model.history.push_back(model.distortion);
    model.iterations = iter;
    const bool stable = next == model.assignment;
    model.assignment.swap(next);
    if (stable) break;
  }
  return model;
}

}  // namespace

ClusterModel kmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed, int restarts) {
  if (k < 1) throw UsageError("kmeans: k must be >= 1");
  if (restarts < 1) throw UsageError("kmeans: restarts must be >= 1");
  if (x.rows() < k)
    throw UsageError("kmeans: " + std::to_string(x.rows()) + " points cannot form " + std::to_string(k) + " clusters");
  ClusterModel best = lloyd(x, k, derive_seed(seed, {0}));
  for (int r = 1; r < restarts; ++r) {
    ClusterModel run = lloyd(x, k, derive_seed(seed, {static_cast<std::uint64_t>(r)}));
    if (run.distortion < best.distortion) best = std::move(run);
  }
  return best;
}

int elbow_knee(const std::vector<double>& d, int k_min) {
  if (d.size() < 3) throw UsageError("elbow: need at least 3 candidate k values");
  const double x_span = static_cast<double>(d.size() - 1);
  const double y_span = std::abs(d.front() - d.back());
  const double y_scale = y_span > 0.0 ? y_span : 1.0;
  // Normalised coordinates; the chord runs from (0, y0) to (1, y1).
  const double y0 = d.front() / y_scale, y1 = d.back() / y_scale;
  const double len = std::hypot(1.0, y1 - y0);
  int best = k_min;
  double best_dist = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double xi = static_cast<double>(i) / x_span, yi = d[i] / y_scale;
    const double dist = std::abs((y1 - y0) * xi - (yi - y0)) / len;
    if (dist > best_dist + 1e-12) {
      best_dist = dist;
      best = k_min + static_cast<int>(i);
    }
  }
  return best;
}

int elbow_choose_m(const Eigen::MatrixXd& vectors, int k_min, int k_max, std::uint64_t seed, int jobs) {
  if (k_min < 2 || k_max > vectors.rows() || k_max < k_min)
    throw UsageError("elbow: k range [" + std::to_string(k_min) + ", " + std::to_string(k_max) +
                     "] must lie within [2, n]");
  const std::size_t count = static_cast<std::size_t>(k_max - k_min + 1);
  if (count < 3) throw UsageError("elbow: need at least 3 candidate k values");
  std::vector<double> distortion(count);
  parallel_for(count, jobs, [&](std::size_t i) {
    const int k = k_min + static_cast<int>(i);
    distortion[i] = kmeans(vectors, k, derive_seed(seed, {static_cast<std::uint64_t>(k)})).distortion;
  });
  return elbow_knee(distortion, k_min);
}

std::vector<ImageId> select_hkmeans(const std::vector<ImageId>& ids, const Eigen::MatrixXd& latents, int M, int m,
                                    std::uint64_t seed) {
  const std::size_t n = ids.size();
  if (static_cast<std::size_t>(latents.rows()) != n) throw UsageError("select_hkmeans: ids and latents differ in size");
  if (M < 1 || m < 1 || m > M) throw UsageError("select_hkmeans: need 1 <= m <= M");
  if (n < static_cast<std::size_t>(M))
    throw DataError("select_hkmeans: " + std::to_string(n) + " images, fewer than M = " + std::to_string(M));

  const ClusterModel top = kmeans(latents, m, derive_seed(seed, {kTopStream}));
  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < n; ++i)
    members[static_cast<std::size_t>(top.assignment[i])].push_back(static_cast<Eigen::Index>(i));

  // Clusters by decreasing size, ties to the lower index.
  std::vector<int> by_size(static_cast<std::size_t>(m));
  std::iota(by_size.begin(), by_size.end(), 0);
  std::stable_sort(by_size.begin(), by_size.end(),
                   [&](int a, int b) { return members[static_cast<std::size_t>(a)].size() > members[static_cast<std::size_t>(b)].size(); });

  std::vector<int> quota(static_cast<std::size_t>(m), M / m);
  for (int r = 0; r < M % m; ++r) ++quota[static_cast<std::size_t>(by_size[static_cast<std::size_t>(r)])];
  int deficit = 0;
  for (int c = 0; c < m; ++c) {
    const int size = static_cast<int>(members[static_cast<std::size_t>(c)].size());
    if (quota[static_cast<std::size_t>(c)] > size) {
      deficit += quota[static_cast<std::size_t>(c)] - size;
      quota[static_cast<std::size_t>(c)] = size;
    }
  }
  while (deficit > 0)
    for (int c : by_size) {
      if (deficit == 0) break;
      if (quota[static_cast<std::size_t>(c)] < static_cast<int>(members[static_cast<std::size_t>(c)].size())) {
        ++quota[static_cast<std::size_t>(c)];
        --deficit;
      }
    }

  std::vector<ImageId> picks;
  for (int c = 0; c < m; ++c) {
    const auto& rows = members[static_cast<std::size_t>(c)];
    const int q = quota[static_cast<std::size_t>(c)];
    if (q == 0) continue;
    if (q == static_cast<int>(rows.size())) {
      std::vector<ImageId> all;
      for (Eigen::Index r : rows) all.push_back(ids[static_cast<std::size_t>(r)]);
      std::sort(all.begin(), all.end());
      picks.insert(picks.end(), all.begin(), all.end());
      continue;
    }
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(rows.size()), latents.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = latents.row(rows[i]);
    const ClusterModel fine = kmeans(sub, q, derive_seed(seed, {kSubStream, static_cast<std::uint64_t>(c)}));
    std::vector<bool> used(rows.size(), false);
    for (int j = 0; j < q; ++j) {
      // Nearest member of the sub-cluster; an empty sub-cluster falls back to
      // the nearest unused point of the top-level cluster.
      auto nearest = [&](bool members_only) {
        std::ptrdiff_t best = -1;
        double best_d = INFINITY;
        for (std::size_t i = 0; i < rows.size(); ++i) {
          if (used[i] || (members_only && fine.assignment[i] != j)) continue;
          const double d = sq_dist(sub, static_cast<Eigen::Index>(i), fine.centroids, j);
          const ImageId id = ids[static_cast<std::size_t>(rows[i])];
          if (d < best_d || (d == best_d && best >= 0 && id < ids[static_cast<std::size_t>(rows[static_cast<std::size_t>(best)])])) {
            best_d = d;
            best = static_cast<std::ptrdiff_t>(i);
          }
        }
        return best;
      };
      std::ptrdiff_t pick = nearest(true);
      if (pick < 0) pick = nearest(false);
      used[static_cast<std::size_t>(pick)] = true;
      picks.push_back(ids[static_cast<std::size_t>(rows[static_cast<std::size_t>(pick)])]);
    }
  }
  return picks;
}

std::vector<ImageId> select_random(const std::vector<ImageId>& ids, int M, std::uint64_t seed) {
  if (M < 1) throw UsageError("select_random: M must be >= 1");
  if (ids.size() < static_cast<std::size_t>(M))
    throw DataError("select_random: " + std::to_string(ids.size()) + " ids, fewer than M = " + std::to_string(M));
  std::vector<ImageId> pool = ids;
  std::sort(pool.begin(), pool.end());
  Rng rng = make_rng(seed, {0x524e44});
  for (std::size_t i = 0; i < static_cast<std::size_t>(M); ++i)
    std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  pool.resize(static_cast<std::size_t>(M));
  return pool;
}

std::vector<ImageId> select_balanced(const std::map<ImageId, int>& labels, int class_count, int M,
                                     std::uint64_t seed) {
  if (class_count < 1) throw UsageError("select_balanced: class count must be >= 1");
  if (M < 1 || M % class_count != 0)
    throw UsageError("select_balanced: M = " + std::to_string(M) + " is not divisible by C = " +
                     std::to_string(class_count));
  std::vector<std::vector<ImageId>> by_class(static_cast<std::size_t>(class_count));
  for (const auto& [id, label] : labels) {
    if (label < 0 || label >= class_count) throw DataError("select_balanced: label out of range for id " + std::to_string(id));
    by_class[static_cast<std::size_t>(label)].push_back(id);
  }
  const int per = M / class_count;
  std::vector<ImageId> picks;
  for (int c = 0; c < class_count; ++c) {
    auto& pool = by_class[static_cast<std::size_t>(c)];
    if (static_cast<int>(pool.size()) < per)
      throw DataError("select_balanced: class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                      " images, need " + std::to_string(per));
    Rng rng = make_rng(seed, {0x42414c, static_cast<std::uint64_t>(c)});
    for (std::size_t i = 0; i < static_cast<std::size_t>(per); ++i)
      std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
    picks.insert(picks.end(), pool.begin(), pool.begin() + per);
  }
  return picks;
}

std::vector<ImageId> select_annotations(const SelectionConfig& config, const std::vector<ImageId>& ids,
                                        const Eigen::MatrixXd& latents, const std::map<ImageId, int>& labels,
                                        int class_count, int jobs) {
  config.validate();
  switch (config.strategy) {
    case Strategy::Random: return select_random(ids, config.M, config.seed);
    case Strategy::Balanced: return select_balanced(labels, class_count, config.M, config.seed);
    case Strategy::HKmeans: {
      int m = 0;
      if (config.m) {
        m = *config.m;
      } else {
        const int k_max = std::min({20, config.M, static_cast<int>(ids.size())});
        m = k_max >= 4 ? elbow_choose_m(latents, 2, k_max, derive_seed(config.seed, {0x454c42}), jobs)
                       : std::max(1, k_max);
      }
      return select_hkmeans(ids, latents, config.M, m, config.seed);
    }
  }
  throw UsageError("select: unknown strategy");
}

void write_selection(const std::string& path, const std::vector<ImageId>& ids) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write selection: " + path);
  f << "rank,id\n";
  for (std::size_t i = 0; i < ids.size(); ++i) f << i + 1 << ',' << ids[i] << '\n';
  if (!f) throw DataError("write failed: " + path);
}

std::vector<ImageId> read_selection(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open selection: " + path);
  std::string line;
  std::getline(f, line);
  if (line != "rank,id") throw DataError(path + ":1: expected header 'rank,id'");
  std::vector<ImageId> ids;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    try {
      if (comma == std::string::npos) throw std::invalid_argument("no comma");
      std::size_t used = 0;
      const std::string rest = line.substr(comma + 1);
      ids.push_back(std::stoll(rest, &used));
      if (used != rest.size()) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(lineno) + ": malformed row '" + line + "'");
    }
  }
  return ids;
}

}  // namespace geoclr
