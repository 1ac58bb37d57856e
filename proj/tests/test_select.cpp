#include <algorithm>
#include <limits>
#include <set>

#include "doctest.h"
#include "geoclr/common.hpp"
#include "geoclr/select.hpp"
#include "test_util.hpp"

using namespace geoclr;

namespace {

// `per` points around each of `centres`, radius sigma; rows ordered by blob.
Eigen::MatrixXd blobs(const std::vector<Eigen::RowVectorXd>& centres, int per, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  const int d = static_cast<int>(centres[0].size());
  Eigen::MatrixXd x(static_cast<int>(centres.size()) * per, d);
  for (std::size_t b = 0; b < centres.size(); ++b)
    for (int i = 0; i < per; ++i)
      for (int j = 0; j < d; ++j) x(static_cast<int>(b) * per + i, j) = centres[b](j) + sigma * standard_normal(rng);
  return x;
}

std::vector<Eigen::RowVectorXd> square_centres(double side) {
  std::vector<Eigen::RowVectorXd> c(4, Eigen::RowVectorXd(2));
  c[0] << 0, 0;
  c[1] << side, 0;
  c[2] << 0, side;
  c[3] << side, side;
  return c;
}

std::vector<ImageId> iota_ids(int n, ImageId first = 0) {
  std::vector<ImageId> ids(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = first + i;
  return ids;
}

double sse(const Eigen::MatrixXd& x, const std::vector<int>& rows) {
  if (rows.empty()) return 0.0;
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(x.cols());
  for (int r : rows) mean += x.row(r);
  mean /= static_cast<double>(rows.size());
  double s = 0.0;
  for (int r : rows) s += (x.row(r) - mean).squaredNorm();
  return s;
}

// Optimal 2-means distortion by enumerating every bipartition.
double exhaustive_two_means(const Eigen::MatrixXd& x) {
  const int n = static_cast<int>(x.rows());
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask < (1u << (n - 1)); ++mask) {
    std::vector<int> a, b;
    for (int i = 0; i < n; ++i) (((mask >> i) & 1u) ? a : b).push_back(i);
    best = std::min(best, sse(x, a) + sse(x, b));
  }
  return best;
}

}  // namespace

TEST_CASE("k = n gives zero distortion") {
  Rng rng(1);
  Eigen::MatrixXd x(7, 3);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = standard_normal(rng);
  ClusterModel m = kmeans(x, 7, 3);
  CHECK(m.distortion == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::set<int>(m.assignment.begin(), m.assignment.end()).size() == 7);
  CHECK_THROWS_AS(kmeans(x, 8, 1), UsageError);
  CHECK_THROWS_AS(kmeans(x, 0, 1), UsageError);
}

TEST_CASE("separated blobs are recovered exactly") {
  Eigen::RowVectorXd a(2), b(2);
  a << 0, 0;
  b << 10, 0;
  Eigen::MatrixXd x = blobs({a, b}, 30, 1.0, 4);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ClusterModel m = kmeans(x, 2, seed);
    for (int i = 0; i < 30; ++i) {
      CHECK(m.assignment[static_cast<std::size_t>(i)] == m.assignment[0]);
      CHECK(m.assignment[static_cast<std::size_t>(30 + i)] == m.assignment[30]);
    }
    CHECK(m.assignment[0] != m.assignment[30]);
  }
}

TEST_CASE("distortion is monotone and consistent with the assignment") {
  Rng rng(5);
  Eigen::MatrixXd x(200, 4);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = standard_normal(rng);
  ClusterModel m = kmeans(x, 6, 2);
  for (std::size_t i = 1; i < m.history.size(); ++i) CHECK(m.history[i] <= m.history[i - 1] + 1e-12);
  double d = 0.0;
  for (int r = 0; r < x.rows(); ++r) {
    int nearest = 0;
    for (int c = 1; c < m.centroids.rows(); ++c)
      if ((x.row(r) - m.centroids.row(c)).squaredNorm() < (x.row(r) - m.centroids.row(nearest)).squaredNorm())
        nearest = c;
    CHECK(m.assignment[static_cast<std::size_t>(r)] == nearest);
    d += (x.row(r) - m.centroids.row(nearest)).squaredNorm();
  }
  CHECK(m.distortion == doctest::Approx(d).epsilon(1e-10));
}

TEST_CASE("two-means reaches the exhaustive optimum on small instances") {
  int hits = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed * 31);
    const int n = 6 + static_cast<int>(uniform_index(rng, 7));
    Eigen::MatrixXd x(n, 2);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = standard_normal(rng);
    if (std::abs(kmeans(x, 2, seed).distortion - exhaustive_two_means(x)) < 1e-9) ++hits;
  }
  CHECK(hits >= 8);
}

TEST_CASE("kmeans is deterministic") {
  Eigen::MatrixXd x = blobs(square_centres(5.0), 20, 1.0, 8);
  ClusterModel a = kmeans(x, 5, 11), b = kmeans(x, 5, 11);
  CHECK(a.assignment == b.assignment);
  CHECK(a.centroids == b.centroids);
}

TEST_CASE("elbow finds four blobs") {
  Eigen::MatrixXd x = blobs(square_centres(20.0), 25, 1.0, 9);
  CHECK(elbow_choose_m(x, 2, 12, 1) == 4);
  CHECK(elbow_choose_m(x, 2, 12, 1, 2) == 4);
}

TEST_CASE("elbow degenerate curves choose the smallest k") {
  CHECK(elbow_knee({10, 8, 6, 4, 2}, 3) == 3);
  CHECK(elbow_knee({0, 0, 0, 0}, 2) == 2);
  Eigen::MatrixXd same = Eigen::MatrixXd::Constant(30, 3, 0.25);
  CHECK(elbow_choose_m(same, 2, 8, 1) == 2);
  CHECK_THROWS_AS(elbow_knee({3, 2}, 2), UsageError);
}

TEST_CASE("hkmeans takes two per blob") {
  Eigen::MatrixXd x = blobs(square_centres(20.0), 25, 1.0, 10);
  std::vector<ImageId> ids = iota_ids(100, 1000);
  std::vector<ImageId> picks = select_hkmeans(ids, x, 8, 4, 3);
  REQUIRE(picks.size() == 8);
  std::vector<int> per(4, 0);
  for (ImageId id : picks) ++per[static_cast<std::size_t>((id - 1000) / 25)];
  CHECK(per == std::vector<int>{2, 2, 2, 2});
}

TEST_CASE("hkmeans exhaustive and remainder cases") {
  Rng rng(12);
  Eigen::MatrixXd x(10, 2);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = standard_normal(rng);
  std::vector<ImageId> ids = iota_ids(10, 50);
  std::vector<ImageId> all = select_hkmeans(ids, x, 10, 10, 1);
  std::sort(all.begin(), all.end());
  CHECK(all == ids);

  // Unequal blobs force the deficit path; the result stays exact and distinct.
  Eigen::RowVectorXd a(2), b(2);
  a << 0, 0;
  b << 50, 0;
  Eigen::MatrixXd big = blobs({a}, 60, 1.0, 1), small = blobs({b}, 3, 0.1, 2);
  Eigen::MatrixXd both(63, 2);
  both << big, small;
  std::vector<ImageId> picks = select_hkmeans(iota_ids(63), both, 11, 2, 5);
  CHECK(picks.size() == 11);
  CHECK(std::set<ImageId>(picks.begin(), picks.end()).size() == 11);
  CHECK(std::count_if(picks.begin(), picks.end(), [](ImageId id) { return id >= 60; }) == 3);
}

TEST_CASE("hkmeans covers every top-level cluster") {
  Rng rng(13);
  Eigen::MatrixXd x(300, 5);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = standard_normal(rng);
  std::vector<ImageId> ids = iota_ids(300);
  const int m = 6;
  std::vector<ImageId> picks = select_hkmeans(ids, x, 30, m, 4);
  CHECK(std::set<ImageId>(picks.begin(), picks.end()).size() == 30);
  ClusterModel top = kmeans(x, m, derive_seed(4, {0x544f50}));
  std::set<int> covered;
  for (ImageId id : picks) covered.insert(top.assignment[static_cast<std::size_t>(id)]);
  CHECK(static_cast<int>(covered.size()) == m);
}

TEST_CASE("random selection") {
  std::vector<ImageId> ids = iota_ids(40, 7);
  std::vector<ImageId> all = select_random(ids, 40, 3);
  std::sort(all.begin(), all.end());
  CHECK(all == ids);
  std::vector<ImageId> some = select_random(ids, 10, 3);
  CHECK(std::set<ImageId>(some.begin(), some.end()).size() == 10);
  CHECK(some == select_random(ids, 10, 3));
  CHECK_THROWS_AS(select_random(ids, 41, 3), DataError);
}

TEST_CASE("balanced selection") {
  std::map<ImageId, int> labels;
  for (int i = 0; i < 60; ++i) labels[i] = i % 6;
  std::vector<ImageId> picks = select_balanced(labels, 6, 6, 1);
  std::set<int> classes;
  for (ImageId id : picks) classes.insert(labels[id]);
  CHECK(classes.size() == 6);
  CHECK_THROWS_AS(select_balanced(labels, 6, 7, 1), UsageError);
  std::map<ImageId, int> missing;
  for (int i = 0; i < 50; ++i) missing[i] = i % 5;
  CHECK_THROWS_AS(select_balanced(missing, 6, 6, 1), DataError);
}

TEST_CASE("dispatch and selection files") {
  Eigen::MatrixXd x = blobs(square_centres(20.0), 25, 1.0, 14);
  std::vector<ImageId> ids = iota_ids(100);
  SelectionConfig cfg;
  cfg.M = 12;
  std::vector<ImageId> auto_m = select_annotations(cfg, ids, x, {}, 4);
  CHECK(auto_m.size() == 12);
  CHECK(auto_m == select_annotations(cfg, ids, x, {}, 4));
  cfg.m = 13;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  CHECK_THROWS_AS(parse_strategy("greedy"), UsageError);

  std::string dir = testutil::scratch("select_io");
  write_selection(dir + "/s.csv", auto_m);
  CHECK(read_selection(dir + "/s.csv") == auto_m);
  testutil::spit(dir + "/bad.csv", "rank,id\n0,x\n");
  CHECK_THROWS_AS(read_selection(dir + "/bad.csv"), DataError);
}
