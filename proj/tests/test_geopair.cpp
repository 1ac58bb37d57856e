#include <algorithm>
#include <cmath>
#include <map>

#include "doctest.h"
#include "geoclr/geopair.hpp"

using namespace geoclr;

namespace {

PairSamplerConfig cfg(double r, double lambda) {
  PairSamplerConfig c;
  c.r = r;
  c.lambda = lambda;
  return c;
}

GeoIndex line_index(int n, double spacing, double r) {
  std::vector<ImageId> ids;
  std::vector<GeoRef> g;
  for (int i = 0; i < n; ++i) {
    ids.push_back(i);
    g.push_back({i * spacing, 0.0, 20.0});
  }
  return GeoIndex(ids, g, cfg(r, 1.0));
}

// Independent O(n^2) neighbour scan over raw coordinates.
std::vector<ImageId> naive_neighbors(const std::vector<GeoRef>& g, std::size_t a, double r, double lambda) {
  std::vector<ImageId> out;
  for (std::size_t b = 0; b < g.size(); ++b) {
    if (b == a) continue;
    double de = g[a].easting - g[b].easting, dn = g[a].northing - g[b].northing, dd = g[a].depth - g[b].depth;
    if (std::sqrt(de * de + dn * dn + lambda * dd * dd) <= r) out.push_back(static_cast<ImageId>(b));
  }
  return out;
}

}  // namespace

TEST_CASE("weighted distance examples") {
  CHECK(weighted_distance({0, 0, 0}, {0.6, 0, 0.8}, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(weighted_distance({0, 0, 0}, {0, 0, 100}, 0.0) == 0.0);
  CHECK(weighted_distance({0, 0, 0}, {0.6, 0, 0.4}, 4.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("negative parameters are rejected") {
  CHECK_THROWS_AS(cfg(-1.0, 1.0).validate(), UsageError);
  CHECK_THROWS_AS(cfg(1.0, -0.5).validate(), UsageError);
}

TEST_CASE("single image has no neighbours and pairs with itself") {
  GeoIndex idx = line_index(1, 0.5, 1.0);
  CHECK(idx.neighbors(0).empty());
  Rng rng(3);
  CHECK(sample_similar(idx, 0, rng) == 0);
}

TEST_CASE("collinear images") {
  GeoIndex idx = line_index(3, 0.5, 1.0);
  CHECK(idx.neighbors(1) == std::vector<ImageId>{0, 2});
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    ImageId p = sample_similar(idx, 1, rng);
    CHECK((p == 0 || p == 2));
  }
}

TEST_CASE("single neighbour is always chosen") {
  GeoIndex idx = line_index(2, 0.7, 1.0);
  Rng rng(9);
  for (int k = 0; k < 20; ++k) CHECK(sample_similar(idx, 0, rng) == 1);
}

TEST_CASE("r = 0 means no neighbours") {
  std::vector<ImageId> ids{0, 1};
  std::vector<GeoRef> g{{1, 1, 1}, {1, 1, 1}};
  GeoIndex idx(ids, g, cfg(0.0, 1.0));
  CHECK(idx.neighbors(0).empty());
  Rng rng(1);
  CHECK(sample_similar(idx, 0, rng) == 0);
}

TEST_CASE("unknown anchor and empty input") {
  GeoIndex idx = line_index(3, 0.5, 1.0);
  Rng rng(1);
  CHECK_THROWS_AS(idx.neighbors(42), DataError);
  CHECK_THROWS_AS(sample_similar(idx, 42, rng), DataError);
  CHECK_THROWS_AS(GeoIndex(std::vector<ImageId>{}, std::vector<GeoRef>{}, cfg(1, 1)), DataError);
}

TEST_CASE("uniform choice among four neighbours") {
  std::vector<ImageId> ids{0, 1, 2, 3, 4};
  std::vector<GeoRef> g{{0, 0, 0}, {0.5, 0, 0}, {-0.5, 0, 0}, {0, 0.5, 0}, {0, -0.5, 0}};
  GeoIndex idx(ids, g, cfg(0.6, 1.0));
  REQUIRE(idx.neighbors(0).size() == 4);
  Rng rng(11);
  const int draws = 100000;
  std::map<ImageId, int> hits;
  for (int k = 0; k < draws; ++k) ++hits[sample_similar(idx, 0, rng)];
  const double sigma = std::sqrt(0.25 * 0.75 / draws);
  for (ImageId id = 1; id <= 4; ++id) CHECK(std::abs(hits[id] / double(draws) - 0.25) < 3 * sigma);
}

TEST_CASE("index matches brute force on random points") {
  for (double lambda : {0.0, 1.0, 4.0}) {
    Rng rng(17);
    std::vector<ImageId> ids;
    std::vector<GeoRef> g;
    for (int i = 0; i < 500; ++i) {
      ids.push_back(i);
      g.push_back({uniform(rng, 0, 12), uniform(rng, 0, 12), uniform(rng, 20, 23)});
    }
    GeoIndex idx(ids, g, cfg(1.0, lambda));
    for (std::size_t a = 0; a < g.size(); ++a) {
      auto got = idx.neighbors(static_cast<ImageId>(a));
      CHECK(got == naive_neighbors(g, a, 1.0, lambda));
      CHECK(got == idx.neighbors_brute_force(static_cast<ImageId>(a)));
    }
  }
}

TEST_CASE("neighbour sets grow with r and shrink with lambda") {
  Rng rng(23);
  std::vector<ImageId> ids;
  std::vector<GeoRef> g;
  for (int i = 0; i < 300; ++i) {
    ids.push_back(i);
    g.push_back({uniform(rng, 0, 8), uniform(rng, 0, 8), uniform(rng, 20, 22)});
  }
  GeoIndex small(ids, g, cfg(0.7, 1.0)), large(ids, g, cfg(1.3, 1.0)), heavy(ids, g, cfg(0.7, 5.0));
  for (ImageId id : ids) {
    auto a = small.neighbors(id), b = large.neighbors(id), c = heavy.neighbors(id);
    CHECK(std::includes(b.begin(), b.end(), a.begin(), a.end()));
    CHECK(std::includes(a.begin(), a.end(), c.begin(), c.end()));
  }
}

TEST_CASE("sampling is deterministic under seed") {
  GeoIndex idx = line_index(30, 0.3, 1.0);
  Rng a(99), b(99);
  for (ImageId id = 0; id < 30; ++id) CHECK(sample_similar(idx, id, a) == sample_similar(idx, id, b));
}
