#include <regex>
#include <set>

#include "doctest.h"
#include "geoclr/common.hpp"
#include "geoclr/report.hpp"
#include "geoclr/surveysim.hpp"
#include "test_util.hpp"

using namespace geoclr;

namespace {

Dataset points(const std::vector<std::tuple<double, double, double, int, int>>& rows) {
  Dataset d;
  d.class_names = {"a", "b", "c"};
  ImageId id = 1;
  for (const auto& [e, n, depth, dive, label] : rows) {
    GeorefImage img;
    img.id = id++;
    img.georef = {e, n, depth};
    img.dive = dive;
    img.label = label;
    d.images.push_back(img);
  }
  d.reindex();
  return d;
}

std::map<ImageId, int> truth(const Dataset& d) {
  std::map<ImageId, int> m;
  for (const auto& img : d.images) m[img.id] = *img.label;
  return m;
}

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("proportions of a single-class dive") {
  Dataset d = points({{0, 0, 5, 1, 2}, {1, 0, 5, 1, 2}, {2, 0, 5, 1, 2}});
  ProportionTable t = class_proportions(truth(d), d, 3);
  REQUIRE(t.dives == std::vector<int>{1});
  CHECK(t.row(1) == std::vector<double>{0.0, 0.0, 1.0});
  CHECK_THROWS_AS(t.row(2), DataError);
}

TEST_CASE("dives are tabulated independently") {
  Dataset d = points({{0, 0, 5, 1, 0}, {1, 0, 5, 1, 1}, {2, 0, 5, 2, 2}, {3, 0, 5, 2, 2}, {4, 0, 5, 2, 0}, {5, 0, 5, 2, 1}});
  ProportionTable t = class_proportions(truth(d), d, 3);
  CHECK(t.dives == std::vector<int>{1, 2});
  CHECK(t.counts == std::vector<std::size_t>{2, 4});
  CHECK(t.row(1) == std::vector<double>{0.5, 0.5, 0.0});
  CHECK(t.row(2) == std::vector<double>{0.25, 0.25, 0.5});

  ProportionTable only_two = class_proportions({{3, 2}, {4, 2}}, d, 3);
  CHECK(only_two.dives == std::vector<int>{2});
  CHECK(only_two.row(2) == std::vector<double>{0.0, 0.0, 1.0});

  CHECK_THROWS_AS(class_proportions({{99, 0}}, d, 3), DataError);
  CHECK_THROWS_AS(class_proportions({{1, 3}}, d, 3), DataError);
  std::vector<double> l1 = proportion_l1(only_two, t);
  CHECK(l1 == std::vector<double>{1.0});
}

TEST_CASE("proportions sum to one on a survey") {
  WorldConfig w;
  w.extent_east = w.extent_north = 20.0;
  w.patch_scale = 4.0;
  TrajectoryConfig traj;
  traj.east_max = 20.0;
  traj.north_max = 18.5;
  traj.line_spacing = 2.0;
  traj.dives = 3;
  Dataset d = to_dataset(generate_survey(generate_world(w), traj, 8, 1));
  ProportionTable t = true_proportions(d);
  CHECK(t.dives.size() == 3);
  for (const auto& row : t.fractions) {
    double s = 0.0;
    for (double v : row) s += v;
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("map structure") {
  Dataset d = points({{0, 0, 5, 1, 0}, {3, 1, 6, 1, 1}, {5, 4, 7, 1, 1}});
  const std::string svg = map_svg(truth(d), d);
  CHECK(count_of(svg, "<circle") == 3);
  std::set<std::string> fills;
  const std::regex fill_re("<circle[^>]*fill=\"([^\"]+)\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), fill_re); it != std::sregex_iterator(); ++it)
    fills.insert((*it)[1]);
  CHECK(fills.size() == 2);
  CHECK(fills.count(class_palette()[0]) == 1);
  CHECK(fills.count(class_palette()[1]) == 1);

  const std::string empty = map_svg({}, Dataset{});
  CHECK(empty.rfind("<?xml", 0) == 0);
  CHECK(count_of(empty, "<svg") == 1);
  CHECK(count_of(empty, "</svg>") == 1);
  CHECK(count_of(empty, "<circle") == 0);

  const std::string csv = map_csv(truth(d), d);
  CHECK(csv.rfind("id,easting,northing,depth,dive,predicted,truth\n", 0) == 0);
  CHECK(count_of(csv, "\n") == 1 + d.size());
}

TEST_CASE("map files are byte-identical across runs") {
  WorldConfig w;
  w.extent_east = w.extent_north = 20.0;
  w.patch_scale = 4.0;
  TrajectoryConfig traj;
  traj.east_max = 20.0;
  traj.north_max = 18.5;
  traj.line_spacing = 3.0;
  traj.dives = 2;
  Dataset d = to_dataset(generate_survey(generate_world(w), traj, 8, 1));
  const std::string a = testutil::scratch("report_map_a"), b = testutil::scratch("report_map_b");
  habitat_map(truth(d), d, a);
  habitat_map(truth(d), d, b);
  for (const char* f : {"/map.svg", "/depth_profile.svg", "/map.csv"}) {
    CHECK(!testutil::slurp(a + f).empty());
    CHECK(testutil::slurp(a + f) == testutil::slurp(b + f));
  }
  testutil::spit(a + "/file", "x");
  CHECK_THROWS_AS(habitat_map(truth(d), d, a + "/file/sub"), DataError);
}

TEST_CASE("depth histogram bins") {
  Dataset flat = points({{0, 0, 30.0, 1, 0}, {1, 0, 30.0, 1, 1}, {2, 0, 30.0, 1, 1}});
  DepthHistogram h = class_depth_histogram(truth(flat), flat, 3, 5.0);
  CHECK(h.origin == 30.0);
  CHECK(h.total() == 3);
  for (const auto& row : h.counts) CHECK(row.size() == 1);
  CHECK(h.counts[1][0] == 2);
  CHECK_THROWS_AS(class_depth_histogram(truth(flat), flat, 3, 0.0), UsageError);

  // A depth exactly on a bin edge falls in the upper bin.
  Dataset edge = points({{0, 0, 29.0, 1, 0}, {0, 0, 30.0, 1, 0}, {0, 0, 34.999, 1, 0}, {0, 0, 35.0, 1, 0}});
  DepthHistogram he = class_depth_histogram(truth(edge), edge, 3, 5.0);
  CHECK(he.origin == 25.0);
  CHECK(he.counts[0] == std::vector<std::size_t>{1, 2, 1});

  const std::string dir = testutil::scratch("report_hist");
  write_depth_histogram(dir + "/h.csv", he, {"a", "b", "c"});
  CHECK(testutil::slurp(dir + "/h.csv").rfind("class,depth_lo,depth_hi,count\n", 0) == 0);
}

TEST_CASE("a depth-confined class stays in its band") {
  WorldConfig w;
  w.base_depth = 34.0;  // relief 4 keeps class 0 within [32, 36]
  w = w.resolved();
  for (std::size_t c = 1; c < w.textures.size(); ++c) w.textures[c].depth_offset = 20.0;
  Dataset d = to_dataset(generate_survey(generate_world(w), TrajectoryConfig{}, 8, 2));
  DepthHistogram h = class_depth_histogram(truth(d), d, 4, 2.0);
  std::size_t inside = 0;
  for (std::size_t b = 0; b < h.counts[0].size(); ++b) {
    const double lo = h.origin + static_cast<double>(b) * h.bin_width;
    if (lo >= 28.0 && lo + h.bin_width <= 40.0) inside += h.counts[0][b];
    else CHECK(h.counts[0][b] == 0);
  }
  CHECK(inside > 0);
  CHECK(h.total() == d.size());
}
