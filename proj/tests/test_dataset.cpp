#include <cstdint>
#include <filesystem>

#include "doctest.h"
#include "geoclr/common.hpp"
#include "geoclr/dataset.hpp"
#include "geoclr/imageio.hpp"
#include "test_util.hpp"

using namespace geoclr;

namespace {

const char* kHeader = "id,path,easting,northing,depth,dive,label\n";

RgbImage8 gradient_image(int w, int h) {
  RgbImage8 img{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c] = static_cast<std::uint8_t>((x * 5 + y * 3 + c * 40) % 256);
  return img;
}

}  // namespace

TEST_CASE("manifest class names follow order of appearance") {
  std::string text = std::string(kHeader) +
                     "1,a.png,0,0,10,0,kelp\n"
                     "2,b.png,1,0,10,0,sand\n"
                     "3,c.png,2,0,10,1,kelp\n";
  DatasetManifest m = parse_manifest(text, "t");
  REQUIRE(m.records.size() == 3);
  CHECK(m.class_names == std::vector<std::string>{"kelp", "sand"});
  CHECK(m.records[1].label == "sand");
  CHECK(m.records[2].dive == 1);
}

TEST_CASE("header-only manifest is empty") {
  DatasetManifest m = parse_manifest(kHeader, "t");
  CHECK(m.records.empty());
  CHECK(m.class_names.empty());
}

TEST_CASE("bad number reports its line") {
  std::string text = std::string(kHeader) + "1,a.png,0,0,10,0,kelp\n2,b.png,0,0,abc,0,kelp\n";
  try {
    parse_manifest(text, "m.csv");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("m.csv:3") != std::string::npos);
  }
}

TEST_CASE("empty label means unlabelled") {
  DatasetManifest m = parse_manifest(std::string(kHeader) + "5,a.png,0,0,1,0,\n", "t");
  REQUIRE(m.records.size() == 1);
  CHECK_FALSE(m.records[0].label.has_value());
}

TEST_CASE("duplicate ids are rejected") {
  std::string text = std::string(kHeader) + "1,a.png,0,0,10,0,kelp\n1,b.png,0,0,10,0,kelp\n";
  std::string dir = testutil::scratch("dataset_dup");
  testutil::spit(dir + "/m.csv", text);
  write_png(dir + "/a.png", gradient_image(32, 32));
  write_png(dir + "/b.png", gradient_image(32, 32));
  CHECK_THROWS_AS(load_dataset(dir + "/m.csv"), DataError);
}

TEST_CASE("center crop and normalisation") {
  RgbImage8 img = gradient_image(40, 40);
  Tile t = tile_from_rgb(img, 32);
  REQUIRE(t.height == 32);
  REQUIRE(t.width == 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c) {
        std::uint8_t src = img.pixels[(static_cast<std::size_t>(y + 4) * 40 + (x + 4)) * 3 + c];
        CHECK(t.at(y, x, c) == src / 255.0);
      }
}

TEST_CASE("black image gives zeros") {
  RgbImage8 img{32, 32, std::vector<std::uint8_t>(32 * 32 * 3, 0)};
  Tile t = tile_from_rgb(img, 32);
  for (double v : t.data) CHECK(v == 0.0);
}

TEST_CASE("too small image is rejected") {
  RgbImage8 img = gradient_image(16, 16);
  CHECK_THROWS_AS(tile_from_rgb(img, 32), DataError);
}

TEST_CASE("png and ppm decode to the same pixels") {
  std::string dir = testutil::scratch("dataset_codec");
  RgbImage8 img = gradient_image(33, 35);
  write_png(dir + "/x.png", img);
  write_ppm(dir + "/x.ppm", img);
  RgbImage8 a = read_image(dir + "/x.png");
  RgbImage8 b = read_image(dir + "/x.ppm");
  CHECK(a.pixels == img.pixels);
  CHECK(b.pixels == img.pixels);
  CHECK(a.width == 33);
  CHECK(a.height == 35);
  CHECK_THROWS_AS(read_image(dir + "/missing.png"), DataError);
  testutil::spit(dir + "/junk.png", "not an image");
  CHECK_THROWS_AS(read_image(dir + "/junk.png"), DataError);
}

TEST_CASE("manifest round trip and deterministic loading") {
  std::string dir = testutil::scratch("dataset_roundtrip");
  std::filesystem::create_directories(dir + "/img");
  DatasetManifest m;
  m.class_names = {"sand", "reef"};
  for (int i = 0; i < 4; ++i) {
    ManifestRecord r;
    r.id = 100 + i;
    r.path = "img/" + std::to_string(i) + ".png";
    r.georef = {0.1 * i + 1.0 / 3.0, -2.5 * i, 30.0 + i / 7.0};
    r.dive = i / 2;
    if (i != 3) r.label = m.class_names[static_cast<std::size_t>(i % 2)];
    m.records.push_back(r);
    write_png(dir + "/" + r.path, gradient_image(32 + i, 32));
  }
  write_manifest(dir + "/m.csv", m);
  DatasetManifest back = load_manifest(dir + "/m.csv");
  REQUIRE(back.records.size() == m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    CHECK(back.records[i].id == m.records[i].id);
    CHECK(back.records[i].georef == m.records[i].georef);
    CHECK(back.records[i].dive == m.records[i].dive);
    CHECK(back.records[i].label == m.records[i].label);
  }
  Dataset a = load_dataset(dir + "/m.csv");
  Dataset b = load_dataset(dir + "/m.csv", 32, 2);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.images[i].pixels == b.images[i].pixels);
    CHECK(a.images[i].label == b.images[i].label);
  }
  CHECK(a.by_id(102).label == 0);
  CHECK_FALSE(a.by_id(103).label.has_value());
  CHECK_THROWS_AS(a.by_id(7), DataError);
}

TEST_CASE("known classes fix the order") {
  DatasetManifest m = parse_manifest(std::string(kHeader) + "1,a.png,0,0,1,0,kelp\n", "t", 32, {"sand", "kelp"});
  CHECK(m.class_names == std::vector<std::string>{"sand", "kelp"});
  CHECK_THROWS_AS(parse_manifest(std::string(kHeader) + "1,a.png,0,0,1,0,rock\n", "t", 32, {"sand", "kelp"}),
                  DataError);
}
