#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "geoclr/cli.hpp"
#include "geoclr/select.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace geoclr;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

const char* kWorld = R"([world]
extent_east = 20.0
extent_north = 20.0
patch_scale = 5.0
seed = 4

[trajectory]
east_max = 20.0
north_max = 18.5
line_spacing = 1.5
dives = 2

[survey]
tile_size = 16
seed = 2
)";

// Runs the whole pipeline into `dir`; every step must succeed.
void pipeline(const std::string& dir) {
  testutil::spit(dir + "/world.toml", kWorld);
  const std::string sim = dir + "/survey", m = sim + "/manifest.csv";
  auto ok = [](const std::vector<std::string>& args) {
    const Run r = cli(args);
    INFO(args[0] << ": " << r.err);
    REQUIRE(r.code == 0);
  };
  ok({"simulate", "--config", dir + "/world.toml", "--out", sim});
  ok({"train", "--manifest", m, "--tile", "16", "--epochs", "2", "--batch", "16", "--out", dir + "/ck.bin"});
  ok({"embed", "--checkpoint", dir + "/ck.bin", "--manifest", m, "--out", dir + "/h.csv"});
  ok({"annotate", "--manifest", m, "--validation-per-class", "5", "--out", dir + "/val.csv"});
  ok({"select", "--latents", dir + "/h.csv", "--M", "100", "--exclude", dir + "/val.csv", "--out", dir + "/picks.csv"});
  ok({"annotate", "--manifest", m, "--selection", dir + "/picks.csv", "--out", dir + "/labels.csv"});
  ok({"classify", "--latents", dir + "/h.csv", "--annotations", dir + "/labels.csv", "--classifier", "svm",
      "--manifest", m, "--out", dir + "/model.bin"});
  ok({"evaluate", "--model", dir + "/model.bin", "--validation", dir + "/val.csv", "--latents", dir + "/h.csv",
      "--out", dir + "/results.csv"});
  ok({"classify", "--latents", dir + "/h.csv", "--annotations", dir + "/labels.csv", "--pseudo-finetune",
      "--checkpoint", dir + "/ck.bin", "--manifest", m, "--exclude", dir + "/val.csv", "--epochs", "1", "--out",
      dir + "/pl.bin"});
  ok({"evaluate", "--model", dir + "/pl.bin", "--validation", dir + "/val.csv", "--manifest", m, "--out",
      dir + "/pl_results.csv"});
  ok({"map", "--model", dir + "/model.bin", "--manifest", m, "--latents", dir + "/h.csv", "--out", dir + "/maps"});
}

std::map<std::string, std::string> snapshot(const std::string& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = testutil::slurp(e.path().string());
  return files;
}

}  // namespace

TEST_CASE("pipeline end to end is reproducible") {
  const std::string dir = testutil::scratch("cli_pipeline");
  pipeline(dir);

  const std::vector<ImageId> picks = read_selection(dir + "/picks.csv");
  CHECK(picks.size() == 100);
  CHECK(std::set<ImageId>(picks.begin(), picks.end()).size() == 100);
  for (const char* f : {"/survey/run.json", "/ck.bin.run.json", "/h.csv.run.json", "/picks.csv.run.json",
                        "/model.bin.run.json", "/results.csv.run.json", "/maps/run.json", "/ck.bin.loss.csv"})
    CHECK_MESSAGE(fs::exists(dir + f), f);
  const auto run = nlohmann::json::parse(testutil::slurp(dir + "/ck.bin.run.json"));
  CHECK(run["command"] == "train");
  CHECK(run["config"]["epochs"] == 2);
  CHECK(testutil::slurp(dir + "/results.csv").find("macro,") != std::string::npos);
  for (const char* f : {"/maps/map.svg", "/maps/depth_profile.svg", "/maps/map.csv", "/maps/proportions.csv"})
    CHECK_MESSAGE(fs::exists(dir + f), f);

  const auto first = snapshot(dir);
  pipeline(dir);
  const auto second = snapshot(dir);
  REQUIRE(first.size() == second.size());
  for (const auto& [name, content] : first) CHECK_MESSAGE(second.at(name) == content, name);
}

TEST_CASE("geoclr with r = 0 logs the same losses as simclr") {
  const std::string dir = testutil::scratch("cli_degenerate");
  testutil::spit(dir + "/world.toml", kWorld);
  REQUIRE(cli({"simulate", "--config", dir + "/world.toml", "--out", dir + "/s"}).code == 0);
  const std::string m = dir + "/s/manifest.csv";
  const std::vector<std::string> common{"--manifest", m, "--tile", "16", "--epochs", "2", "--batch", "16"};
  auto train = [&](std::vector<std::string> extra, const std::string& out) {
    std::vector<std::string> args{"train"};
    args.insert(args.end(), common.begin(), common.end());
    args.insert(args.end(), extra.begin(), extra.end());
    args.insert(args.end(), {"--out", out});
    return cli(args).code;
  };
  REQUIRE(train({"--mode", "geoclr", "--r", "0"}, dir + "/g.bin") == 0);
  REQUIRE(train({"--mode", "simclr"}, dir + "/s.bin") == 0);
  CHECK(testutil::slurp(dir + "/g.bin.loss.csv") == testutil::slurp(dir + "/s.bin.loss.csv"));
}

TEST_CASE("sweep writes per-seed rows and a summary") {
  const std::string dir = testutil::scratch("cli_sweep");
  testutil::spit(dir + "/world.toml", kWorld);
  REQUIRE(cli({"simulate", "--config", dir + "/world.toml", "--out", dir + "/s"}).code == 0);
  testutil::spit(dir + "/grid.toml",
                 "[grid]\nmodes = [\"geoclr\", \"simclr\"]\nM = [20]\nrepeats = 2\n"
                 "[train]\nepochs = 1\nbatch = 16\ntile = 16\n[protocol]\nvalidation_per_class = 5\n");
  const Run r = cli({"sweep", "--grid", dir + "/grid.toml", "--manifest", dir + "/s/manifest.csv", "--out",
                     dir + "/table.csv"});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const std::string rows = testutil::slurp(dir + "/table.csv");
  CHECK(std::count(rows.begin(), rows.end(), '\n') == 1 + 2 * 2);
  CHECK(fs::exists(dir + "/table_summary.csv"));
  CHECK(fs::exists(dir + "/table.csv.run.json"));
}

TEST_CASE("errors give non-zero exit codes") {
  const std::string dir = testutil::scratch("cli_errors");
  CHECK(cli({"train", "--no-such-flag"}).code != 0);
  CHECK(cli({}).code != 0);
  CHECK(cli({"frobnicate"}).code != 0);
  CHECK(cli({"embed", "--checkpoint", dir + "/missing.bin", "--manifest", dir + "/missing.csv", "--out", dir + "/h"})
            .code != 0);

  testutil::spit(dir + "/world.toml", kWorld);
  REQUIRE(cli({"simulate", "--config", dir + "/world.toml", "--out", dir + "/s"}).code == 0);
  const std::string m = dir + "/s/manifest.csv";
  const Run bad_mode = cli({"train", "--manifest", m, "--tile", "16", "--mode", "byol", "--out", dir + "/x.bin"});
  CHECK(bad_mode.code == 1);
  CHECK(bad_mode.err.find("byol") != std::string::npos);

  // A manifest is not a checkpoint.
  const Run wrong = cli({"embed", "--checkpoint", m, "--manifest", m, "--out", dir + "/h.csv"});
  CHECK(wrong.code == 2);
  CHECK_FALSE(wrong.err.empty());

  testutil::spit(dir + "/bad.toml", "[world]\nunknown_key = 3\n");
  CHECK(cli({"simulate", "--config", dir + "/bad.toml", "--out", dir + "/t"}).code == 1);
  CHECK(cli({"--help"}).code == 0);
}
