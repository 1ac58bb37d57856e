#include <cmath>
#include <numeric>

#include "doctest.h"
#include "geoclr/contrastive.hpp"
#include "test_util.hpp"

using namespace geoclr;

namespace {

// Literal double loop over the NT-Xent terms, no log-sum-exp.
double naive_loss(const Eigen::MatrixXd& z, double tau) {
  const int n = static_cast<int>(z.rows());
  auto sim = [&](int a, int b) { return z.row(a).dot(z.row(b)) / (z.row(a).norm() * z.row(b).norm()); };
  auto ell = [&](int i, int j) {
    double denom = 0.0;
    for (int k = 0; k < n; ++k)
      if (k != i) denom += std::exp(sim(i, k) / tau);
    return -std::log(std::exp(sim(i, j) / tau) / denom);
  };
  double total = 0.0;
  for (int k = 0; k < n / 2; ++k) total += ell(2 * k, 2 * k + 1) + ell(2 * k + 1, 2 * k);
  return total / n;
}

Eigen::MatrixXd random_z(int rows, int cols, Rng& rng) {
  Eigen::MatrixXd z(rows, cols);
  for (int i = 0; i < z.size(); ++i) z.data()[i] = standard_normal(rng);
  return z;
}

Dataset toy_dataset(int n, int size, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.tile_size = size;
  d.class_names = {"a", "b"};
  for (int i = 0; i < n; ++i) {
    GeorefImage img;
    img.id = i;
    img.georef = {0.5 * (i % 8), 0.5 * (i / 8), 10.0};
    img.pixels = Tile(size, size);
    const int cls = (i % 8) < 4 ? 0 : 1;
    img.label = cls;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        for (int c = 0; c < 3; ++c)
          img.pixels.at(y, x, c) =
              std::clamp(0.5 + 0.3 * (cls ? std::sin(1.5 * x) : std::cos(1.2 * y)) * (c + 1) / 3.0 +
                             0.05 * standard_normal(rng), 0.0, 1.0);
    d.images.push_back(std::move(img));
  }
  d.reindex();
  return d;
}

TrainConfig toy_train(PairMode mode, int epochs, std::uint64_t seed) {
  TrainConfig t;
  t.mode = mode;
  t.encoder.input_size = 8;
  t.encoder.conv_blocks = {{8, 2}, {16, 2}};
  t.encoder.latent_dim = 16;
  t.encoder.projection_dim = 8;
  t.loss.batch_size = 16;
  t.loss.temperature = 0.2;
  t.optimizer.learning_rate = 3e-3;
  t.epochs = epochs;
  t.seed = seed;
  t.jobs = 1;
  return t;
}

}  // namespace

TEST_CASE("single positive pair with equal rows has zero loss") {
  Eigen::MatrixXd z(2, 3);
  z << 1, 2, 3, 1, 2, 3;
  CHECK(pairwise_loss(z, 0, 1, 0.5) == 0.0);
}

TEST_CASE("two-pair closed form") {
  Eigen::MatrixXd z(4, 2);
  z << 1, 0, 1, 0, 0, 1, 0, 1;
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
  CHECK(expected == doctest::Approx(0.5514).epsilon(1e-4));
  CHECK(std::abs(pairwise_loss(z, 0, 1, 1.0) - expected) < 1e-12);
  CHECK(std::abs(batch_loss(z, 1.0) - expected) < 1e-12);
}

TEST_CASE("identical rows give log(2N - 1)") {
  for (int N : {2, 5, 16}) {
    Eigen::MatrixXd z = Eigen::MatrixXd::Constant(2 * N, 4, 0.7);
    CHECK(batch_loss(z, 0.07) == doctest::Approx(std::log(2.0 * N - 1)).epsilon(1e-12));
  }
}

TEST_CASE("scale invariance and stability") {
  Rng rng(1);
  Eigen::MatrixXd z = random_z(8, 4, rng);
  CHECK(pairwise_loss(5.0 * z, 2, 3, 0.3) == doctest::Approx(pairwise_loss(z, 2, 3, 0.3)).epsilon(1e-12));
  const double big = batch_loss(z, 1.0 / 400.0);
  CHECK(std::isfinite(big));
  Eigen::MatrixXd zero = z;
  zero.row(3).setZero();
  CHECK_THROWS_AS(batch_loss(zero, 0.1), NumericalError);
  CHECK_THROWS_AS(batch_loss(z.topRows(2), 0.1), UsageError);
  CHECK_THROWS_AS(batch_loss(z.topRows(5), 0.1), UsageError);
}

TEST_CASE("batch loss matches the naive transcription") {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const int N = 2 + static_cast<int>(uniform_index(rng, 31));
    const double tau = uniform(rng, 0.05, 1.0);
    Eigen::MatrixXd z = random_z(2 * N, 8, rng);
    CHECK(std::abs(batch_loss(z, tau) - naive_loss(z, tau)) < 1e-9);
  }
}

TEST_CASE("pair order does not matter") {
  Rng rng(3);
  Eigen::MatrixXd z = random_z(12, 5, rng);
  Eigen::MatrixXd p(12, 5);
  const int order[6] = {3, 0, 5, 1, 4, 2};
  for (int k = 0; k < 6; ++k) {
    p.row(2 * k) = z.row(2 * order[k]);
    p.row(2 * k + 1) = z.row(2 * order[k] + 1);
  }
  CHECK(batch_loss(p, 0.1) == doctest::Approx(batch_loss(z, 0.1)).epsilon(1e-13));
}

TEST_CASE("loss gradient matches finite differences") {
  Rng rng(4);
  for (double tau : {0.07, 0.5}) {
    Eigen::MatrixXd z = random_z(10, 6, rng);
    Eigen::MatrixXd g;
    batch_loss(z, tau, &g);
    double worst = 0.0;
    const double h = 1e-6;
    for (int i = 0; i < z.size(); ++i) {
      Eigen::MatrixXd up = z, down = z;
      up.data()[i] += h;
      down.data()[i] -= h;
      const double num = (batch_loss(up, tau) - batch_loss(down, tau)) / (2 * h);
      worst = std::max(worst, std::abs(num - g.data()[i]) / std::max({std::abs(num), std::abs(g.data()[i]), 1e-6}));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("simclr and r = 0 batches use the anchor twice") {
  Dataset d = toy_dataset(24, 8, 1);
  std::vector<ImageId> anchors = epoch_order(d, 5, 0);
  anchors.resize(8);
  PairSamplerConfig none;
  none.r = 0.0;
  GeoIndex idx0 = build_index(d.images, none);
  AugmentConfig aug;
  BatchKey key{5, 0, 0};
  ContrastiveBatch sim = assemble_batch(d, anchors, nullptr, PairMode::SimClr, aug, key, 1);
  ContrastiveBatch geo0 = assemble_batch(d, anchors, &idx0, PairMode::GeoClr, aug, key, 1);
  REQUIRE(sim.views.size() == 16);
  for (std::size_t k = 0; k < 8; ++k) {
    CHECK(sim.source_ids[2 * k] == sim.source_ids[2 * k + 1]);
    CHECK(geo0.source_ids[2 * k] == geo0.source_ids[2 * k + 1]);
  }
  CHECK(sim.views == geo0.views);
}

TEST_CASE("geoclr partners satisfy the distance criterion") {
  Dataset d = toy_dataset(3, 8, 2);
  for (int i = 0; i < 3; ++i) d.images[static_cast<std::size_t>(i)].georef = {0.5 * i, 0.0, 10.0};
  PairSamplerConfig pc;
  GeoIndex idx = build_index(d.images, pc);
  std::vector<ImageId> anchors{1, 0};
  for (std::uint64_t step = 0; step < 20; ++step) {
    ContrastiveBatch b = assemble_batch(d, anchors, &idx, PairMode::GeoClr, AugmentConfig{}, {1, 0, step}, 1);
    CHECK((b.source_ids[1] == 0 || b.source_ids[1] == 2));
    CHECK(weighted_distance(d.by_id(b.source_ids[2]).georef, d.by_id(b.source_ids[3]).georef, 1.0) <= 1.0);
  }
}

TEST_CASE("epoch order is a permutation") {
  Dataset d = toy_dataset(30, 8, 3);
  std::vector<ImageId> o = epoch_order(d, 1, 2);
  std::sort(o.begin(), o.end());
  CHECK(o == d.ids());
  CHECK(epoch_order(d, 1, 2) != epoch_order(d, 1, 3));
}

TEST_CASE("zero epochs return the initialisation") {
  Dataset d = toy_dataset(32, 8, 4);
  TrainConfig t = toy_train(PairMode::GeoClr, 0, 3);
  TrainResult r = train(d, t);
  CHECK(r.encoder.params == init_encoder(t.encoder, derive_seed(3, {0x494e4954})));
  CHECK(r.log.empty());
}

TEST_CASE("training lowers the loss and is deterministic") {
  Dataset d = toy_dataset(64, 8, 5);
  int improved = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TrainResult r = train(d, toy_train(PairMode::GeoClr, 5, seed));
    REQUIRE(r.log.size() == 5);
    if (r.log.back().mean_loss < r.log.front().mean_loss) ++improved;
  }
  CHECK(improved >= 3);
  TrainResult a = train(d, toy_train(PairMode::SimClr, 2, 9));
  TrainResult b = train(d, toy_train(PairMode::SimClr, 2, 9));
  CHECK(a.encoder.params == b.encoder.params);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].mean_loss == b.log[i].mean_loss);
}

TEST_CASE("geoclr with r = 0 reproduces simclr training") {
  Dataset d = toy_dataset(32, 8, 6);
  TrainConfig geo = toy_train(PairMode::GeoClr, 2, 4);
  geo.pairs.r = 0.0;
  TrainResult a = train(d, geo);
  TrainResult b = train(d, toy_train(PairMode::SimClr, 2, 4));
  CHECK(a.encoder.params == b.encoder.params);
  std::string dir = testutil::scratch("contrastive_log");
  write_loss_log(dir + "/a.csv", a.log, false);
  write_loss_log(dir + "/b.csv", b.log, false);
  CHECK(testutil::slurp(dir + "/a.csv") == testutil::slurp(dir + "/b.csv"));
}

TEST_CASE("training rejects bad configs") {
  Dataset d = toy_dataset(8, 8, 7);
  TrainConfig t = toy_train(PairMode::SimClr, 1, 1);
  t.loss.batch_size = 1;
  CHECK_THROWS_AS(train(d, t), UsageError);
  t = toy_train(PairMode::SimClr, 1, 1);
  t.loss.temperature = 0.0;
  CHECK_THROWS_AS(train(d, t), UsageError);
  t = toy_train(PairMode::SimClr, 1, 1);
  t.loss.batch_size = 16;
  CHECK_THROWS(train(d, t));
  CHECK_THROWS_AS(parse_pair_mode("moco"), UsageError);
}
