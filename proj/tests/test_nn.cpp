#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

#include "doctest.h"
#include "geoclr/checkpoint.hpp"
#include "geoclr/nn.hpp"
#include "test_util.hpp"

using namespace geoclr;

namespace {

constexpr double kEps = 1e-3;

double rel_err(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

void randomize(Tensor& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (double& v : t.values) v = uniform(rng, lo, hi);
}

Eigen::MatrixXd random_matrix(int r, int c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = uniform(rng, -1.0, 1.0);
  return m;
}

// Central differences of f over every entry of `values`.
template <typename Values, typename Analytic>
double max_fd_error(Values& values, const Analytic& analytic, const std::function<double()>& f) {
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double keep = values[i];
    values[i] = keep + kEps;
    const double up = f();
    values[i] = keep - kEps;
    const double down = f();
    values[i] = keep;
    worst = std::max(worst, rel_err(analytic[i], (up - down) / (2 * kEps)));
  }
  return worst;
}

std::vector<double> flat(const Eigen::MatrixXd& m) { return {m.data(), m.data() + m.size()}; }

nn::FeatureMap random_map(int batch, int h, int w, int c, Rng& rng) {
  nn::FeatureMap x;
  x.batch = batch;
  x.height = h;
  x.width = w;
  x.values = random_matrix(batch * h * w, c, rng);
  return x;
}

EncoderConfig small_config() {
  EncoderConfig c;
  c.input_size = 8;
  c.conv_blocks = {{4, 2}, {6, 2}};
  c.latent_dim = 6;
  c.projection_dim = 3;
  return c;
}

std::vector<Tile> random_tiles(int n, int size, Rng& rng) {
  std::vector<Tile> tiles;
  for (int i = 0; i < n; ++i) {
    Tile t(size, size);
    for (double& v : t.data) v = uniform(rng, 0.0, 1.0);
    tiles.push_back(t);
  }
  return tiles;
}

std::vector<const Tile*> ptrs(const std::vector<Tile>& tiles) {
  std::vector<const Tile*> p;
  for (const Tile& t : tiles) p.push_back(&t);
  return p;
}

}  // namespace

TEST_CASE("conv2d gradients") {
  Rng rng(1);
  for (int stride : {1, 2}) {
    nn::FeatureMap x = random_map(2, 5, 5, 3, rng);
    Tensor w({3 * 3 * 3, 4}), b({4});
    randomize(w, rng);
    randomize(b, rng);
    nn::ConvCache cache;
    nn::FeatureMap y = nn::conv2d_forward(x, w, b, 3, stride, &cache);
    Eigen::MatrixXd R = random_matrix(static_cast<int>(y.values.rows()), 4, rng);
    Tensor dw({27, 4}), db({4});
    nn::FeatureMap dx = nn::conv2d_backward(cache, w, {y.batch, y.height, y.width, R}, dw, db);
    auto loss = [&] { return (nn::conv2d_forward(x, w, b, 3, stride, nullptr).values.array() * R.array()).sum(); };
    CHECK(max_fd_error(w.values, dw.values, loss) < 1e-3);
    CHECK(max_fd_error(b.values, db.values, loss) < 1e-3);
    std::vector<double> xv = flat(x.values);
    auto loss_x = [&] {
      nn::FeatureMap xx = x;
      xx.values = Eigen::Map<Eigen::MatrixXd>(xv.data(), x.values.rows(), x.values.cols());
      return (nn::conv2d_forward(xx, w, b, 3, stride, nullptr).values.array() * R.array()).sum();
    };
    CHECK(max_fd_error(xv, flat(dx.values), loss_x) < 1e-3);
  }
}

TEST_CASE("layer norm gradients") {
  Rng rng(2);
  nn::FeatureMap x = random_map(3, 4, 4, 5, rng);
  Tensor gamma({5}), beta({5});
  randomize(gamma, rng, 0.5, 1.5);
  randomize(beta, rng);
  nn::NormCache cache;
  nn::FeatureMap y = nn::layer_norm_forward(x, gamma, beta, &cache);
  Eigen::MatrixXd R = random_matrix(static_cast<int>(y.values.rows()), 5, rng);
  Tensor dg({5}), dbeta({5});
  nn::FeatureMap dx = nn::layer_norm_backward(cache, gamma, {y.batch, y.height, y.width, R}, dg, dbeta);
  auto loss = [&] { return (nn::layer_norm_forward(x, gamma, beta, nullptr).values.array() * R.array()).sum(); };
  CHECK(max_fd_error(gamma.values, dg.values, loss) < 1e-3);
  CHECK(max_fd_error(beta.values, dbeta.values, loss) < 1e-3);
  std::vector<double> xv = flat(x.values);
  auto loss_x = [&] {
    nn::FeatureMap xx = x;
    xx.values = Eigen::Map<Eigen::MatrixXd>(xv.data(), x.values.rows(), x.values.cols());
    return (nn::layer_norm_forward(xx, gamma, beta, nullptr).values.array() * R.array()).sum();
  };
  CHECK(max_fd_error(xv, flat(dx.values), loss_x) < 1e-3);
}

TEST_CASE("layer norm is per sample") {
  Rng rng(3);
  nn::FeatureMap x = random_map(2, 3, 3, 2, rng);
  Tensor gamma({2}, 1.0), beta({2});
  nn::FeatureMap both = nn::layer_norm_forward(x, gamma, beta, nullptr);
  nn::FeatureMap first = x;
  first.batch = 1;
  first.values = x.values.topRows(9);
  nn::FeatureMap alone = nn::layer_norm_forward(first, gamma, beta, nullptr);
  CHECK((both.values.topRows(9) - alone.values).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("relu, pooling and dense gradients") {
  Rng rng(4);
  // relu: keep inputs away from the kink
  Eigen::MatrixXd x = random_matrix(4, 3, rng);
  for (int i = 0; i < x.size(); ++i)
    if (std::abs(x.data()[i]) < 0.05) x.data()[i] = 0.3;
  Eigen::MatrixXd R = random_matrix(4, 3, rng);
  Eigen::MatrixXd dx = nn::relu_backward(nn::relu(x), R);
  std::vector<double> xv = flat(x);
  auto relu_loss = [&] {
    Eigen::Map<Eigen::MatrixXd> m(xv.data(), 4, 3);
    return (nn::relu(m).array() * R.array()).sum();
  };
  CHECK(max_fd_error(xv, flat(dx), relu_loss) < 1e-3);

  nn::FeatureMap fm = random_map(2, 3, 4, 5, rng);
  Eigen::MatrixXd P = random_matrix(2, 5, rng);
  nn::FeatureMap dfm = nn::global_average_pool_backward(fm, P);
  std::vector<double> fv = flat(fm.values);
  auto pool_loss = [&] {
    nn::FeatureMap f = fm;
    f.values = Eigen::Map<Eigen::MatrixXd>(fv.data(), fm.values.rows(), fm.values.cols());
    return (nn::global_average_pool(f).array() * P.array()).sum();
  };
  CHECK(max_fd_error(fv, flat(dfm.values), pool_loss) < 1e-3);

  Eigen::MatrixXd in = random_matrix(3, 4, rng);
  Tensor w({4, 2}), b({2});
  randomize(w, rng);
  randomize(b, rng);
  Eigen::MatrixXd D = random_matrix(3, 2, rng);
  Tensor dw({4, 2}), db({2});
  Eigen::MatrixXd din = nn::dense_backward(in, w, D, dw, db);
  auto dense_loss = [&] { return (nn::dense_forward(in, w, b).array() * D.array()).sum(); };
  CHECK(max_fd_error(w.values, dw.values, dense_loss) < 1e-3);
  CHECK(max_fd_error(b.values, db.values, dense_loss) < 1e-3);
  std::vector<double> iv = flat(in);
  auto dense_in_loss = [&] {
    Eigen::Map<Eigen::MatrixXd> m(iv.data(), 3, 4);
    return (nn::dense_forward(m, w, b).array() * D.array()).sum();
  };
  CHECK(max_fd_error(iv, flat(din), dense_in_loss) < 1e-3);
}

TEST_CASE("full encoder and head gradients") {
  for (bool residual : {true, false}) {
    EncoderConfig cfg = small_config();
    cfg.use_residual = residual;
    Parameters params = init_encoder(cfg, 5);
    Rng rng(6);
    for (auto& [name, t] : params)
      if (name.find(".b") != std::string::npos || name.find("beta") != std::string::npos) randomize(t, rng, -0.1, 0.1);
    std::vector<Tile> tiles = random_tiles(3, 8, rng);
    nn::ForwardResult fw = nn::forward(cfg, params, ptrs(tiles));
    Eigen::MatrixXd A = random_matrix(3, cfg.latent_dim, rng), B = random_matrix(3, cfg.projection_dim, rng);
    Parameters grads = nn::backward(cfg, params, fw.tape, A, B);
    auto loss = [&] {
      nn::ForwardResult r = nn::forward(cfg, params, ptrs(tiles));
      return (r.h.array() * A.array()).sum() + (r.z.array() * B.array()).sum();
    };
    // 20 random coordinates spread over all tensors
    std::vector<std::string> names;
    for (auto& [name, t] : params) names.push_back(name);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
      const std::string& name = names[uniform_index(rng, names.size())];
      Tensor& t = params[name];
      const std::size_t i = uniform_index(rng, t.size());
      const double keep = t.values[i];
      t.values[i] = keep + kEps;
      const double up = loss();
      t.values[i] = keep - kEps;
      const double down = loss();
      t.values[i] = keep;
      worst = std::max(worst, rel_err(grads.at(name).values[i], (up - down) / (2 * kEps)));
    }
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("initialisation") {
  EncoderConfig cfg;
  CHECK(init_encoder(cfg, 3) == init_encoder(cfg, 3));
  CHECK_FALSE(init_encoder(cfg, 3) == init_encoder(cfg, 4));
  Parameters p;
  Rng rng(1);
  init_dense(p, "t", 100, 10, rng);
  const double bound = std::sqrt(1.0 / 100) * std::sqrt(3.0);
  for (double v : p.at("t.w").values) CHECK(std::abs(v) <= bound);
  for (double v : p.at("t.b").values) CHECK(v == 0.0);
}

TEST_CASE("forward structure") {
  EncoderConfig cfg = small_config();
  Parameters zero = zeros_like(init_encoder(cfg, 1));
  Tile blank(8, 8);
  nn::ForwardResult r = nn::forward(cfg, zero, {&blank});
  CHECK(r.h.cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.h.cols() == cfg.latent_dim);
  CHECK(r.z.cols() == cfg.projection_dim);

  Parameters params = init_encoder(cfg, 2);
  Rng rng(7);
  std::vector<Tile> tiles = random_tiles(2, 8, rng);
  nn::ForwardResult dup = nn::forward(cfg, params, {&tiles[0], &tiles[1], &tiles[0]});
  CHECK(dup.h.row(0) == dup.h.row(2));
  CHECK(dup.z.row(0) == dup.z.row(2));
  for (int i = 0; i < dup.h.size(); ++i) CHECK(std::isfinite(dup.h.data()[i]));

  Tile wrong(16, 16);
  CHECK_THROWS_AS(nn::forward(cfg, params, {&wrong}), UsageError);

  Eigen::MatrixXd e = nn::embed(cfg, params, {&tiles[0], &tiles[1], &tiles[0]}, 2);
  CHECK((e - dup.h).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("adam") {
  OptimizerState state;
  state.settings.weight_decay = 0.0;
  Parameters p{{"x", Tensor({1}, 0.0)}};
  Parameters zero{{"x", Tensor({1}, 0.0)}};
  optimizer_step(p, zero, state);
  CHECK(p.at("x").values[0] == 0.0);

  OptimizerState fresh;
  fresh.settings.weight_decay = 0.0;
  Parameters one{{"x", Tensor({1}, 1.0)}};
  optimizer_step(p, one, fresh);
  CHECK(std::abs(p.at("x").values[0]) == doctest::Approx(fresh.settings.learning_rate).epsilon(1e-6));
  CHECK(fresh.step == 1);

  Parameters a{{"x", Tensor({2}, 0.3)}}, b = a;
  OptimizerState sa, sb;
  for (int k = 0; k < 5; ++k) {
    Parameters g{{"x", Tensor({2}, 0.1 * k - 0.2)}};
    optimizer_step(a, g, sa);
    optimizer_step(b, g, sb);
  }
  CHECK(a == b);

  Parameters bad{{"x", Tensor({2}, std::nan(""))}};
  try {
    optimizer_step(a, bad, sa);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("'x'") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip and corruption") {
  std::string dir = testutil::scratch("nn_checkpoint");
  TrainedEncoder enc;
  enc.config = small_config();
  enc.params = init_encoder(enc.config, 9);
  enc.optimizer.step = 3;
  enc.optimizer.first_moment = enc.params;
  enc.optimizer.second_moment = zeros_like(enc.params);
  save_checkpoint(dir + "/a.bin", enc);
  TrainedEncoder back = load_checkpoint(dir + "/a.bin");
  CHECK(back.config == enc.config);
  CHECK(back.params == enc.params);
  CHECK(back.optimizer.step == 3);
  CHECK(back.optimizer.first_moment == enc.params);

  std::string bytes = testutil::slurp(dir + "/a.bin");
  testutil::spit(dir + "/short.bin", bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(load_checkpoint(dir + "/short.bin"), DataError);
  testutil::spit(dir + "/magic.bin", "XX" + bytes.substr(2));
  CHECK_THROWS_AS(load_checkpoint(dir + "/magic.bin"), DataError);
  std::string version = bytes;
  version[8] = static_cast<char>(kContainerVersion + 1);
  testutil::spit(dir + "/version.bin", version);
  CHECK_THROWS_AS(load_checkpoint(dir + "/version.bin"), DataError);

  Container c = encoder_to_container(enc);
  c.config["encoder"]["projection_dim"] = enc.config.latent_dim;
  write_container(dir + "/bad.bin", c);
  CHECK_THROWS(load_checkpoint(dir + "/bad.bin"));
}
