#include "geoclr/nn.hpp"

#include <cmath>
#include <numeric>

#include "geoclr/common.hpp"

namespace geoclr {

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  values.assign(n, fill);
}

namespace {
Eigen::Index rows_of(const std::vector<int>& shape) { return shape.empty() ? 1 : shape[0]; }
Eigen::Index cols_of(const std::vector<int>& shape, std::size_t size) {
  const Eigen::Index r = rows_of(shape);
  return r == 0 ? 0 : static_cast<Eigen::Index>(size) / r;
}
}  // namespace

Eigen::Map<Eigen::MatrixXd> Tensor::matrix() {
  return {values.data(), rows_of(shape), cols_of(shape, values.size())};
}
Eigen::Map<const Eigen::MatrixXd> Tensor::matrix() const {
  return {values.data(), rows_of(shape), cols_of(shape, values.size())};
}
Eigen::Map<Eigen::VectorXd> Tensor::vector() { return {values.data(), static_cast<Eigen::Index>(values.size())}; }
Eigen::Map<const Eigen::VectorXd> Tensor::vector() const {
  return {values.data(), static_cast<Eigen::Index>(values.size())};
}

Parameters zeros_like(const Parameters& p) {
  Parameters out;
  for (const auto& [name, t] : p) out.emplace(name, Tensor(t.shape));
  return out;
}

void EncoderConfig::validate() const {
  if (input_size < 4) throw UsageError("encoder: input_size must be >= 4");
  if (conv_blocks.empty()) throw UsageError("encoder: at least one conv block required");
  for (const auto& b : conv_blocks)
    if (b.out_channels <= 0 || b.stride <= 0) throw UsageError("encoder: channel counts and strides must be > 0");
  if (latent_dim <= 0 || projection_dim <= 0) throw UsageError("encoder: latent dimensions must be > 0");
  if (projection_dim >= latent_dim) throw UsageError("encoder: projection_dim must be smaller than latent_dim");
}

nlohmann::json EncoderConfig::to_json() const {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : conv_blocks) blocks.push_back({{"out_channels", b.out_channels}, {"stride", b.stride}});
  return {{"input_size", input_size},
          {"conv_blocks", blocks},
          {"latent_dim", latent_dim},
          {"projection_dim", projection_dim},
          {"use_residual", use_residual}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  try {
    c.input_size = j.at("input_size").get<int>();
    c.conv_blocks.clear();
    for (const auto& b : j.at("conv_blocks"))
      c.conv_blocks.push_back({b.at("out_channels").get<int>(), b.at("stride").get<int>()});
    c.latent_dim = j.at("latent_dim").get<int>();
    c.projection_dim = j.at("projection_dim").get<int>();
    c.use_residual = j.at("use_residual").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed encoder config: ") + e.what());
  }
  return c;
}

namespace nn {

FeatureMap from_tiles(const std::vector<const Tile*>& tiles) {
  FeatureMap fm;
  if (tiles.empty()) throw UsageError("forward: empty batch");
  fm.batch = static_cast<int>(tiles.size());
  fm.height = tiles[0]->height;
  fm.width = tiles[0]->width;
  const int px = fm.height * fm.width;
  fm.values.resize(static_cast<Eigen::Index>(fm.batch) * px, 3);
  for (int b = 0; b < fm.batch; ++b) {
    const Tile& t = *tiles[static_cast<std::size_t>(b)];
    if (t.height != fm.height || t.width != fm.width) throw UsageError("forward: tiles differ in size");
    for (int p = 0; p < px; ++p)
      for (int c = 0; c < 3; ++c) fm.values(b * px + p, c) = t.data[static_cast<std::size_t>(p) * 3 + c];
  }
  return fm;
}

FeatureMap conv2d_forward(const FeatureMap& x, const Tensor& weight, const Tensor& bias, int kernel, int stride,
                          ConvCache* cache) {
  ConvCache local;
  ConvCache& c = cache ? *cache : local;
  c.in_batch = x.batch;
  c.in_height = x.height;
  c.in_width = x.width;
  c.in_channels = x.channels();
  c.kernel = kernel;
  c.stride = stride;
  c.pad = kernel / 2;
  c.out_height = (x.height + 2 * c.pad - kernel) / stride + 1;
  c.out_width = (x.width + 2 * c.pad - kernel) / stride + 1;
  const int cin = c.in_channels;
  const Eigen::Index kk = static_cast<Eigen::Index>(kernel) * kernel * cin;
  if (weight.shape.size() != 2 || weight.shape[0] != kk)
    throw UsageError("conv2d: weight shape does not match input channels");

  const int out_px = c.out_height * c.out_width;
  const int in_px = x.height * x.width;
  c.columns.setZero(static_cast<Eigen::Index>(x.batch) * out_px, kk);
  for (int ky = 0; ky < kernel; ++ky)
    for (int kx = 0; kx < kernel; ++kx)
      for (int ci = 0; ci < cin; ++ci) {
        const Eigen::Index j = (static_cast<Eigen::Index>(ky) * kernel + kx) * cin + ci;
        double* col = c.columns.col(j).data();
        const double* src = x.values.col(ci).data();
        for (int b = 0; b < x.batch; ++b)
          for (int oy = 0; oy < c.out_height; ++oy) {
            const int iy = oy * stride + ky - c.pad;
            if (iy < 0 || iy >= x.height) continue;
            const std::size_t row0 = static_cast<std::size_t>(b) * out_px + static_cast<std::size_t>(oy) * c.out_width;
            const std::size_t src0 = static_cast<std::size_t>(b) * in_px + static_cast<std::size_t>(iy) * x.width;
            for (int ox = 0; ox < c.out_width; ++ox) {
              const int ix = ox * stride + kx - c.pad;
              if (ix < 0 || ix >= x.width) continue;
              col[row0 + static_cast<std::size_t>(ox)] = src[src0 + static_cast<std::size_t>(ix)];
            }
          }
      }
  FeatureMap y;
  y.batch = x.batch;
  y.height = c.out_height;
  y.width = c.out_width;
  y.values.noalias() = c.columns * weight.matrix();
  y.values.rowwise() += bias.vector().transpose();
  return y;
}

FeatureMap conv2d_backward(const ConvCache& c, const Tensor& weight, const FeatureMap& dy, Tensor& dweight,
                           Tensor& dbias, bool need_input_grad) {
  dweight.matrix().noalias() += c.columns.transpose() * dy.values;
  dbias.vector() += dy.values.colwise().sum().transpose();
  FeatureMap dx;
  dx.batch = c.in_batch;
  dx.height = c.in_height;
  dx.width = c.in_width;
  if (!need_input_grad) return dx;
  const Eigen::MatrixXd dcols = dy.values * weight.matrix().transpose();
  const int in_px = c.in_height * c.in_width;
  const int out_px = c.out_height * c.out_width;
  dx.values.setZero(static_cast<Eigen::Index>(c.in_batch) * in_px, c.in_channels);
  for (int ky = 0; ky < c.kernel; ++ky)
    for (int kx = 0; kx < c.kernel; ++kx)
      for (int ci = 0; ci < c.in_channels; ++ci) {
        const Eigen::Index j = (static_cast<Eigen::Index>(ky) * c.kernel + kx) * c.in_channels + ci;
        const double* col = dcols.col(j).data();
        double* dst = dx.values.col(ci).data();
        for (int b = 0; b < c.in_batch; ++b)
          for (int oy = 0; oy < c.out_height; ++oy) {
            const int iy = oy * c.stride + ky - c.pad;
            if (iy < 0 || iy >= c.in_height) continue;
            const std::size_t row0 = static_cast<std::size_t>(b) * out_px + static_cast<std::size_t>(oy) * c.out_width;
            const std::size_t dst0 = static_cast<std::size_t>(b) * in_px + static_cast<std::size_t>(iy) * c.in_width;
            for (int ox = 0; ox < c.out_width; ++ox) {
              const int ix = ox * c.stride + kx - c.pad;
              if (ix < 0 || ix >= c.in_width) continue;
              dst[dst0 + static_cast<std::size_t>(ix)] += col[row0 + static_cast<std::size_t>(ox)];
            }
          }
      }
  return dx;
}

FeatureMap layer_norm_forward(const FeatureMap& x, const Tensor& gamma, const Tensor& beta, NormCache* cache) {
  const int px = x.pixels();
  const Eigen::Index n = static_cast<Eigen::Index>(px) * x.channels();
  NormCache local;
  NormCache& c = cache ? *cache : local;
  c.normalized.resize(x.values.rows(), x.values.cols());
  c.inv_std.resize(x.batch);
  for (int b = 0; b < x.batch; ++b) {
    const auto block = x.values.middleRows(static_cast<Eigen::Index>(b) * px, px);
    const double mean = block.sum() / static_cast<double>(n);
    const double var = (block.array() - mean).square().sum() / static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + kNormEpsilon);
    c.inv_std(b) = inv;
    c.normalized.middleRows(static_cast<Eigen::Index>(b) * px, px) = (block.array() - mean) * inv;
  }
  FeatureMap y;
  y.batch = x.batch;
  y.height = x.height;
  y.width = x.width;
  y.values = (c.normalized.array().rowwise() * gamma.vector().transpose().array()).rowwise() +
             beta.vector().transpose().array();
  return y;
}

FeatureMap layer_norm_backward(const NormCache& c, const Tensor& gamma, const FeatureMap& dy, Tensor& dgamma,
                               Tensor& dbeta) {
  const int px = dy.pixels();
  const double n = static_cast<double>(px) * dy.channels();
  dgamma.vector() += (dy.values.array() * c.normalized.array()).colwise().sum().matrix().transpose();
  dbeta.vector() += dy.values.colwise().sum().transpose();
  const Eigen::MatrixXd dxhat = (dy.values.array().rowwise() * gamma.vector().transpose().array()).matrix();
  FeatureMap dx;
  dx.batch = dy.batch;
  dx.height = dy.height;
  dx.width = dy.width;
  dx.values.resize(dy.values.rows(), dy.values.cols());
  for (int b = 0; b < dy.batch; ++b) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(b) * px;
    const auto g = dxhat.middleRows(r0, px).array();
    const auto xh = c.normalized.middleRows(r0, px).array();
    const double sum_g = g.sum();
    const double sum_gx = (g * xh).sum();
    dx.values.middleRows(r0, px) = (c.inv_std(b) / n) * (n * g - sum_g - xh * sum_gx);
  }
  return dx;
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& x) { return x.cwiseMax(0.0); }

Eigen::MatrixXd relu_backward(const Eigen::MatrixXd& output, const Eigen::MatrixXd& dy) {
  return (output.array() > 0.0).select(dy, 0.0);
}

Eigen::MatrixXd global_average_pool(const FeatureMap& x) {
  const int px = x.pixels();
  Eigen::MatrixXd out(x.batch, x.channels());
  for (int b = 0; b < x.batch; ++b)
    out.row(b) = x.values.middleRows(static_cast<Eigen::Index>(b) * px, px).colwise().mean();
  return out;
}

FeatureMap global_average_pool_backward(const FeatureMap& shape, const Eigen::MatrixXd& dy) {
  const int px = shape.pixels();
  FeatureMap dx;
  dx.batch = shape.batch;
  dx.height = shape.height;
  dx.width = shape.width;
  dx.values.resize(static_cast<Eigen::Index>(shape.batch) * px, dy.cols());
  for (int b = 0; b < shape.batch; ++b)
    dx.values.middleRows(static_cast<Eigen::Index>(b) * px, px).rowwise() = dy.row(b) / static_cast<double>(px);
  return dx;
}

Eigen::MatrixXd dense_forward(const Eigen::MatrixXd& x, const Tensor& weight, const Tensor& bias) {
  if (x.cols() != weight.matrix().rows()) throw UsageError("dense: input dimension mismatch");
  Eigen::MatrixXd y = x * weight.matrix();
  y.rowwise() += bias.vector().transpose();
  return y;
}

Eigen::MatrixXd dense_backward(const Eigen::MatrixXd& x, const Tensor& weight, const Eigen::MatrixXd& dy,
                               Tensor& dweight, Tensor& dbias) {
  dweight.matrix().noalias() += x.transpose() * dy;
  dbias.vector() += dy.colwise().sum().transpose();
  return dy * weight.matrix().transpose();
}

namespace {

const Tensor& param(const Parameters& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw DataError("missing parameter '" + name + "'");
  return it->second;
}

std::string block_name(std::size_t i, const char* layer) { return "block" + std::to_string(i) + "." + layer; }

}  // namespace

ForwardResult forward(const EncoderConfig& config, const Parameters& params, const std::vector<const Tile*>& batch) {
  ForwardResult out;
  FeatureMap x = from_tiles(batch);
  if (x.height != config.input_size || x.width != config.input_size)
    throw UsageError("forward: batch tile size " + std::to_string(x.height) + " does not match encoder input " +
                     std::to_string(config.input_size));
  Tape& tape = out.tape;
  tape.blocks.resize(config.conv_blocks.size());
  for (std::size_t i = 0; i < config.conv_blocks.size(); ++i) {
    const ConvBlockSpec& spec = config.conv_blocks[i];
    Tape::Block& blk = tape.blocks[i];
    FeatureMap c1 = conv2d_forward(x, param(params, block_name(i, "conv1.w")), param(params, block_name(i, "conv1.b")),
                                   3, spec.stride, &blk.conv1);
    FeatureMap n1 = layer_norm_forward(c1, param(params, block_name(i, "norm1.gamma")),
                                       param(params, block_name(i, "norm1.beta")), &blk.norm1);
    blk.act1 = n1;
    blk.act1.values = relu(n1.values);
    FeatureMap c2 = conv2d_forward(blk.act1, param(params, block_name(i, "conv2.w")),
                                   param(params, block_name(i, "conv2.b")), 3, 1, &blk.conv2);
    FeatureMap n2 = layer_norm_forward(c2, param(params, block_name(i, "norm2.gamma")),
                                       param(params, block_name(i, "norm2.beta")), &blk.norm2);
    if (config.use_residual) {
      FeatureMap s = conv2d_forward(x, param(params, block_name(i, "skip.w")), param(params, block_name(i, "skip.b")),
                                    1, spec.stride, &blk.skip);
      n2.values += s.values;
    }
    blk.output = n2;
    blk.output.values = relu(n2.values);
    x = blk.output;
  }
  tape.last = x;
  tape.last.values.resize(0, x.channels());
  tape.pooled = global_average_pool(x);
  tape.h = dense_forward(tape.pooled, param(params, "encoder.fc.w"), param(params, "encoder.fc.b"));
  tape.hidden = relu(dense_forward(tape.h, param(params, "proj.fc1.w"), param(params, "proj.fc1.b")));
  out.z = dense_forward(tape.hidden, param(params, "proj.fc2.w"), param(params, "proj.fc2.b"));
  out.h = tape.h;
  return out;
}

Parameters backward(const EncoderConfig& config, const Parameters& params, const Tape& tape, const Eigen::MatrixXd& dh,
                    const Eigen::MatrixXd& dz) {
  Parameters grads;
  for (const auto& [name, t] : params)
    if (name.rfind("block", 0) == 0 || name.rfind("encoder.", 0) == 0 || name.rfind("proj.", 0) == 0)
      grads.emplace(name, Tensor(t.shape));

  const Eigen::Index batch = tape.h.rows();
  Eigen::MatrixXd dh_total = dh.size() ? dh : Eigen::MatrixXd::Zero(batch, tape.h.cols());
  if (dz.size()) {
    Eigen::MatrixXd dhidden =
        dense_backward(tape.hidden, param(params, "proj.fc2.w"), dz, grads["proj.fc2.w"], grads["proj.fc2.b"]);
    dhidden = relu_backward(tape.hidden, dhidden);
    dh_total += dense_backward(tape.h, param(params, "proj.fc1.w"), dhidden, grads["proj.fc1.w"], grads["proj.fc1.b"]);
  }
  const Eigen::MatrixXd dpooled =
      dense_backward(tape.pooled, param(params, "encoder.fc.w"), dh_total, grads["encoder.fc.w"], grads["encoder.fc.b"]);
  FeatureMap dx = global_average_pool_backward(tape.last, dpooled);

  for (std::size_t ii = config.conv_blocks.size(); ii-- > 0;) {
    const Tape::Block& blk = tape.blocks[ii];
    const bool need_input = ii > 0;
    FeatureMap dsum = dx;
    dsum.values = relu_backward(blk.output.values, dx.values);
    FeatureMap dc2 = layer_norm_backward(blk.norm2, param(params, block_name(ii, "norm2.gamma")), dsum,
                                         grads[block_name(ii, "norm2.gamma")], grads[block_name(ii, "norm2.beta")]);
    FeatureMap da1 = conv2d_backward(blk.conv2, param(params, block_name(ii, "conv2.w")), dc2,
                                     grads[block_name(ii, "conv2.w")], grads[block_name(ii, "conv2.b")]);
    da1.values = relu_backward(blk.act1.values, da1.values);
    FeatureMap dc1 = layer_norm_backward(blk.norm1, param(params, block_name(ii, "norm1.gamma")), da1,
                                         grads[block_name(ii, "norm1.gamma")], grads[block_name(ii, "norm1.beta")]);
    FeatureMap dinput = conv2d_backward(blk.conv1, param(params, block_name(ii, "conv1.w")), dc1,
                                        grads[block_name(ii, "conv1.w")], grads[block_name(ii, "conv1.b")], need_input);
    if (config.use_residual) {
      FeatureMap dskip = conv2d_backward(blk.skip, param(params, block_name(ii, "skip.w")), dsum,
                                         grads[block_name(ii, "skip.w")], grads[block_name(ii, "skip.b")], need_input);
      if (need_input) dinput.values += dskip.values;
    }
    dx = std::move(dinput);
  }
  return grads;
}

Eigen::MatrixXd embed(const EncoderConfig& config, const Parameters& params, const std::vector<const Tile*>& tiles,
                      std::size_t chunk) {
  Eigen::MatrixXd h(static_cast<Eigen::Index>(tiles.size()), config.latent_dim);
  for (std::size_t start = 0; start < tiles.size(); start += chunk) {
    const std::size_t end = std::min(tiles.size(), start + chunk);
    std::vector<const Tile*> part(tiles.begin() + static_cast<std::ptrdiff_t>(start),
                                  tiles.begin() + static_cast<std::ptrdiff_t>(end));
    h.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) =
        forward(config, params, part).h;
  }
  return h;
}

}  // namespace nn

namespace {

void init_uniform(Tensor& t, int fan_in, Rng& rng) {
  const double bound = std::sqrt(3.0 / fan_in);
  for (double& v : t.values) v = uniform(rng, -bound, bound);
}

void init_conv(Parameters& p, const std::string& prefix, int kernel, int cin, int cout, Rng& rng) {
  Tensor w({kernel * kernel * cin, cout});
  init_uniform(w, kernel * kernel * cin, rng);
  p[prefix + ".w"] = std::move(w);
  p[prefix + ".b"] = Tensor({cout});
}

void init_norm(Parameters& p, const std::string& prefix, int channels) {
  p[prefix + ".gamma"] = Tensor({channels}, 1.0);
  p[prefix + ".beta"] = Tensor({channels});
}

}  // namespace

void init_dense(Parameters& params, const std::string& prefix, int in, int out, Rng& rng) {
  Tensor w({in, out});
  init_uniform(w, in, rng);
  params[prefix + ".w"] = std::move(w);
  params[prefix + ".b"] = Tensor({out});
}

Parameters init_encoder(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng = make_rng(seed, {0x1417});
  Parameters p;
  int cin = 3;
  for (std::size_t i = 0; i < config.conv_blocks.size(); ++i) {
    const int cout = config.conv_blocks[i].out_channels;
    const std::string b = "block" + std::to_string(i);
    init_conv(p, b + ".conv1", 3, cin, cout, rng);
    init_norm(p, b + ".norm1", cout);
    init_conv(p, b + ".conv2", 3, cout, cout, rng);
    init_norm(p, b + ".norm2", cout);
    if (config.use_residual) init_conv(p, b + ".skip", 1, cin, cout, rng);
    cin = cout;
  }
  init_dense(p, "encoder.fc", cin, config.latent_dim, rng);
  init_dense(p, "proj.fc1", config.latent_dim, config.latent_dim, rng);
  init_dense(p, "proj.fc2", config.latent_dim, config.projection_dim, rng);
  return p;
}

nlohmann::json OptimizerSettings::to_json() const {
  return {{"kind", kind == Kind::Adam ? "adam" : "sgd"},
          {"learning_rate", learning_rate},
          {"weight_decay", weight_decay},
          {"beta1", beta1},
          {"beta2", beta2},
          {"epsilon", epsilon},
          {"momentum", momentum}};
}

OptimizerSettings OptimizerSettings::from_json(const nlohmann::json& j) {
  OptimizerSettings s;
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "adam")
      s.kind = Kind::Adam;
    else if (kind == "sgd")
      s.kind = Kind::Sgd;
    else
      throw DataError("unknown optimizer kind '" + kind + "'");
    s.learning_rate = j.at("learning_rate").get<double>();
    s.weight_decay = j.at("weight_decay").get<double>();
    s.beta1 = j.at("beta1").get<double>();
    s.beta2 = j.at("beta2").get<double>();
    s.epsilon = j.at("epsilon").get<double>();
    s.momentum = j.at("momentum").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed optimizer settings: ") + e.what());
  }
  return s;
}

void optimizer_step(Parameters& params, const Parameters& grads, OptimizerState& state) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw UsageError("optimizer: gradient for unknown parameter '" + name + "'");
    if (it->second.shape != g.shape) throw UsageError("optimizer: shape mismatch for '" + name + "'");
    for (double v : g.values)
      if (!std::isfinite(v)) throw NumericalError("non-finite gradient for parameter '" + name + "'");
  }
  const OptimizerSettings& s = state.settings;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(s.beta1, t);
  const double bc2 = 1.0 - std::pow(s.beta2, t);
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    auto& m = state.first_moment.try_emplace(name, Tensor(p.shape)).first->second;
    auto pv = p.vector();
    const auto gv = g.vector();
    if (s.kind == OptimizerSettings::Kind::Adam) {
      auto& v = state.second_moment.try_emplace(name, Tensor(p.shape)).first->second;
      m.vector() = s.beta1 * m.vector() + (1.0 - s.beta1) * gv;
      v.vector() = s.beta2 * v.vector() + (1.0 - s.beta2) * gv.cwiseProduct(gv);
      const Eigen::ArrayXd mhat = m.vector().array() / bc1;
      const Eigen::ArrayXd vhat = v.vector().array() / bc2;
      pv.array() -= s.learning_rate * (mhat / (vhat.sqrt() + s.epsilon) + s.weight_decay * pv.array());
    } else {
      m.vector() = s.momentum * m.vector() + gv;
      pv.array() -= s.learning_rate * (m.vector().array() + s.weight_decay * pv.array());
    }
  }
}

}  // namespace geoclr
