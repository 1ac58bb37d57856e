#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "geoclr/common.hpp"
#include "geoclr/dataset.hpp"
#include "json.hpp"

namespace geoclr {

/// Dense row-major-agnostic value buffer with a shape. Matrices are stored
/// column-major so Eigen::Map views them without copies.
struct Tensor {
  // Eigen's vectorised kernels peel differently depending on buffer
  // alignment, which changes summation order. Aligned storage keeps results
  // bit-identical from run to run.
  using Storage = std::vector<double, Eigen::aligned_allocator<double>>;

  std::vector<int> shape;
  Storage values;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0);

  std::size_t size() const { return values.size(); }
  Eigen::Map<Eigen::MatrixXd> matrix();
  Eigen::Map<const Eigen::MatrixXd> matrix() const;
  Eigen::Map<Eigen::VectorXd> vector();
  Eigen::Map<const Eigen::VectorXd> vector() const;
  bool operator==(const Tensor&) const = default;
};

/// Named parameter (or gradient) tensors, ordered by name.
using Parameters = std::map<std::string, Tensor>;

Parameters zeros_like(const Parameters& p);

struct ConvBlockSpec {
  int out_channels = 16;
  int stride = 2;
  bool operator==(const ConvBlockSpec&) const = default;
};

/// Base encoder f and projection head g. Each block is
/// conv3x3(stride) -> norm -> relu -> conv3x3 -> norm (+ 1x1 projection
/// shortcut when use_residual) -> relu; then global average pool, a dense
/// layer to latent_dim (h), and the head latent_dim -> latent_dim -> relu ->
/// projection_dim (z).
struct EncoderConfig {
  int input_size = 32;
  std::vector<ConvBlockSpec> conv_blocks{{16, 2}, {32, 2}, {64, 2}};
  int latent_dim = 64;
  int projection_dim = 32;
  bool use_residual = true;

  void validate() const;  // throws UsageError
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  bool operator==(const EncoderConfig&) const = default;
};

namespace nn {

/// Batch of feature maps; rows ordered (sample, y, x), one column per channel.
struct FeatureMap {
  int batch = 0;
  int height = 0;
  int width = 0;
  Eigen::MatrixXd values;

  int channels() const { return static_cast<int>(values.cols()); }
  int pixels() const { return height * width; }
};

FeatureMap from_tiles(const std::vector<const Tile*>& tiles);

struct ConvCache {
  Eigen::MatrixXd columns;  // im2col matrix
  int in_batch = 0, in_height = 0, in_width = 0, in_channels = 0;
  int kernel = 0, stride = 1, pad = 0;
  int out_height = 0, out_width = 0;
};

/// weight: (kernel*kernel*in_channels) x out_channels, bias: out_channels.
/// Zero "same" padding of kernel/2.
FeatureMap conv2d_forward(const FeatureMap& x, const Tensor& weight, const Tensor& bias, int kernel, int stride,
                          ConvCache* cache);
/// Accumulates into dweight/dbias; returns dx unless need_input_grad is false.
FeatureMap conv2d_backward(const ConvCache& cache, const Tensor& weight, const FeatureMap& dy, Tensor& dweight,
                           Tensor& dbias, bool need_input_grad = true);

/// Per-sample normalisation over all of a sample's (y, x, channel) values with
/// per-channel scale and shift, so each sample is independent of the batch.
struct NormCache {
  Eigen::MatrixXd normalized;
  Eigen::VectorXd inv_std;  // one per sample
};
constexpr double kNormEpsilon = 1e-5;
FeatureMap layer_norm_forward(const FeatureMap& x, const Tensor& gamma, const Tensor& beta, NormCache* cache);
FeatureMap layer_norm_backward(const NormCache& cache, const Tensor& gamma, const FeatureMap& dy, Tensor& dgamma,
                               Tensor& dbeta);

Eigen::MatrixXd relu(const Eigen::MatrixXd& x);
/// dy masked by (output > 0).
Eigen::MatrixXd relu_backward(const Eigen::MatrixXd& output, const Eigen::MatrixXd& dy);

Eigen::MatrixXd global_average_pool(const FeatureMap& x);
FeatureMap global_average_pool_backward(const FeatureMap& shape, const Eigen::MatrixXd& dy);

/// y = x W + b with W: in x out.
Eigen::MatrixXd dense_forward(const Eigen::MatrixXd& x, const Tensor& weight, const Tensor& bias);
Eigen::MatrixXd dense_backward(const Eigen::MatrixXd& x, const Tensor& weight, const Eigen::MatrixXd& dy,
                               Tensor& dweight, Tensor& dbias);

/// Everything the backward pass needs from one forward pass.
struct Tape {
  struct Block {
    ConvCache conv1, conv2, skip;
    NormCache norm1, norm2;
    FeatureMap act1, output;
  };
  std::vector<Block> blocks;
  FeatureMap last;
  Eigen::MatrixXd pooled;
  Eigen::MatrixXd h;
  Eigen::MatrixXd hidden;  // relu output inside the projection head
};

struct ForwardResult {
  Eigen::MatrixXd h;  // batch x latent_dim
  Eigen::MatrixXd z;  // batch x projection_dim
  Tape tape;
};

ForwardResult forward(const EncoderConfig& config, const Parameters& params, const std::vector<const Tile*>& batch);

/// Gradients of a scalar given dL/dh and dL/dz (either may be empty, meaning
/// zero). Only encoder and projection-head parameters receive gradients.
Parameters backward(const EncoderConfig& config, const Parameters& params, const Tape& tape,
                    const Eigen::MatrixXd& dh, const Eigen::MatrixXd& dz);

/// h only; runs in chunks to bound memory.
Eigen::MatrixXd embed(const EncoderConfig& config, const Parameters& params, const std::vector<const Tile*>& tiles,
                      std::size_t chunk = 128);

}  // namespace nn

/// Fan-in scaled uniform initialisation, U(-sqrt(3/fan_in), +sqrt(3/fan_in));
/// zero biases, unit norm scales.
Parameters init_encoder(const EncoderConfig& config, std::uint64_t seed);

/// Uniform fan-in initialisation of a single dense layer (in x out).
void init_dense(Parameters& params, const std::string& prefix, int in, int out, Rng& rng);

struct OptimizerSettings {
  enum class Kind { Adam, Sgd };
  Kind kind = Kind::Adam;
  double learning_rate = 3.0e-4;
  double weight_decay = 1.0e-4;  // decoupled
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double momentum = 0.9;  // SGD only

  nlohmann::json to_json() const;
  static OptimizerSettings from_json(const nlohmann::json& j);
};

struct OptimizerState {
  OptimizerSettings settings;
  std::int64_t step = 0;
  Parameters first_moment;
  Parameters second_moment;
};

/// Adam (or SGD with momentum) with decoupled weight decay. Throws
/// NumericalError naming the first parameter with a non-finite gradient.
void optimizer_step(Parameters& params, const Parameters& grads, OptimizerState& state);

/// Encoder parameters plus the configuration that produced them.
struct TrainedEncoder {
  EncoderConfig config;
  Parameters params;
  OptimizerState optimizer;
  nlohmann::json run_config = nlohmann::json::object();
};

}  // namespace geoclr
