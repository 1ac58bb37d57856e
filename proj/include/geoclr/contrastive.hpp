#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "geoclr/augment.hpp"
#include "geoclr/dataset.hpp"
#include "geoclr/geopair.hpp"
#include "geoclr/nn.hpp"

namespace geoclr {

struct LossConfig {
  double temperature = 0.07;
  int batch_size = 32;  // N original images; the batch holds 2N views

  void validate() const;
};

enum class PairMode { SimClr, GeoClr };

std::string to_string(PairMode mode);
PairMode parse_pair_mode(const std::string& text);

/// NT-Xent term for the positive pair (i, j) over the 2N rows of z: the
/// denominator runs over every row k != i, including j.
double pairwise_loss(const Eigen::MatrixXd& z, int i, int j, double temperature);

/// Mean of the 2N NT-Xent terms with pairs (0,1), (2,3), ... . Uses a
/// max-shifted log-sum-exp. When `grad` is non-null it receives dL/dz.
double batch_loss(const Eigen::MatrixXd& z, double temperature, Eigen::MatrixXd* grad = nullptr);

/// 2N augmented views; views 2k and 2k+1 are the declared-similar pair.
struct ContrastiveBatch {
  std::vector<Tile> views;
  std::vector<ImageId> source_ids;
  PairMode mode = PairMode::SimClr;

  std::size_t pairs() const { return views.size() / 2; }
};

/// Identifies one training step; every random stream used to build the batch
/// is derived from it.
struct BatchKey {
  std::uint64_t seed = 1;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
};

/// Without-replacement shuffle of all dataset ids for one epoch.
std::vector<ImageId> epoch_order(const Dataset& dataset, std::uint64_t seed, std::uint64_t epoch);

/// simclr: the anchor tile is augmented twice. geoclr: the anchor and
/// sample_similar(anchor) are augmented once each. Augmentation and partner
/// draws use separate streams, so geoclr with no neighbours reproduces
/// simclr exactly.
ContrastiveBatch assemble_batch(const Dataset& dataset, std::span<const ImageId> anchors, const GeoIndex* index,
                                PairMode mode, const AugmentConfig& augment, const BatchKey& key,
                                int jobs = 0);

struct TrainConfig {
  PairMode mode = PairMode::GeoClr;
  EncoderConfig encoder;
  LossConfig loss;
  PairSamplerConfig pairs;
  AugmentConfig augment;
  OptimizerSettings optimizer;
  int epochs = 30;
  std::uint64_t seed = 1;
  int jobs = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  TrainedEncoder encoder;
  std::vector<EpochLog> log;
};

/// Called with every assembled batch before the forward pass.
using BatchObserver = std::function<void(const ContrastiveBatch&, const BatchKey&)>;

/// assemble -> forward -> batch_loss -> backward -> optimizer_step for
/// `epochs` passes over a shuffled anchor order. A trailing partial batch is
/// kept when it has at least 2 anchors.
TrainResult train(const Dataset& dataset, const TrainConfig& config, const BatchObserver& observer = {});

/// CSV `epoch,mean_loss,wall_seconds`; timings are written as 0 when
/// include_timing is false so reruns are byte-identical.
void write_loss_log(const std::string& path, const std::vector<EpochLog>& log, bool include_timing);

}  // namespace geoclr
