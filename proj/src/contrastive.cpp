#include "geoclr/contrastive.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>

namespace geoclr {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348;
constexpr std::uint64_t kPairStream = 0x5041;
constexpr std::uint64_t kAugmentStream = 0x4155;

Eigen::VectorXd row_norms(const Eigen::MatrixXd& z) {
  Eigen::VectorXd n = z.rowwise().norm();
  for (Eigen::Index i = 0; i < n.size(); ++i)
    if (!(n(i) > 0.0)) throw NumericalError("NT-Xent: row " + std::to_string(i) + " of z has zero norm");
  return n;
}

}  // namespace

void LossConfig::validate() const {
  if (!(temperature > 0.0)) throw UsageError("loss: temperature must be > 0");
  if (batch_size < 2) throw UsageError("loss: batch size N must be >= 2");
}

std::string to_string(PairMode mode) { return mode == PairMode::GeoClr ? "geoclr" : "simclr"; }

PairMode parse_pair_mode(const std::string& text) {
  if (text == "geoclr") return PairMode::GeoClr;
  if (text == "simclr") return PairMode::SimClr;
  throw UsageError("unknown mode '" + text + "' (expected geoclr or simclr)");
}

double pairwise_loss(const Eigen::MatrixXd& z, int i, int j, double temperature) {
  if (i == j) throw UsageError("pairwise_loss: i must differ from j");
  const Eigen::VectorXd norms = row_norms(z);
  const Eigen::RowVectorXd ui = z.row(i) / norms(i);
  const Eigen::Index n = z.rows();
  Eigen::VectorXd logits(n);
  double mx = -INFINITY;
  for (Eigen::Index k = 0; k < n; ++k) {
    logits(k) = ui.dot(z.row(k) / norms(k)) / temperature;
    if (k != i) mx = std::max(mx, logits(k));
  }
  double sum = 0.0;
  for (Eigen::Index k = 0; k < n; ++k)
    if (k != i) sum += std::exp(logits(k) - mx);
  return mx + std::log(sum) - logits(j);
}

double batch_loss(const Eigen::MatrixXd& z, double temperature, Eigen::MatrixXd* grad) {
  const Eigen::Index n = z.rows();
  if (n < 4 || n % 2 != 0) throw UsageError("batch_loss: need an even number of rows >= 4");
  const Eigen::VectorXd norms = row_norms(z);
  const Eigen::MatrixXd u = norms.cwiseInverse().asDiagonal() * z;
  const Eigen::MatrixXd s = (u * u.transpose()) / temperature;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);  // dL/ds
  const double scale = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index pos = i ^ 1;
    double mx = -INFINITY;
    for (Eigen::Index k = 0; k < n; ++k)
      if (k != i) mx = std::max(mx, s(i, k));
    double sum = 0.0;
    for (Eigen::Index k = 0; k < n; ++k)
      if (k != i) sum += std::exp(s(i, k) - mx);
    total += mx + std::log(sum) - s(i, pos);
    if (grad) {
      for (Eigen::Index k = 0; k < n; ++k)
        if (k != i) g(i, k) = std::exp(s(i, k) - mx) / sum * scale;
      g(i, pos) -= scale;
    }
  }
  if (grad) {
    const Eigen::MatrixXd du = (g + g.transpose()) * u / temperature;
    grad->resize(n, z.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      const double proj = u.row(i).dot(du.row(i));
      grad->row(i) = (du.row(i) - proj * u.row(i)) / norms(i);
    }
  }
  return total * scale;
}

std::vector<ImageId> epoch_order(const Dataset& dataset, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<ImageId> ids = dataset.ids();
  Rng rng = make_rng(seed, {kShuffleStream, epoch});
  // Fisher-Yates with our own index draw so the order is library independent.
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[uniform_index(rng, i)]);
  return ids;
}

ContrastiveBatch assemble_batch(const Dataset& dataset, std::span<const ImageId> anchors, const GeoIndex* index,
                                PairMode mode, const AugmentConfig& augment, const BatchKey& key, int jobs) {
  if (mode == PairMode::GeoClr && index == nullptr) throw UsageError("assemble_batch: geoclr mode needs a GeoIndex");
  ContrastiveBatch batch;
  batch.mode = mode;
  batch.views.resize(anchors.size() * 2);
  batch.source_ids.resize(anchors.size() * 2);
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    ImageId partner = anchors[k];
    if (mode == PairMode::GeoClr) {
      Rng pair_rng = make_rng(key.seed, {kPairStream, key.epoch, key.step, k});
      partner = sample_similar(*index, anchors[k], pair_rng);
    }
    batch.source_ids[2 * k] = anchors[k];
    batch.source_ids[2 * k + 1] = partner;
  }
  parallel_for(batch.views.size(), jobs, [&](std::size_t v) {
    Rng aug_rng = make_rng(key.seed, {kAugmentStream, augment.rng_seed, key.epoch, key.step, v});
    batch.views[v] = apply_augmentation(dataset.by_id(batch.source_ids[v]).pixels, augment, aug_rng);
  });
  return batch;
}

void TrainConfig::validate() const {
  encoder.validate();
  loss.validate();
  pairs.validate();
  augment.validate();
  if (epochs < 0) throw UsageError("train: epochs must be >= 0");
  if (!(optimizer.learning_rate > 0.0)) throw UsageError("train: learning rate must be > 0");
  if (optimizer.weight_decay < 0.0) throw UsageError("train: weight decay must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j;
  j["mode"] = to_string(mode);
  j["encoder"] = encoder.to_json();
  j["loss"] = {{"temperature", loss.temperature}, {"batch_size", loss.batch_size}};
  j["pairs"] = {{"r", pairs.r}, {"lambda", pairs.lambda}, {"rng_seed", pairs.rng_seed}};
  j["augment"] = {{"crop_scale_range", {augment.crop_scale_range.lo, augment.crop_scale_range.hi}},
                  {"jitter",
                   {augment.jitter.brightness, augment.jitter.contrast, augment.jitter.saturation, augment.jitter.hue}},
                  {"blur_sigma_range", {augment.blur_sigma_range.lo, augment.blur_sigma_range.hi}},
                  {"blur_apply_prob", augment.blur_apply_prob},
                  {"rng_seed", augment.rng_seed}};
  j["optimizer"] = optimizer.to_json();
  j["epochs"] = epochs;
  j["seed"] = seed;
  return j;
}

TrainResult train(const Dataset& dataset, const TrainConfig& config, const BatchObserver& observer) {
  config.validate();
  const std::size_t n = static_cast<std::size_t>(config.loss.batch_size);
  if (dataset.size() < n)
    throw DataError("train: dataset has " + std::to_string(dataset.size()) + " images, fewer than batch size " +
                    std::to_string(n));
  for (const auto& img : dataset.images)
    if (img.pixels.height != config.encoder.input_size || img.pixels.width != config.encoder.input_size)
      throw DataError("train: tile size does not match encoder input size");

  TrainResult result;
  result.encoder.config = config.encoder;
  result.encoder.params = init_encoder(config.encoder, derive_seed(config.seed, {0x494e4954}));
  result.encoder.optimizer.settings = config.optimizer;
  result.encoder.run_config = config.to_json();

  std::optional<GeoIndex> index;
  if (config.mode == PairMode::GeoClr) index.emplace(dataset.images, config.pairs);

  const auto start = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<ImageId> order = epoch_order(dataset, config.seed, static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    int steps = 0;
    for (std::size_t first = 0; first + 2 <= order.size(); first += n) {
      const std::size_t count = std::min(n, order.size() - first);
      const BatchKey key{config.seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(steps)};
      const ContrastiveBatch batch =
          assemble_batch(dataset, std::span<const ImageId>(order.data() + first, count), index ? &*index : nullptr,
                         config.mode, config.augment, key, config.jobs);
      if (observer) observer(batch, key);

      std::vector<const Tile*> views;
      views.reserve(batch.views.size());
      for (const auto& v : batch.views) views.push_back(&v);
      nn::ForwardResult fwd = nn::forward(config.encoder, result.encoder.params, views);
      Eigen::MatrixXd dz;
      const double loss = batch_loss(fwd.z, config.loss.temperature, &dz);
      if (!std::isfinite(loss))
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                             std::to_string(steps + 1));
      const Parameters grads = nn::backward(config.encoder, result.encoder.params, fwd.tape, {}, dz);
      try {
        optimizer_step(result.encoder.params, grads, result.encoder.optimizer);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch + 1) + ", step " +
                             std::to_string(steps + 1));
      }
      loss_sum += loss;
      ++steps;
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back({epoch + 1, steps ? loss_sum / steps : 0.0, wall});
  }
  return result;
}

void write_loss_log(const std::string& path, const std::vector<EpochLog>& log, bool include_timing) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write loss log: " + path);
  f << "epoch,mean_loss,wall_seconds\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.3f\n", e.epoch, e.mean_loss, include_timing ? e.wall_seconds : 0.0);
    f << buf;
  }
  if (!f) throw DataError("write failed: " + path);
}

}  // namespace geoclr
