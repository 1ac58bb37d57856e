#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "geoclr/classify.hpp"
#include "geoclr/contrastive.hpp"
#include "geoclr/kvconfig.hpp"
#include "geoclr/select.hpp"

namespace geoclr {

/// Unweighted mean of per-class F1 over all C classes; a class with
/// P + R = 0 scores 0.
double macro_f1(const std::vector<int>& predicted, const std::vector<int>& truth, int class_count);

struct TrialResult {
  std::string label;
  std::vector<std::uint64_t> seeds;
  std::vector<double> scores;
  double mean = 0.0;
  double sd = 0.0;  // population standard deviation
};

/// Runs fn(seed) for seeds base .. base + repeats - 1. Errors are rethrown
/// with the failing seed in the message.
TrialResult run_trials(const std::string& label, int repeats, std::uint64_t base_seed,
                       const std::function<double(std::uint64_t)>& fn);

/// Class-balanced validation set, drawn once per dataset.
std::vector<ImageId> draw_validation(const Dataset& dataset, int per_class, std::uint64_t seed);

/// Throws std::logic_error when a validation id is used for training.
void assert_disjoint(const std::vector<ImageId>& training, const std::set<ImageId>& validation, const std::string& what);

enum class ClassifierKind { Linear, Svm, FineTune, PseudoLinear, PseudoSvm };
std::string to_string(ClassifierKind k);
ClassifierKind parse_classifier(const std::string& text);

/// Everything a single (classifier, strategy, M, seed) evaluation needs
/// besides the encoder.
struct ProtocolConfig {
  int validation_per_class = 20;
  std::uint64_t validation_seed = 7;
  std::optional<int> m;  // H-kmeans top-level clusters; empty = elbow
  LogRegConfig logreg;
  SvmConfig svm;
  FineTuneConfig finetune;
  int jobs = 0;
};

/// Latents of the whole dataset (rows in dataset order) plus the fixed
/// validation split, shared by every trial on one encoder.
struct EvalContext {
  const Dataset* dataset = nullptr;
  const TrainedEncoder* encoder = nullptr;
  Eigen::MatrixXd latents;
  std::vector<ImageId> validation;
  std::set<ImageId> validation_set;
  std::vector<ImageId> pool;  // ids eligible for annotation
  std::map<ImageId, int> truth;

  EvalContext(const Dataset& dataset, const TrainedEncoder& encoder, const ProtocolConfig& config);
};

struct TrialOutcome {
  double f1 = 0.0;
  std::vector<ImageId> selected;
  std::vector<int> validation_predictions;
};

/// Selects M annotations with `strategy`, fits `classifier`, scores the
/// validation set.
TrialOutcome evaluate_once(const EvalContext& ctx, ClassifierKind classifier, Strategy strategy, int M,
                           std::uint64_t seed, const ProtocolConfig& config);

struct SweepGrid {
  std::vector<PairMode> modes{PairMode::GeoClr};
  std::vector<ClassifierKind> classifiers{ClassifierKind::Linear};
  std::vector<Strategy> strategies{Strategy::HKmeans};
  std::vector<int> Ms{40};
  std::vector<double> rs{1.0};
  std::vector<double> lambdas{1.0};
  int repeats = 10;
  std::uint64_t base_seed = 1;
  TrainConfig train;        // mode, r and lambda are overridden per cell
  ProtocolConfig protocol;

  void validate() const;
};

SweepGrid sweep_grid_from(const KvConfig& kv);

struct SweepCell {
  PairMode mode = PairMode::GeoClr;
  ClassifierKind classifier = ClassifierKind::Linear;
  Strategy strategy = Strategy::HKmeans;
  int M = 0;
  double r = 0.0;
  double lambda = 0.0;
  TrialResult result;
  std::string error;  // non-empty when the cell failed
};

/// Cartesian product in grid order (mode, r, lambda, classifier, strategy,
/// M). One encoder per (mode, r, lambda); simclr ignores r and lambda and is
/// trained once.
std::vector<SweepCell> sweep(const Dataset& dataset, const SweepGrid& grid);

/// `mode,classifier,strategy,M,r,lambda,seed,f1` (one row per seed).
void write_sweep_results(const std::string& path, const std::vector<SweepCell>& cells);
/// `mode,classifier,strategy,M,r,lambda,repeats,mean_f1,sd_f1_population,error`.
void write_sweep_summary(const std::string& path, const std::vector<SweepCell>& cells);

}  // namespace geoclr
