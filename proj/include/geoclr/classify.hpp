#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "geoclr/dataset.hpp"
#include "geoclr/nn.hpp"

namespace geoclr {

/// Multinomial logistic regression on latents: scores = h W^T + b.
struct LinearClassifier {
  Eigen::MatrixXd weights;  // C x d
  Eigen::VectorXd biases;   // C
  int iterations = 0;
};

struct LogRegConfig {
  double l2 = 1e-4;  // applied to weights, not biases
  double tolerance = 1e-6;
  int max_iterations = 5000;
};

/// Mean cross-entropy plus 0.5 * l2 * |W|^2. When `grad` is non-null it
/// receives the gradient in the same layout as the model.
double logreg_objective(const LinearClassifier& model, const Eigen::MatrixXd& h, const std::vector<int>& labels,
                        double l2, LinearClassifier* grad = nullptr);

/// Full-batch gradient descent with Armijo backtracking from zero weights.
/// `class_count` fixes C, so classes absent from `labels` still get a row.
LinearClassifier fit_logreg(const Eigen::MatrixXd& h, const std::vector<int>& labels, int class_count,
                            const LogRegConfig& config = {});

struct SvmConfig {
  double C = 1.0;
  std::optional<double> gamma;  // empty: 1 / (d * variance of the training latents)
  double tolerance = 1e-3;
  int jobs = 0;
};

/// One binary RBF machine; decision = sum coef_i K(sv_i, x) - rho.
struct BinarySvm {
  bool trained = false;  // false when the class had no positive examples
  Eigen::MatrixXd support;
  Eigen::VectorXd coef;  // alpha_i * y_i
  double rho = 0.0;
  std::vector<double> alpha;  // full dual vector over the training set
  std::vector<int> support_index;
};

struct SvmModel {
  double C = 1.0;
  double gamma = 1.0;
  std::vector<BinarySvm> machines;  // one-vs-rest, one per class
};

/// One-vs-rest SMO (second-order working-set selection) to KKT tolerance.
SvmModel fit_svm_rbf(const Eigen::MatrixXd& h, const std::vector<int>& labels, int class_count,
                     const SvmConfig& config = {});

/// Kernel value exp(-gamma |a - b|^2).
double rbf(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b, double gamma);

struct Prediction {
  std::vector<int> labels;
  Eigen::MatrixXd scores;  // n x C: softmax probabilities or SVM decision values
};

/// Argmax of the scores, ties to the smallest class index.
Prediction predict(const LinearClassifier& model, const Eigen::MatrixXd& h);
Prediction predict(const SvmModel& model, const Eigen::MatrixXd& h);

struct FineTuneConfig {
  int epochs = 20;
  int batch_size = 256;  // capped at the labelled set size
  double learning_rate = 3.0e-4;
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
};

/// Encoder plus a C-way dense head ("head.fc.w", "head.fc.b") on h.
struct FineTunedModel {
  TrainedEncoder encoder;
  Parameters head;
  int class_count = 0;
};

FineTunedModel attach_head(const TrainedEncoder& encoder, int class_count, std::uint64_t seed);

/// Trains head and encoder end to end on cross-entropy over `labels`
/// (id -> class). No augmentation; a fresh Adam state.
FineTunedModel finetune(const TrainedEncoder& encoder, const Dataset& dataset, const std::map<ImageId, int>& labels,
                        int class_count, const FineTuneConfig& config);

Prediction predict(const FineTunedModel& model, const std::vector<const Tile*>& tiles);

enum class Generator { Linear, Svm };
std::string to_string(Generator g);
Generator parse_generator(const std::string& text);

struct PseudoLabelSet {
  std::map<ImageId, int> labels;  // every dataset id
  Generator generator = Generator::Linear;
};

struct PseudoLabelConfig {
  Generator generator = Generator::Svm;
  LogRegConfig logreg;
  SvmConfig svm;
  FineTuneConfig finetune;
};

struct PseudoLabelResult {
  PseudoLabelSet pseudo;
  FineTunedModel model;
};

/// Fits the classical classifier on the annotated latents, labels every
/// dataset image, lets true annotations override, and fine-tunes on the
/// result. Ids in `excluded` (validation) are labelled but never trained on.
/// `latents` rows follow dataset order.
PseudoLabelResult pseudo_label_pipeline(const TrainedEncoder& encoder, const Dataset& dataset,
                                        const Eigen::MatrixXd& latents, const std::map<ImageId, int>& annotations,
                                        int class_count, const PseudoLabelConfig& config,
                                        const std::set<ImageId>& excluded = {});

/// A saved classifier: linear or SVM on latents (optionally with the encoder
/// that produced them), or a fine-tuned network.
struct ClassifierModel {
  enum class Kind { Linear, Svm, FineTuned };
  Kind kind = Kind::Linear;
  std::vector<std::string> class_names;
  LinearClassifier linear;
  SvmModel svm;
  std::optional<TrainedEncoder> encoder;  // Linear/Svm: encoder for raw images
  FineTunedModel finetuned;
  std::vector<ImageId> training_ids;
  nlohmann::json meta = nlohmann::json::object();

  int class_count() const { return static_cast<int>(class_names.size()); }
  bool can_embed() const { return kind == Kind::FineTuned || encoder.has_value(); }
};

void save_classifier(const std::string& path, const ClassifierModel& model);
ClassifierModel load_classifier(const std::string& path);

/// Predicts from latents (Linear/Svm only).
Prediction predict_latents(const ClassifierModel& model, const Eigen::MatrixXd& h);
/// Predicts from images; Linear/Svm models need an embedded encoder.
Prediction predict_images(const ClassifierModel& model, const std::vector<const Tile*>& tiles);

}  // namespace geoclr
