#include "geoclr/classify.hpp"

#include <algorithm>
#include <cmath>

#include "geoclr/checkpoint.hpp"
#include "geoclr/common.hpp"

namespace geoclr {

namespace {

constexpr std::uint64_t kHeadStream = 0x48454144;
constexpr std::uint64_t kTuneShuffle = 0x54554e45;
const std::string kEncoderPrefix = "enc:";

void check_training_set(const Eigen::MatrixXd& h, const std::vector<int>& labels, int class_count,
                        const std::string& who) {
  if (static_cast<std::size_t>(h.rows()) != labels.size())
    throw UsageError(who + ": " + std::to_string(h.rows()) + " latents but " + std::to_string(labels.size()) +
                     " labels");
  if (labels.size() < 2) throw DataError(who + ": need at least 2 training examples");
  std::set<int> present;
  for (int y : labels) {
    if (y < 0 || y >= class_count) throw DataError(who + ": label " + std::to_string(y) + " out of range");
    present.insert(y);
  }
  if (present.size() < 2) throw DataError(who + ": need at least 2 classes in the training labels");
  if (!h.allFinite()) throw NumericalError(who + ": non-finite latent values");
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& s) {
  Eigen::MatrixXd p(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    p.row(i) = (s.row(i).array() - mx).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

std::vector<int> argmax_rows(const Eigen::MatrixXd& s) {
  std::vector<int> out(static_cast<std::size_t>(s.rows()), 0);
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    int best = 0;
    for (Eigen::Index c = 1; c < s.cols(); ++c)
      if (s(i, c) > s(i, best)) best = static_cast<int>(c);
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

Tensor to_tensor(const Eigen::MatrixXd& m) {
  Tensor t({static_cast<int>(m.rows()), static_cast<int>(m.cols())});
  t.matrix() = m;
  return t;
}

Tensor to_tensor(const Eigen::VectorXd& v) {
  Tensor t({static_cast<int>(v.size())});
  t.vector() = v;
  return t;
}

// Binary C-SVC dual solved with libsvm-style SMO (second-order working set
// selection). Returns alpha and rho.
void solve_binary(const Eigen::MatrixXd& K, const std::vector<int>& y, double C, double eps, std::vector<double>& alpha,
                  double& rho) {
  const std::size_t n = y.size();
  constexpr double kTau = 1e-12;
  alpha.assign(n, 0.0);
  std::vector<double> G(n, -1.0);  // gradient of 0.5 a'Qa - e'a
  auto Q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)); };
  auto up = [&](std::size_t t) { return y[t] == 1 ? alpha[t] < C : alpha[t] > 0.0; };
  auto low = [&](std::size_t t) { return y[t] == 1 ? alpha[t] > 0.0 : alpha[t] < C; };
  const std::size_t max_iter = std::max<std::size_t>(10000000, 100 * n);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    double gmax = -INFINITY;
    std::ptrdiff_t i = -1;
    for (std::size_t t = 0; t < n; ++t)
      if (up(t) && -y[t] * G[t] > gmax) {
        gmax = -y[t] * G[t];
        i = static_cast<std::ptrdiff_t>(t);
      }
    double gmax2 = -INFINITY, best_obj = INFINITY;
    std::ptrdiff_t j = -1;
    for (std::size_t t = 0; t < n; ++t) {
      if (!low(t)) continue;
      gmax2 = std::max(gmax2, y[t] * G[t]);
      if (i < 0) continue;
      const double grad_diff = gmax + y[t] * G[t];
      if (grad_diff <= 0.0) continue;
      double quad = K(i, i) + K(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t)) -
                    2.0 * K(i, static_cast<Eigen::Index>(t));
      if (quad <= 0.0) quad = kTau;
      const double obj = -(grad_diff * grad_diff) / quad;
      if (obj < best_obj) {
        best_obj = obj;
        j = static_cast<std::ptrdiff_t>(t);
      }
    }
    if (i < 0 || j < 0 || gmax + gmax2 < eps) break;

    const auto a = static_cast<std::size_t>(i), b = static_cast<std::size_t>(j);
    const double old_a = alpha[a], old_b = alpha[b];
    if (y[a] != y[b]) {
      double quad = Q(a, a) + Q(b, b) + 2.0 * Q(a, b);
      if (quad <= 0.0) quad = kTau;
      const double delta = (-G[a] - G[b]) / quad;
      const double diff = alpha[a] - alpha[b];
      alpha[a] += delta;
      alpha[b] += delta;
      if (diff > 0.0) {
        if (alpha[b] < 0.0) {
          alpha[b] = 0.0;
          alpha[a] = diff;
        }
      } else if (alpha[a] < 0.0) {
        alpha[a] = 0.0;
        alpha[b] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[a] > C) {
          alpha[a] = C;
          alpha[b] = C - diff;
        }
      } else if (alpha[b] > C) {
        alpha[b] = C;
        alpha[a] = C + diff;
      }
    } else {
      double quad = Q(a, a) + Q(b, b) - 2.0 * Q(a, b);
      if (quad <= 0.0) quad = kTau;
      const double delta = (G[a] - G[b]) / quad;
      const double sum = alpha[a] + alpha[b];
      alpha[a] -= delta;
      alpha[b] += delta;
      if (sum > C) {
        if (alpha[a] > C) {
          alpha[a] = C;
          alpha[b] = sum - C;
        }
      } else if (alpha[b] < 0.0) {
        alpha[b] = 0.0;
        alpha[a] = sum;
      }
      if (sum > C) {
        if (alpha[b] > C) {
          alpha[b] = C;
          alpha[a] = sum - C;
        }
      } else if (alpha[a] < 0.0) {
        alpha[a] = 0.0;
        alpha[b] = sum;
      }
    }
    const double da = alpha[a] - old_a, db = alpha[b] - old_b;
    for (std::size_t t = 0; t < n; ++t) G[t] += Q(a, t) * da + Q(b, t) * db;
  }

  double ub = INFINITY, lb = -INFINITY, sum_free = 0.0;
  int free_count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * G[t];
    if (alpha[t] >= C) {
      if (y[t] == -1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0.0) {
      if (y[t] == 1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++free_count;
      sum_free += yg;
    }
  }
  rho = free_count > 0 ? sum_free / free_count : 0.5 * (ub + lb);
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma) {
  const Eigen::VectorXd na = a.rowwise().squaredNorm(), nb = b.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = -2.0 * a * b.transpose();
  d2.colwise() += na;
  d2.rowwise() += nb.transpose();
  return (-gamma * d2.cwiseMax(0.0)).array().exp().matrix();
}

std::vector<const Tile*> tiles_for(const Dataset& dataset, const std::vector<ImageId>& ids) {
  std::vector<const Tile*> out;
  out.reserve(ids.size());
  for (ImageId id : ids) out.push_back(&dataset.by_id(id).pixels);
  return out;
}

}  // namespace

double logreg_objective(const LinearClassifier& model, const Eigen::MatrixXd& h, const std::vector<int>& labels,
                        double l2, LinearClassifier* grad) {
  const Eigen::Index n = h.rows();
  Eigen::MatrixXd s = h * model.weights.transpose();
  s.rowwise() += model.biases.transpose();
  Eigen::MatrixXd p = softmax_rows(s);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const double mx = s.row(i).maxCoeff();
    loss += mx + std::log((s.row(i).array() - mx).exp().sum()) - s(i, y);
    p(i, y) -= 1.0;
  }
  loss = loss / static_cast<double>(n) + 0.5 * l2 * model.weights.squaredNorm();
  if (grad) {
    p /= static_cast<double>(n);
    grad->weights = p.transpose() * h + l2 * model.weights;
    grad->biases = p.colwise().sum().transpose();
  }
  return loss;
}

LinearClassifier fit_logreg(const Eigen::MatrixXd& h, const std::vector<int>& labels, int class_count,
                            const LogRegConfig& config) {
  check_training_set(h, labels, class_count, "fit_logreg");
  if (config.l2 < 0.0) throw UsageError("fit_logreg: l2 must be >= 0");
  LinearClassifier model;
  model.weights = Eigen::MatrixXd::Zero(class_count, h.cols());
  model.biases = Eigen::VectorXd::Zero(class_count);
  LinearClassifier grad, trial;
  double step = 1.0;
  double f = logreg_objective(model, h, labels, config.l2, &grad);
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    const double g2 = grad.weights.squaredNorm() + grad.biases.squaredNorm();
    if (std::sqrt(g2) < config.tolerance) break;
    double f_new = f;
    bool accepted = false;
    for (; step > 1e-20; step *= 0.5) {
      trial.weights = model.weights - step * grad.weights;
      trial.biases = model.biases - step * grad.biases;
      f_new = logreg_objective(trial, h, labels, config.l2);
      if (f_new <= f - 0.5 * step * g2) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    model.weights.swap(trial.weights);
    model.biases.swap(trial.biases);
    model.iterations = iter + 1;
    f = logreg_objective(model, h, labels, config.l2, &grad);
    step = std::min(step * 2.0, 1e6);
  }
  if (!model.weights.allFinite() || !model.biases.allFinite())
    throw NumericalError("fit_logreg: non-finite weights");
  return model;
}

double rbf(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b, double gamma) {
  return std::exp(-gamma * (a - b).squaredNorm());
}

SvmModel fit_svm_rbf(const Eigen::MatrixXd& h, const std::vector<int>& labels, int class_count,
                     const SvmConfig& config) {
  check_training_set(h, labels, class_count, "fit_svm_rbf");
  if (!(config.C > 0.0)) throw UsageError("fit_svm_rbf: C must be > 0");
  SvmModel model;
  model.C = config.C;
  if (config.gamma) {
    if (!(*config.gamma > 0.0)) throw UsageError("fit_svm_rbf: gamma must be > 0");
    model.gamma = *config.gamma;
  } else {
    const double mean = h.mean();
    const double var = (h.array() - mean).square().mean();
    model.gamma = var > 0.0 ? 1.0 / (static_cast<double>(h.cols()) * var) : 1.0;
  }
  const Eigen::MatrixXd K = kernel_matrix(h, h, model.gamma);
  model.machines.resize(static_cast<std::size_t>(class_count));
  parallel_for(static_cast<std::size_t>(class_count), config.jobs, [&](std::size_t c) {
    BinarySvm& m = model.machines[c];
    std::vector<int> y(labels.size());
    bool any = false;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      y[i] = labels[i] == static_cast<int>(c) ? 1 : -1;
      any = any || y[i] == 1;
    }
    if (!any) return;
    m.trained = true;
    solve_binary(K, y, model.C, config.tolerance, m.alpha, m.rho);
    for (std::size_t i = 0; i < y.size(); ++i)
      if (m.alpha[i] > 0.0) m.support_index.push_back(static_cast<int>(i));
    m.support.resize(static_cast<Eigen::Index>(m.support_index.size()), h.cols());
    m.coef.resize(static_cast<Eigen::Index>(m.support_index.size()));
    for (std::size_t k = 0; k < m.support_index.size(); ++k) {
      const auto i = static_cast<std::size_t>(m.support_index[k]);
      m.support.row(static_cast<Eigen::Index>(k)) = h.row(static_cast<Eigen::Index>(i));
      m.coef(static_cast<Eigen::Index>(k)) = m.alpha[i] * y[i];
    }
  });
  return model;
}

Prediction predict(const LinearClassifier& model, const Eigen::MatrixXd& h) {
  if (h.cols() != model.weights.cols())
    throw DataError("predict: latent dimension " + std::to_string(h.cols()) + " does not match model dimension " +
                    std::to_string(model.weights.cols()));
  Eigen::MatrixXd s = h * model.weights.transpose();
  s.rowwise() += model.biases.transpose();
  Prediction p;
  p.scores = softmax_rows(s);
  p.labels = argmax_rows(s);
  return p;
}

Prediction predict(const SvmModel& model, const Eigen::MatrixXd& h) {
  const auto classes = static_cast<Eigen::Index>(model.machines.size());
  Prediction p;
  p.scores = Eigen::MatrixXd::Constant(h.rows(), classes, -INFINITY);
  for (Eigen::Index c = 0; c < classes; ++c) {
    const BinarySvm& m = model.machines[static_cast<std::size_t>(c)];
    if (!m.trained) continue;
    if (h.cols() != m.support.cols())
      throw DataError("predict: latent dimension " + std::to_string(h.cols()) + " does not match model dimension " +
                      std::to_string(m.support.cols()));
    p.scores.col(c) = (kernel_matrix(h, m.support, model.gamma) * m.coef).array() - m.rho;
  }
  p.labels = argmax_rows(p.scores);
  return p;
}

FineTunedModel attach_head(const TrainedEncoder& encoder, int class_count, std::uint64_t seed) {
  if (class_count < 2) throw UsageError("fine-tune: need at least 2 classes");
  FineTunedModel m;
  m.encoder = encoder;
  m.encoder.optimizer = OptimizerState{};
  m.class_count = class_count;
  Rng rng = make_rng(seed, {kHeadStream});
  init_dense(m.head, "head.fc", encoder.config.latent_dim, class_count, rng);
  return m;
}

FineTunedModel finetune(const TrainedEncoder& encoder, const Dataset& dataset, const std::map<ImageId, int>& labels,
                        int class_count, const FineTuneConfig& config) {
  if (config.epochs < 0) throw UsageError("fine-tune: epochs must be >= 0");
  if (config.batch_size < 1) throw UsageError("fine-tune: batch size must be >= 1");
  std::set<int> present;
  for (const auto& [id, y] : labels) {
    if (y < 0 || y >= class_count) throw DataError("fine-tune: label out of range for id " + std::to_string(id));
    present.insert(y);
  }
  if (present.size() < 2) throw DataError("fine-tune: labels must cover at least 2 classes");

  FineTunedModel model = attach_head(encoder, class_count, config.seed);
  OptimizerSettings settings;
  settings.learning_rate = config.learning_rate;
  settings.weight_decay = config.weight_decay;
  OptimizerState enc_state{settings, 0, {}, {}};
  OptimizerState head_state{settings, 0, {}, {}};

  std::vector<ImageId> ids;
  for (const auto& kv : labels) ids.push_back(kv.first);
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), ids.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng = make_rng(config.seed, {kTuneShuffle, static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[uniform_index(rng, i)]);
    for (std::size_t first = 0; first < ids.size(); first += batch) {
      const std::size_t count = std::min(batch, ids.size() - first);
      const std::vector<ImageId> part(ids.begin() + static_cast<std::ptrdiff_t>(first),
                                      ids.begin() + static_cast<std::ptrdiff_t>(first + count));
      nn::ForwardResult fwd = nn::forward(model.encoder.config, model.encoder.params, tiles_for(dataset, part));
      const Eigen::MatrixXd logits = nn::dense_forward(fwd.h, model.head.at("head.fc.w"), model.head.at("head.fc.b"));
      Eigen::MatrixXd dlogits = softmax_rows(logits);
      for (std::size_t k = 0; k < count; ++k) dlogits(static_cast<Eigen::Index>(k), labels.at(part[k])) -= 1.0;
      dlogits /= static_cast<double>(count);
      Parameters head_grads = zeros_like(model.head);
      const Eigen::MatrixXd dh = nn::dense_backward(fwd.h, model.head.at("head.fc.w"), dlogits,
                                                    head_grads["head.fc.w"], head_grads["head.fc.b"]);
      Parameters grads = nn::backward(model.encoder.config, model.encoder.params, fwd.tape, dh, {});
      std::erase_if(grads, [](const auto& kv) { return kv.first.rfind("proj.", 0) == 0; });
      optimizer_step(model.encoder.params, grads, enc_state);
      optimizer_step(model.head, head_grads, head_state);
    }
  }
  return model;
}

Prediction predict(const FineTunedModel& model, const std::vector<const Tile*>& tiles) {
  const Eigen::MatrixXd h = nn::embed(model.encoder.config, model.encoder.params, tiles);
  const Eigen::MatrixXd logits = nn::dense_forward(h, model.head.at("head.fc.w"), model.head.at("head.fc.b"));
  Prediction p;
  p.scores = softmax_rows(logits);
  p.labels = argmax_rows(logits);
  return p;
}

std::string to_string(Generator g) { return g == Generator::Svm ? "svm" : "linear"; }

Generator parse_generator(const std::string& text) {
  if (text == "linear") return Generator::Linear;
  if (text == "svm") return Generator::Svm;
  throw UsageError("unknown classifier '" + text + "' (expected linear or svm)");
}

PseudoLabelResult pseudo_label_pipeline(const TrainedEncoder& encoder, const Dataset& dataset,
                                        const Eigen::MatrixXd& latents, const std::map<ImageId, int>& annotations,
                                        int class_count, const PseudoLabelConfig& config,
                                        const std::set<ImageId>& excluded) {
  if (static_cast<std::size_t>(latents.rows()) != dataset.size())
    throw UsageError("pseudo-label: latents must cover the whole dataset");
  if (annotations.size() < static_cast<std::size_t>(class_count))
    throw UsageError("pseudo-label: need at least C = " + std::to_string(class_count) + " annotations");
  Eigen::MatrixXd h(static_cast<Eigen::Index>(annotations.size()), latents.cols());
  std::vector<int> y;
  Eigen::Index row = 0;
  for (const auto& [id, label] : annotations) {
    if (excluded.count(id)) throw DataError("pseudo-label: annotated id " + std::to_string(id) + " is held out");
    h.row(row++) = latents.row(static_cast<Eigen::Index>(dataset.index_of(id)));
    y.push_back(label);
  }
  const Prediction pred = config.generator == Generator::Svm
                              ? predict(fit_svm_rbf(h, y, class_count, config.svm), latents)
                              : predict(fit_logreg(h, y, class_count, config.logreg), latents);
  PseudoLabelResult out;
  out.pseudo.generator = config.generator;
  for (std::size_t i = 0; i < dataset.size(); ++i) out.pseudo.labels[dataset.images[i].id] = pred.labels[i];
  for (const auto& [id, label] : annotations) out.pseudo.labels[id] = label;

  std::map<ImageId, int> training;
  for (const auto& kv : out.pseudo.labels)
    if (!excluded.count(kv.first)) training.insert(kv);
  out.model = finetune(encoder, dataset, training, class_count, config.finetune);
  return out;
}

void save_classifier(const std::string& path, const ClassifierModel& model) {
  Container c;
  c.config["kind"] = "classifier";
  c.config["class_names"] = model.class_names;
  c.config["training_ids"] = model.training_ids;
  c.config["meta"] = model.meta;
  auto put_encoder = [&](const TrainedEncoder& enc) {
    c.config["encoder"] = enc.config.to_json();
    for (const auto& [name, t] : enc.params) c.tensors[kEncoderPrefix + name] = t;
  };
  switch (model.kind) {
    case ClassifierModel::Kind::Linear:
      c.config["classifier"] = "linear";
      c.tensors["linear.weights"] = to_tensor(model.linear.weights);
      c.tensors["linear.biases"] = to_tensor(model.linear.biases);
      break;
    case ClassifierModel::Kind::Svm: {
      c.config["classifier"] = "svm";
      c.config["svm"] = {{"C", model.svm.C}, {"gamma", model.svm.gamma}};
      std::vector<bool> trained;
      for (std::size_t k = 0; k < model.svm.machines.size(); ++k) {
        const BinarySvm& m = model.svm.machines[k];
        trained.push_back(m.trained);
        if (!m.trained) continue;
        const std::string p = "svm." + std::to_string(k) + ".";
        c.tensors[p + "support"] = to_tensor(m.support);
        c.tensors[p + "coef"] = to_tensor(m.coef);
        c.tensors[p + "rho"] = to_tensor(Eigen::VectorXd(Eigen::VectorXd::Constant(1, m.rho)));
      }
      c.config["svm"]["trained"] = trained;
      break;
    }
    case ClassifierModel::Kind::FineTuned:
      c.config["classifier"] = "finetuned";
      put_encoder(model.finetuned.encoder);
      for (const auto& [name, t] : model.finetuned.head) c.tensors[name] = t;
      break;
  }
  if (model.kind != ClassifierModel::Kind::FineTuned && model.encoder) put_encoder(*model.encoder);
  write_container(path, c);
}

ClassifierModel load_classifier(const std::string& path) {
  const Container c = read_container(path);
  if (c.config.value("kind", std::string()) != "classifier")
    throw DataError(path + " is not a classifier model file");
  auto tensor = [&](const std::string& name) -> const Tensor& {
    auto it = c.tensors.find(name);
    if (it == c.tensors.end()) throw DataError(path + ": missing block '" + name + "'");
    return it->second;
  };
  ClassifierModel m;
  try {
    m.class_names = c.config.at("class_names").get<std::vector<std::string>>();
    m.training_ids = c.config.at("training_ids").get<std::vector<ImageId>>();
    m.meta = c.config.value("meta", nlohmann::json::object());
    std::optional<TrainedEncoder> enc;
    if (c.config.contains("encoder")) {
      Container sub;
      sub.config["encoder"] = c.config.at("encoder");
      for (const auto& [name, t] : c.tensors)
        if (name.rfind(kEncoderPrefix, 0) == 0) sub.tensors[name.substr(kEncoderPrefix.size())] = t;
      enc = encoder_from_container(sub);
    }
    const std::string kind = c.config.at("classifier").get<std::string>();
    const int classes = m.class_count();
    if (kind == "linear") {
      m.kind = ClassifierModel::Kind::Linear;
      m.linear.weights = tensor("linear.weights").matrix();
      m.linear.biases = tensor("linear.biases").vector();
      if (m.linear.weights.rows() != classes || m.linear.biases.size() != classes)
        throw DataError(path + ": linear weights do not match the class list");
      m.encoder = enc;
    } else if (kind == "svm") {
      m.kind = ClassifierModel::Kind::Svm;
      m.svm.C = c.config.at("svm").at("C").get<double>();
      m.svm.gamma = c.config.at("svm").at("gamma").get<double>();
      const auto trained = c.config.at("svm").at("trained").get<std::vector<bool>>();
      if (static_cast<int>(trained.size()) != classes) throw DataError(path + ": SVM does not match the class list");
      m.svm.machines.resize(trained.size());
      for (std::size_t k = 0; k < trained.size(); ++k) {
        if (!trained[k]) continue;
        BinarySvm& b = m.svm.machines[k];
        const std::string p = "svm." + std::to_string(k) + ".";
        b.trained = true;
        b.support = tensor(p + "support").matrix();
        b.coef = tensor(p + "coef").vector();
        b.rho = tensor(p + "rho").values.at(0);
        if (b.coef.size() != b.support.rows()) throw DataError(path + ": SVM block '" + p + "' is inconsistent");
      }
      m.encoder = enc;
    } else if (kind == "finetuned") {
      m.kind = ClassifierModel::Kind::FineTuned;
      if (!enc) throw DataError(path + ": fine-tuned model without encoder");
      m.finetuned.encoder = *enc;
      m.finetuned.class_count = classes;
      m.finetuned.head["head.fc.w"] = tensor("head.fc.w");
      m.finetuned.head["head.fc.b"] = tensor("head.fc.b");
      if (m.finetuned.head["head.fc.w"].shape != std::vector<int>{enc->config.latent_dim, classes})
        throw DataError(path + ": classification head does not match the encoder or class list");
    } else {
      throw DataError(path + ": unknown classifier kind '" + kind + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed classifier config (" + e.what() + ")");
  }
  return m;
}

Prediction predict_latents(const ClassifierModel& model, const Eigen::MatrixXd& h) {
  switch (model.kind) {
    case ClassifierModel::Kind::Linear: return predict(model.linear, h);
    case ClassifierModel::Kind::Svm: return predict(model.svm, h);
    case ClassifierModel::Kind::FineTuned: break;
  }
  throw UsageError("a fine-tuned model predicts from images, not latents");
}

Prediction predict_images(const ClassifierModel& model, const std::vector<const Tile*>& tiles) {
  if (model.kind == ClassifierModel::Kind::FineTuned) return predict(model.finetuned, tiles);
  if (!model.encoder) throw UsageError("model has no embedded encoder; supply latents instead");
  return predict_latents(model, nn::embed(model.encoder->config, model.encoder->params, tiles));
}

}  // namespace geoclr
