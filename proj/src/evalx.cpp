#include "geoclr/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <tuple>

namespace geoclr {

double macro_f1(const std::vector<int>& predicted, const std::vector<int>& truth, int class_count) {
  if (predicted.size() != truth.size()) throw UsageError("macro_f1: prediction and truth lengths differ");
  if (predicted.empty()) throw UsageError("macro_f1: need at least one label");
  if (class_count < 1) throw UsageError("macro_f1: class count must be >= 1");
  std::vector<double> tp(static_cast<std::size_t>(class_count)), fp(tp), fn(tp);
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const int p = predicted[i], t = truth[i];
    if (p < 0 || p >= class_count || t < 0 || t >= class_count)
      throw UsageError("macro_f1: label out of range at position " + std::to_string(i));
    if (p == t) {
      tp[static_cast<std::size_t>(p)] += 1;
    } else {
      fp[static_cast<std::size_t>(p)] += 1;
      fn[static_cast<std::size_t>(t)] += 1;
    }
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < tp.size(); ++c) {
    const double precision = tp[c] + fp[c] > 0 ? tp[c] / (tp[c] + fp[c]) : 0.0;
    const double recall = tp[c] + fn[c] > 0 ? tp[c] / (tp[c] + fn[c]) : 0.0;
    if (precision + recall > 0) sum += 2.0 * precision * recall / (precision + recall);
  }
  return sum / class_count;
}

TrialResult run_trials(const std::string& label, int repeats, std::uint64_t base_seed,
                       const std::function<double(std::uint64_t)>& fn) {
  if (repeats < 1) throw UsageError("run_trials: repeats must be >= 1");
  TrialResult r;
  r.label = label;
  for (int k = 0; k < repeats; ++k) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(k);
    double score = 0.0;
    try {
      score = fn(seed);
    } catch (const DataError& e) {
      throw DataError(label + " seed " + std::to_string(seed) + ": " + e.what());
    } catch (const NumericalError& e) {
      throw NumericalError(label + " seed " + std::to_string(seed) + ": " + e.what());
    } catch (const UsageError& e) {
      throw UsageError(label + " seed " + std::to_string(seed) + ": " + e.what());
    }
    r.seeds.push_back(seed);
    r.scores.push_back(score);
  }
  // Shifted by the first score so identical scores give that score and SD 0 exactly.
  const double shift = r.scores.front();
  double offset = 0.0;
  for (double s : r.scores) offset += s - shift;
  offset /= repeats;
  r.mean = shift + offset;
  double ss = 0.0;
  for (double s : r.scores) ss += (s - shift - offset) * (s - shift - offset);
  r.sd = std::sqrt(ss / repeats);
  return r;
}

std::vector<ImageId> draw_validation(const Dataset& dataset, int per_class, std::uint64_t seed) {
  if (per_class < 1) throw UsageError("validation: per-class count must be >= 1");
  std::vector<std::vector<ImageId>> by_class(dataset.class_names.size());
  for (const auto& img : dataset.images) {
    if (!img.label) throw DataError("validation: image " + std::to_string(img.id) + " has no ground-truth label");
    by_class[static_cast<std::size_t>(*img.label)].push_back(img.id);
  }
  std::vector<ImageId> out;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& pool = by_class[c];
    std::sort(pool.begin(), pool.end());
    if (pool.size() < static_cast<std::size_t>(per_class))
      throw DataError("validation: class '" + dataset.class_names[c] + "' has only " + std::to_string(pool.size()) +
                      " images");
    Rng rng = make_rng(seed, {0x56414c, c});
    for (std::size_t i = 0; i < static_cast<std::size_t>(per_class); ++i)
      std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
    out.insert(out.end(), pool.begin(), pool.begin() + per_class);
  }
  return out;
}

void assert_disjoint(const std::vector<ImageId>& training, const std::set<ImageId>& validation, const std::string& what) {
  for (ImageId id : training)
    if (validation.count(id))
      throw std::logic_error(what + ": validation id " + std::to_string(id) + " used for training");
}

std::string to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::Linear: return "linear";
    case ClassifierKind::Svm: return "svm";
    case ClassifierKind::FineTune: return "finetune";
    case ClassifierKind::PseudoLinear: return "pl-linear";
    case ClassifierKind::PseudoSvm: return "pl-svm";
  }
  return "?";
}

ClassifierKind parse_classifier(const std::string& text) {
  for (auto k : {ClassifierKind::Linear, ClassifierKind::Svm, ClassifierKind::FineTune, ClassifierKind::PseudoLinear,
                 ClassifierKind::PseudoSvm})
    if (to_string(k) == text) return k;
  throw UsageError("unknown classifier '" + text + "' (expected linear, svm, finetune, pl-linear or pl-svm)");
}

EvalContext::EvalContext(const Dataset& data, const TrainedEncoder& enc, const ProtocolConfig& config)
    : dataset(&data), encoder(&enc) {
  std::vector<const Tile*> tiles;
  for (const auto& img : data.images) {
    if (!img.label) throw DataError("evaluation: image " + std::to_string(img.id) + " has no ground-truth label");
    truth[img.id] = *img.label;
    tiles.push_back(&img.pixels);
  }
  latents = nn::embed(enc.config, enc.params, tiles);
  validation = draw_validation(data, config.validation_per_class, config.validation_seed);
  validation_set.insert(validation.begin(), validation.end());
  for (const auto& img : data.images)
    if (!validation_set.count(img.id)) pool.push_back(img.id);
}

TrialOutcome evaluate_once(const EvalContext& ctx, ClassifierKind classifier, Strategy strategy, int M,
                           std::uint64_t seed, const ProtocolConfig& config) {
  const Dataset& data = *ctx.dataset;
  const int C = static_cast<int>(data.class_names.size());
  auto latents_of = [&](const std::vector<ImageId>& ids) {
    Eigen::MatrixXd h(static_cast<Eigen::Index>(ids.size()), ctx.latents.cols());
    for (std::size_t i = 0; i < ids.size(); ++i)
      h.row(static_cast<Eigen::Index>(i)) = ctx.latents.row(static_cast<Eigen::Index>(data.index_of(ids[i])));
    return h;
  };

  SelectionConfig sel;
  sel.M = M;
  sel.strategy = strategy;
  sel.m = config.m;
  sel.seed = seed;
  std::map<ImageId, int> pool_labels;
  if (strategy == Strategy::Balanced)
    for (ImageId id : ctx.pool) pool_labels[id] = ctx.truth.at(id);
  TrialOutcome out;
  out.selected = select_annotations(sel, ctx.pool, latents_of(ctx.pool), pool_labels, C, config.jobs);
  assert_disjoint(out.selected, ctx.validation_set, "selection");

  std::map<ImageId, int> annotations;
  std::vector<int> y;
  for (ImageId id : out.selected) {
    annotations[id] = ctx.truth.at(id);
    y.push_back(ctx.truth.at(id));
  }
  std::vector<int> val_truth;
  std::vector<const Tile*> val_tiles;
  for (ImageId id : ctx.validation) {
    val_truth.push_back(ctx.truth.at(id));
    val_tiles.push_back(&data.by_id(id).pixels);
  }

  FineTuneConfig tune = config.finetune;
  tune.seed = derive_seed(seed, {0x46494e45});
  switch (classifier) {
    case ClassifierKind::Linear:
      out.validation_predictions =
          predict(fit_logreg(latents_of(out.selected), y, C, config.logreg), latents_of(ctx.validation)).labels;
      break;
    case ClassifierKind::Svm: {
      SvmConfig svm = config.svm;
      svm.jobs = config.jobs;
      out.validation_predictions =
          predict(fit_svm_rbf(latents_of(out.selected), y, C, svm), latents_of(ctx.validation)).labels;
      break;
    }
    case ClassifierKind::FineTune:
      out.validation_predictions = predict(finetune(*ctx.encoder, data, annotations, C, tune), val_tiles).labels;
      break;
    case ClassifierKind::PseudoLinear:
    case ClassifierKind::PseudoSvm: {
      PseudoLabelConfig pl;
      pl.generator = classifier == ClassifierKind::PseudoSvm ? Generator::Svm : Generator::Linear;
      pl.logreg = config.logreg;
      pl.svm = config.svm;
      pl.svm.jobs = config.jobs;
      pl.finetune = tune;
      const PseudoLabelResult r =
          pseudo_label_pipeline(*ctx.encoder, data, ctx.latents, annotations, C, pl, ctx.validation_set);
      out.validation_predictions = predict(r.model, val_tiles).labels;
      break;
    }
  }
  out.f1 = macro_f1(out.validation_predictions, val_truth, C);
  return out;
}

void SweepGrid::validate() const {
  if (modes.empty() || classifiers.empty() || strategies.empty() || Ms.empty() || rs.empty() || lambdas.empty())
    throw UsageError("sweep: every grid axis needs at least one value");
  if (repeats < 1) throw UsageError("sweep: repeats must be >= 1");
  for (int M : Ms)
    if (M < 1) throw UsageError("sweep: M values must be >= 1");
  for (double r : rs)
    if (r < 0.0) throw UsageError("sweep: r values must be >= 0");
  for (double l : lambdas)
    if (l < 0.0) throw UsageError("sweep: lambda values must be >= 0");
}

SweepGrid sweep_grid_from(const KvConfig& kv) {
  SweepGrid g;
  g.modes.clear();
  for (const auto& s : kv.get_strings("grid.modes", {"geoclr"})) g.modes.push_back(parse_pair_mode(s));
  g.classifiers.clear();
  for (const auto& s : kv.get_strings("grid.classifiers", {"linear"})) g.classifiers.push_back(parse_classifier(s));
  g.strategies.clear();
  for (const auto& s : kv.get_strings("grid.strategies", {"hkmeans"})) g.strategies.push_back(parse_strategy(s));
  g.Ms.clear();
  for (double v : kv.get_doubles("grid.M", {40})) {
    if (v != std::floor(v)) throw UsageError("sweep: M values must be integers");
    g.Ms.push_back(static_cast<int>(v));
  }
  g.rs = kv.get_doubles("grid.r", {1.0});
  g.lambdas = kv.get_doubles("grid.lambda", {1.0});
  g.repeats = static_cast<int>(kv.get_int("grid.repeats", g.repeats));
  g.base_seed = static_cast<std::uint64_t>(kv.get_int("grid.seed", static_cast<long long>(g.base_seed)));

  TrainConfig& t = g.train;
  t.epochs = static_cast<int>(kv.get_int("train.epochs", t.epochs));
  t.encoder.input_size = static_cast<int>(kv.get_int("train.tile", t.encoder.input_size));
  t.loss.temperature = kv.get_double("train.tau", t.loss.temperature);
  t.loss.batch_size = static_cast<int>(kv.get_int("train.batch", t.loss.batch_size));
  t.optimizer.learning_rate = kv.get_double("train.learning_rate", t.optimizer.learning_rate);
  t.optimizer.weight_decay = kv.get_double("train.weight_decay", t.optimizer.weight_decay);
  t.seed = static_cast<std::uint64_t>(kv.get_int("train.seed", static_cast<long long>(t.seed)));

  ProtocolConfig& p = g.protocol;
  p.validation_per_class = static_cast<int>(kv.get_int("protocol.validation_per_class", p.validation_per_class));
  p.validation_seed =
      static_cast<std::uint64_t>(kv.get_int("protocol.validation_seed", static_cast<long long>(p.validation_seed)));
  if (kv.has("protocol.m")) p.m = static_cast<int>(kv.get_int("protocol.m", 0));
  p.finetune.epochs = static_cast<int>(kv.get_int("protocol.finetune_epochs", p.finetune.epochs));
  p.svm.C = kv.get_double("protocol.svm_C", p.svm.C);
  p.logreg.l2 = kv.get_double("protocol.logreg_l2", p.logreg.l2);

  const auto unknown = kv.unknown_keys();
  if (!unknown.empty()) throw UsageError("unknown sweep config key '" + unknown.front() + "'");
  g.validate();
  return g;
}

std::vector<SweepCell> sweep(const Dataset& dataset, const SweepGrid& grid) {
  grid.validate();
  std::vector<SweepCell> cells;
  using EncoderKey = std::tuple<int, double, double>;
  std::map<EncoderKey, TrainedEncoder> encoders;
  std::map<EncoderKey, std::string> failures;
  for (PairMode mode : grid.modes)
    for (double r : grid.rs)
      for (double lambda : grid.lambdas) {
        const EncoderKey key = mode == PairMode::SimClr ? EncoderKey{0, 0.0, 0.0} : EncoderKey{1, r, lambda};
        if (!encoders.count(key) && !failures.count(key)) {
          TrainConfig t = grid.train;
          t.mode = mode;
          t.pairs.r = r;
          t.pairs.lambda = lambda;
          t.jobs = grid.protocol.jobs;
          try {
            encoders.emplace(key, train(dataset, t).encoder);
          } catch (const std::exception& e) {
            failures[key] = std::string("training failed: ") + e.what();
          }
        }
        std::optional<EvalContext> ctx;
        std::string ctx_error = failures.count(key) ? failures.at(key) : "";
        if (ctx_error.empty()) {
          try {
            ctx.emplace(dataset, encoders.at(key), grid.protocol);
          } catch (const std::exception& e) {
            ctx_error = e.what();
          }
        }
        for (ClassifierKind classifier : grid.classifiers)
          for (Strategy strategy : grid.strategies)
            for (int M : grid.Ms) {
              SweepCell cell{mode, classifier, strategy, M, r, lambda, {}, ctx_error};
              if (ctx) {
                const std::string label = to_string(mode) + "/" + to_string(classifier) + "/" + to_string(strategy) +
                                          "/M=" + std::to_string(M);
                try {
                  cell.result = run_trials(label, grid.repeats, grid.base_seed, [&](std::uint64_t seed) {
                    return evaluate_once(*ctx, classifier, strategy, M, seed, grid.protocol).f1;
                  });
                } catch (const std::exception& e) {
                  cell.error = e.what();
                }
              }
              cells.push_back(std::move(cell));
            }
      }
  return cells;
}

namespace {

std::string cell_prefix(const SweepCell& c) {
  return to_string(c.mode) + "," + to_string(c.classifier) + "," + to_string(c.strategy) + "," + std::to_string(c.M) +
         "," + format_double(c.r, 3) + "," + format_double(c.lambda, 3);
}

std::string csv_escape(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + "\"";
}

}  // namespace

void write_sweep_results(const std::string& path, const std::vector<SweepCell>& cells) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f << "mode,classifier,strategy,M,r,lambda,seed,f1\n";
  for (const auto& c : cells)
    for (std::size_t k = 0; k < c.result.scores.size(); ++k)
      f << cell_prefix(c) << ',' << c.result.seeds[k] << ',' << format_double(c.result.scores[k], 6) << '\n';
  if (!f) throw DataError("write failed: " + path);
}

void write_sweep_summary(const std::string& path, const std::vector<SweepCell>& cells) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f << "mode,classifier,strategy,M,r,lambda,repeats,mean_f1,sd_f1_population,error\n";
  for (const auto& c : cells) {
    f << cell_prefix(c) << ',' << c.result.scores.size() << ',';
    if (c.error.empty())
      f << format_double(c.result.mean, 6) << ',' << format_double(c.result.sd, 6) << ",\n";
    else
      f << ",," << csv_escape(c.error) << '\n';
  }
  if (!f) throw DataError("write failed: " + path);
}

}  // namespace geoclr
