#include "geoclr/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "geoclr/checkpoint.hpp"
#include "geoclr/classify.hpp"
#include "geoclr/contrastive.hpp"
#include "geoclr/evalx.hpp"
#include "geoclr/report.hpp"
#include "geoclr/select.hpp"
#include "geoclr/surveysim.hpp"

namespace geoclr {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string exact(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f << j.dump(2) << "\n";
}

// run.json sits next to file outputs as "<file>.run.json" and inside
// directory outputs as "run.json".
void write_run_record(const std::string& output, bool is_dir, nlohmann::json record) {
  const std::string path = is_dir ? (fs::path(output) / "run.json").string() : output + ".run.json";
  write_json(path, record);
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw DataError("cannot create directory " + parent.string() + ": " + ec.message());
}

std::set<ImageId> read_id_set(const std::string& path) {
  std::set<ImageId> ids;
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path);
  std::string header;
  std::getline(f, header);
  f.close();
  if (header.rfind("rank,id", 0) == 0) {
    for (ImageId id : read_selection(path)) ids.insert(id);
  } else {
    for (const auto& row : read_annotations(path)) ids.insert(row.first);
  }
  return ids;
}

struct Globals {
  int jobs = 0;
  bool timing = false;
};

// Records and labels only; for stages that work from latents and never
// touch pixels.
Dataset dataset_metadata(const std::string& manifest_path) {
  const DatasetManifest m = load_manifest(manifest_path);
  Dataset d;
  d.class_names = m.class_names;
  for (const auto& r : m.records) {
    GeorefImage img;
    img.id = r.id;
    img.georef = r.georef;
    img.dive = r.dive;
    if (r.label) img.label = m.class_index(*r.label);
    d.images.push_back(std::move(img));
  }
  d.reindex();
  return d;
}

// ---------------------------------------------------------------- commands

struct SimulateArgs {
  std::string config, out;
  long long seed = -1;
};

void cmd_simulate(const SimulateArgs& a, const Globals& g, std::ostream& out) {
  SimulationConfig sim;
  if (!a.config.empty()) sim = simulation_config_from(KvConfig::load(a.config));
  if (a.seed >= 0) sim.seed = sim.world.seed = static_cast<std::uint64_t>(a.seed);
  const World world = generate_world(sim.world);
  const Survey survey = generate_survey(world, sim.trajectory, sim.tile_size, sim.seed, g.jobs);
  write_survey(a.out, survey, world);
  write_run_record(a.out, true,
                   {{"command", "simulate"},
                    {"config_file", a.config},
                    {"world", world.to_json()},
                    {"trajectory",
                     {{"line_spacing", sim.trajectory.line_spacing},
                      {"interval", sim.trajectory.interval},
                      {"east", {sim.trajectory.east_min, sim.trajectory.east_max}},
                      {"north", {sim.trajectory.north_min, sim.trajectory.north_max}},
                      {"dives", sim.trajectory.dives}}},
                    {"tile_size", sim.tile_size},
                    {"seed", sim.seed}});
  out << "wrote " << survey.images.size() << " images to " << a.out << "\n";
}

struct TrainArgs {
  std::string manifest, out, loss_log, mode = "geoclr", optimizer = "adam";
  double r = 1.0, lambda = 1.0, tau = 0.07, lr = 3e-4, weight_decay = 1e-4;
  int batch = 32, epochs = 30, tile = 32;
  long long seed = 1;
};

void cmd_train(const TrainArgs& a, const Globals& g, std::ostream& out) {
  TrainConfig t;
  t.mode = parse_pair_mode(a.mode);
  t.pairs.r = a.r;
  t.pairs.lambda = a.lambda;
  t.loss.temperature = a.tau;
  t.loss.batch_size = a.batch;
  t.epochs = a.epochs;
  t.seed = static_cast<std::uint64_t>(a.seed);
  t.optimizer.learning_rate = a.lr;
  t.optimizer.weight_decay = a.weight_decay;
  if (a.optimizer == "sgd") t.optimizer.kind = OptimizerSettings::Kind::Sgd;
  else if (a.optimizer != "adam") throw UsageError("unknown optimizer '" + a.optimizer + "' (expected adam or sgd)");
  t.encoder.input_size = a.tile;
  t.jobs = g.jobs;
  t.validate();
  const Dataset data = load_dataset(a.manifest, a.tile, g.jobs);
  ensure_parent(a.out);
  const TrainResult result = train(data, t, {});
  save_checkpoint(a.out, result.encoder);
  const std::string log = a.loss_log.empty() ? a.out + ".loss.csv" : a.loss_log;
  write_loss_log(log, result.log, g.timing);
  nlohmann::json rec = {{"command", "train"}, {"manifest", a.manifest}, {"loss_log", log}, {"config", t.to_json()}};
  write_run_record(a.out, false, rec);
  if (!result.log.empty())
    out << "trained " << result.log.size() << " epochs, final mean loss " << format_double(result.log.back().mean_loss, 6)
        << "\n";
}

struct EmbedArgs {
  std::string checkpoint, manifest, out;
};

void cmd_embed(const EmbedArgs& a, const Globals& g, std::ostream& out) {
  const TrainedEncoder enc = load_checkpoint(a.checkpoint);
  const Dataset data = load_dataset(a.manifest, enc.config.input_size, g.jobs);
  std::vector<const Tile*> tiles;
  for (const auto& img : data.images) tiles.push_back(&img.pixels);
  LatentTable table{data.ids(), nn::embed(enc.config, enc.params, tiles)};
  ensure_parent(a.out);
  write_latents(a.out, table);
  write_run_record(a.out, false, {{"command", "embed"}, {"checkpoint", a.checkpoint}, {"manifest", a.manifest}});
  out << "embedded " << table.ids.size() << " images (d = " << table.h.cols() << ")\n";
}

struct SelectArgs {
  std::string latents, strategy = "hkmeans", m = "auto", exclude, manifest, out;
  int M = 100;
  long long seed = 1;
};

void cmd_select(const SelectArgs& a, const Globals& g, std::ostream& out) {
  SelectionConfig cfg;
  cfg.M = a.M;
  cfg.strategy = parse_strategy(a.strategy);
  cfg.seed = static_cast<std::uint64_t>(a.seed);
  if (a.m != "auto") {
    try {
      std::size_t used = 0;
      cfg.m = std::stoi(a.m, &used);
      if (used != a.m.size()) throw std::invalid_argument(a.m);
    } catch (const std::exception&) {
      throw UsageError("--m must be an integer or 'auto'");
    }
  }
  cfg.validate();
  const LatentTable table = read_latents(a.latents);
  std::set<ImageId> excluded;
  if (!a.exclude.empty()) excluded = read_id_set(a.exclude);
  std::vector<ImageId> ids;
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < table.ids.size(); ++i)
    if (!excluded.count(table.ids[i])) {
      ids.push_back(table.ids[i]);
      rows.push_back(static_cast<Eigen::Index>(i));
    }
  Eigen::MatrixXd h(static_cast<Eigen::Index>(rows.size()), table.h.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) h.row(static_cast<Eigen::Index>(i)) = table.h.row(rows[i]);

  std::map<ImageId, int> labels;
  int classes = 0;
  if (cfg.strategy == Strategy::Balanced) {
    if (a.manifest.empty()) throw UsageError("balanced selection needs --manifest for class labels");
    const DatasetManifest m = load_manifest(a.manifest);
    classes = static_cast<int>(m.class_names.size());
    const std::set<ImageId> pool(ids.begin(), ids.end());
    for (const auto& r : m.records)
      if (r.label && pool.count(r.id)) labels[r.id] = *m.class_index(*r.label);
  }
  const std::vector<ImageId> picks = select_annotations(cfg, ids, h, labels, classes, g.jobs);
  ensure_parent(a.out);
  write_selection(a.out, picks);
  write_run_record(a.out, false,
                   {{"command", "select"},
                    {"latents", a.latents},
                    {"strategy", a.strategy},
                    {"M", a.M},
                    {"m", a.m},
                    {"seed", a.seed},
                    {"exclude", a.exclude}});
  out << "selected " << picks.size() << " images\n";
}

struct AnnotateArgs {
  std::string manifest, selection, out;
  int validation_per_class = 0;
  long long seed = 7;
};

void cmd_annotate(const AnnotateArgs& a, const Globals&, std::ostream& out) {
  const DatasetManifest m = load_manifest(a.manifest);
  std::map<ImageId, std::string> truth;
  for (const auto& r : m.records)
    if (r.label) truth[r.id] = *r.label;
  std::vector<ImageId> ids;
  if (!a.selection.empty() == (a.validation_per_class > 0))
    throw UsageError("annotate needs exactly one of --selection or --validation-per-class");
  if (!a.selection.empty()) {
    ids = read_selection(a.selection);
  } else {
    Dataset d;
    d.class_names = m.class_names;
    for (const auto& r : m.records) {
      GeorefImage img;
      img.id = r.id;
      if (r.label) img.label = m.class_index(*r.label);
      d.images.push_back(std::move(img));
    }
    d.reindex();
    ids = draw_validation(d, a.validation_per_class, static_cast<std::uint64_t>(a.seed));
  }
  std::vector<std::pair<ImageId, std::string>> rows;
  for (ImageId id : ids) {
    const auto it = truth.find(id);
    if (it == truth.end()) throw DataError("no ground-truth label for id " + std::to_string(id));
    rows.emplace_back(id, it->second);
  }
  ensure_parent(a.out);
  write_annotations(a.out, rows);
  write_run_record(a.out, false,
                   {{"command", "annotate"},
                    {"manifest", a.manifest},
                    {"selection", a.selection},
                    {"validation_per_class", a.validation_per_class},
                    {"seed", a.seed}});
  out << "wrote " << rows.size() << " labels\n";
}

struct ClassifyArgs {
  std::string latents, annotations, classifier = "linear", checkpoint, manifest, exclude, out;
  bool pseudo = false;
  int epochs = 20;
  double svm_c = 1.0, l2 = 1e-4;
  long long seed = 1;
};

void cmd_classify(const ClassifyArgs& a, const Globals& g, std::ostream& out) {
  const Generator gen = parse_generator(a.classifier);
  const auto rows = read_annotations(a.annotations);
  ClassifierModel model;
  std::optional<Dataset> data;
  std::optional<TrainedEncoder> enc;
  if (!a.checkpoint.empty()) enc = load_checkpoint(a.checkpoint);
  if (!a.manifest.empty()) {
    data = a.pseudo && enc ? load_dataset(a.manifest, enc->config.input_size, g.jobs) : dataset_metadata(a.manifest);
    model.class_names = data->class_names;
  } else {
    std::set<std::string> names;
    for (const auto& r : rows) names.insert(r.second);
    model.class_names.assign(names.begin(), names.end());
  }
  const int C = model.class_count();
  auto index_of = [&](const std::string& name) {
    const auto it = std::find(model.class_names.begin(), model.class_names.end(), name);
    if (it == model.class_names.end()) throw DataError("annotation label '" + name + "' is not a known class");
    return static_cast<int>(it - model.class_names.begin());
  };
  std::set<ImageId> excluded;
  if (!a.exclude.empty()) excluded = read_id_set(a.exclude);

  const LatentTable table = read_latents(a.latents);
  std::map<ImageId, Eigen::Index> row_of;
  for (std::size_t i = 0; i < table.ids.size(); ++i) row_of[table.ids[i]] = static_cast<Eigen::Index>(i);
  std::map<ImageId, int> annotations;
  for (const auto& [id, name] : rows) annotations[id] = index_of(name);
  for (const auto& kv : annotations) model.training_ids.push_back(kv.first);
  assert_disjoint(model.training_ids, excluded, "classify");

  model.meta = {{"classifier", a.classifier},
                {"pseudo_finetune", a.pseudo},
                {"svm", {{"C", a.svm_c}}},
                {"logreg", {{"l2", a.l2}}},
                {"seed", a.seed}};
  if (!a.pseudo) {
    Eigen::MatrixXd h(static_cast<Eigen::Index>(annotations.size()), table.h.cols());
    std::vector<int> y;
    Eigen::Index r = 0;
    for (const auto& [id, label] : annotations) {
      const auto it = row_of.find(id);
      if (it == row_of.end()) throw DataError("annotated id " + std::to_string(id) + " has no latent vector");
      h.row(r++) = table.h.row(it->second);
      y.push_back(label);
    }
    if (gen == Generator::Linear) {
      model.kind = ClassifierModel::Kind::Linear;
      model.linear = fit_logreg(h, y, C, LogRegConfig{a.l2, 1e-6, 5000});
    } else {
      model.kind = ClassifierModel::Kind::Svm;
      SvmConfig svm;
      svm.C = a.svm_c;
      svm.jobs = g.jobs;
      model.svm = fit_svm_rbf(h, y, C, svm);
      model.meta["svm"]["gamma"] = model.svm.gamma;
    }
    model.encoder = enc;
  } else {
    if (!enc || !data) throw UsageError("--pseudo-finetune needs --checkpoint and --manifest");
    Eigen::MatrixXd latents(static_cast<Eigen::Index>(data->size()), table.h.cols());
    for (std::size_t i = 0; i < data->size(); ++i) {
      const auto it = row_of.find(data->images[i].id);
      if (it == row_of.end())
        throw DataError("image " + std::to_string(data->images[i].id) + " has no latent vector");
      latents.row(static_cast<Eigen::Index>(i)) = table.h.row(it->second);
    }
    PseudoLabelConfig pl;
    pl.generator = gen;
    pl.logreg.l2 = a.l2;
    pl.svm.C = a.svm_c;
    pl.svm.jobs = g.jobs;
    pl.finetune.epochs = a.epochs;
    pl.finetune.seed = static_cast<std::uint64_t>(a.seed);
    PseudoLabelResult r = pseudo_label_pipeline(*enc, *data, latents, annotations, C, pl, excluded);
    model.kind = ClassifierModel::Kind::FineTuned;
    model.finetuned = std::move(r.model);
    model.training_ids.clear();
    for (const auto& kv : r.pseudo.labels)
      if (!excluded.count(kv.first)) model.training_ids.push_back(kv.first);
    model.meta["finetune"] = {{"epochs", a.epochs}, {"learning_rate", pl.finetune.learning_rate}};
  }
  ensure_parent(a.out);
  save_classifier(a.out, model);
  write_run_record(a.out, false,
                   {{"command", "classify"},
                    {"latents", a.latents},
                    {"annotations", a.annotations},
                    {"checkpoint", a.checkpoint},
                    {"manifest", a.manifest},
                    {"exclude", a.exclude},
                    {"model", model.meta}});
  out << "trained " << to_string(gen) << (a.pseudo ? " pseudo-label fine-tune" : "") << " on "
      << annotations.size() << " annotations\n";
}

// Predictions for `ids` from latents when given, otherwise from images.
std::map<ImageId, int> predict_ids(const ClassifierModel& model, const std::vector<ImageId>& ids,
                                   const std::string& latents, const Dataset* data) {
  std::vector<int> labels;
  if (!latents.empty() && model.kind != ClassifierModel::Kind::FineTuned) {
    const LatentTable table = read_latents(latents);
    std::map<ImageId, Eigen::Index> row_of;
    for (std::size_t i = 0; i < table.ids.size(); ++i) row_of[table.ids[i]] = static_cast<Eigen::Index>(i);
    Eigen::MatrixXd h(static_cast<Eigen::Index>(ids.size()), table.h.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto it = row_of.find(ids[i]);
      if (it == row_of.end()) throw DataError("id " + std::to_string(ids[i]) + " has no latent vector");
      h.row(static_cast<Eigen::Index>(i)) = table.h.row(it->second);
    }
    labels = predict_latents(model, h).labels;
  } else {
    if (!data) throw UsageError("need --manifest (or --latents for linear/svm models)");
    if (!model.can_embed()) throw UsageError("model has no embedded encoder; pass --latents");
    std::vector<const Tile*> tiles;
    for (ImageId id : ids) tiles.push_back(&data->by_id(id).pixels);
    labels = predict_images(model, tiles).labels;
  }
  std::map<ImageId, int> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out[ids[i]] = labels[i];
  return out;
}

int input_size_of(const ClassifierModel& m) {
  if (m.kind == ClassifierModel::Kind::FineTuned) return m.finetuned.encoder.config.input_size;
  return m.encoder ? m.encoder->config.input_size : 32;
}

// Pixels are decoded only when predictions will come from images.
Dataset dataset_for(const ClassifierModel& model, const std::string& manifest, const std::string& latents, int jobs) {
  if (!latents.empty() && model.kind != ClassifierModel::Kind::FineTuned) return dataset_metadata(manifest);
  return load_dataset(manifest, input_size_of(model), jobs);
}

struct EvaluateArgs {
  std::string model, validation, latents, manifest, out;
};

void cmd_evaluate(const EvaluateArgs& a, const Globals& g, std::ostream& out) {
  const ClassifierModel model = load_classifier(a.model);
  const auto rows = read_annotations(a.validation);
  std::set<ImageId> val_ids;
  for (const auto& r : rows) val_ids.insert(r.first);
  assert_disjoint(model.training_ids, val_ids, "evaluate");
  std::optional<Dataset> data;
  if (!a.manifest.empty()) data = dataset_for(model, a.manifest, a.latents, g.jobs);
  std::vector<ImageId> ids;
  std::vector<int> truth;
  for (const auto& [id, name] : rows) {
    const auto it = std::find(model.class_names.begin(), model.class_names.end(), name);
    if (it == model.class_names.end()) throw DataError("validation label '" + name + "' is not a model class");
    ids.push_back(id);
    truth.push_back(static_cast<int>(it - model.class_names.begin()));
  }
  const auto pred = predict_ids(model, ids, a.latents, data ? &*data : nullptr);
  std::vector<int> predicted;
  for (ImageId id : ids) predicted.push_back(pred.at(id));
  const int C = model.class_count();
  const double f1 = macro_f1(predicted, truth, C);

  std::ostringstream csv;
  csv << "scope,f1,support\n";
  for (int c = 0; c < C; ++c) {
    // Per-class F1 from a one-class restriction of the confusion counts.
    double tp = 0, fp = 0, fn = 0;
    std::size_t support = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      support += truth[i] == c;
      tp += predicted[i] == c && truth[i] == c;
      fp += predicted[i] == c && truth[i] != c;
      fn += predicted[i] != c && truth[i] == c;
    }
    const double denom = 2 * tp + fp + fn;
    csv << model.class_names[static_cast<std::size_t>(c)] << ',' << format_double(denom > 0 ? 2 * tp / denom : 0.0, 6)
        << ',' << support << '\n';
  }
  csv << "macro," << format_double(f1, 6) << ',' << truth.size() << '\n';
  ensure_parent(a.out);
  std::ofstream f(a.out, std::ios::binary);
  if (!f) throw DataError("cannot write " + a.out);
  f << csv.str();
  f.close();
  write_run_record(a.out, false,
                   {{"command", "evaluate"}, {"model", a.model}, {"validation", a.validation}, {"latents", a.latents},
                    {"manifest", a.manifest}});
  out << "macro-F1 " << format_double(f1, 4) << " on " << truth.size() << " validation images\n";
}

struct SweepArgs {
  std::string grid, manifest, out;
  int repeats = 0;
};

void cmd_sweep(const SweepArgs& a, const Globals& g, std::ostream& out) {
  SweepGrid grid = sweep_grid_from(KvConfig::load(a.grid));
  if (a.repeats > 0) grid.repeats = a.repeats;
  grid.protocol.jobs = g.jobs;
  grid.validate();
  const Dataset data = load_dataset(a.manifest, grid.train.encoder.input_size, g.jobs);
  const auto cells = sweep(data, grid);
  ensure_parent(a.out);
  write_sweep_results(a.out, cells);
  const fs::path p(a.out);
  const std::string summary = (p.parent_path() / (p.stem().string() + "_summary" + p.extension().string())).string();
  write_sweep_summary(summary, cells);
  nlohmann::json rec = {{"command", "sweep"},
                        {"grid_file", a.grid},
                        {"manifest", a.manifest},
                        {"repeats", grid.repeats},
                        {"seed", grid.base_seed},
                        {"train", grid.train.to_json()},
                        {"protocol",
                         {{"validation_per_class", grid.protocol.validation_per_class},
                          {"validation_seed", grid.protocol.validation_seed},
                          {"finetune_epochs", grid.protocol.finetune.epochs},
                          {"svm_C", grid.protocol.svm.C},
                          {"svm_gamma", "1/(d*var)"},
                          {"logreg_l2", grid.protocol.logreg.l2}}}};
  write_run_record(a.out, false, rec);
  std::size_t failed = 0;
  for (const auto& c : cells) failed += !c.error.empty();
  out << "evaluated " << cells.size() << " cells (" << failed << " failed); summary in " << summary << "\n";
}

struct MapArgs {
  std::string model, manifest, latents, out;
  double bin_width = 1.0;
};

void cmd_map(const MapArgs& a, const Globals& g, std::ostream& out) {
  const ClassifierModel model = load_classifier(a.model);
  Dataset data = dataset_for(model, a.manifest, a.latents, g.jobs);
  // Map predictions onto the model's class order so colours stay consistent.
  std::vector<int> remap(data.class_names.size(), -1);
  for (std::size_t c = 0; c < data.class_names.size(); ++c) {
    const auto it = std::find(model.class_names.begin(), model.class_names.end(), data.class_names[c]);
    if (it != model.class_names.end()) remap[c] = static_cast<int>(it - model.class_names.begin());
  }
  for (auto& img : data.images)
    if (img.label) {
      if (remap[static_cast<std::size_t>(*img.label)] < 0) img.label.reset();
      else img.label = remap[static_cast<std::size_t>(*img.label)];
    }
  data.class_names = model.class_names;
  const auto pred = predict_ids(model, data.ids(), a.latents, &data);
  habitat_map(pred, data, a.out);
  const fs::path dir(a.out);
  write_proportions((dir / "proportions.csv").string(), class_proportions(pred, data, model.class_count()),
                    model.class_names);
  write_depth_histogram((dir / "depth_histogram.csv").string(),
                        class_depth_histogram(pred, data, model.class_count(), a.bin_width), model.class_names);
  write_run_record(a.out, true,
                   {{"command", "map"}, {"model", a.model}, {"manifest", a.manifest}, {"latents", a.latents},
                    {"bin_width", a.bin_width}});
  out << "wrote maps for " << pred.size() << " images to " << a.out << "\n";
}

}  // namespace

// ---------------------------------------------------------------- file formats

void write_latents(const std::string& path, const LatentTable& table) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write latents: " + path);
  f << "id";
  for (Eigen::Index k = 0; k < table.h.cols(); ++k) f << ",h" << k;
  f << '\n';
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    f << table.ids[i];
    for (Eigen::Index k = 0; k < table.h.cols(); ++k) f << ',' << exact(table.h(static_cast<Eigen::Index>(i), k));
    f << '\n';
  }
  if (!f) throw DataError("write failed: " + path);
}

LatentTable read_latents(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open latents: " + path);
  std::string line;
  std::getline(f, line);
  const auto header = split_csv(line);
  if (header.size() < 2 || header[0] != "id") throw DataError(path + ":1: expected header 'id,h0,...'");
  const std::size_t d = header.size() - 1;
  std::vector<ImageId> ids;
  std::vector<double> values;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != d + 1)
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(d + 1) + " fields");
    ImageId id = 0;
    auto r = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), id);
    if (r.ec != std::errc() || r.ptr != cells[0].data() + cells[0].size())
      throw DataError(path + ":" + std::to_string(lineno) + ": bad id '" + cells[0] + "'");
    ids.push_back(id);
    for (std::size_t k = 1; k <= d; ++k) {
      double v = 0.0;
      r = std::from_chars(cells[k].data(), cells[k].data() + cells[k].size(), v);
      if (r.ec != std::errc() || r.ptr != cells[k].data() + cells[k].size() || !std::isfinite(v))
        throw DataError(path + ":" + std::to_string(lineno) + ": bad value '" + cells[k] + "'");
      values.push_back(v);
    }
  }
  LatentTable t;
  t.ids = std::move(ids);
  t.h = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), static_cast<Eigen::Index>(t.ids.size()), static_cast<Eigen::Index>(d));
  std::set<ImageId> seen(t.ids.begin(), t.ids.end());
  if (seen.size() != t.ids.size()) throw DataError(path + ": duplicate ids");
  return t;
}

void write_annotations(const std::string& path, const std::vector<std::pair<ImageId, std::string>>& rows) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write annotations: " + path);
  f << "id,label\n";
  for (const auto& [id, label] : rows) f << id << ',' << label << '\n';
  if (!f) throw DataError("write failed: " + path);
}

std::vector<std::pair<ImageId, std::string>> read_annotations(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open annotations: " + path);
  std::string line;
  std::getline(f, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,label") throw DataError(path + ":1: expected header 'id,label'");
  std::vector<std::pair<ImageId, std::string>> rows;
  std::set<ImageId> seen;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    ImageId id = 0;
    const auto r = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), id);
    if (cells.size() != 2 || cells[1].empty() || r.ec != std::errc() || r.ptr != cells[0].data() + cells[0].size())
      throw DataError(path + ":" + std::to_string(lineno) + ": malformed row '" + line + "'");
    if (!seen.insert(id).second) throw DataError(path + ":" + std::to_string(lineno) + ": duplicate id " + cells[0]);
    rows.emplace_back(id, cells[1]);
  }
  return rows;
}

// ---------------------------------------------------------------- dispatch

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"GeoCLR: georeference contrastive learning for seafloor image classification", "geoclr"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--jobs", g.jobs, "worker threads (0 = hardware concurrency)")->check(CLI::NonNegativeNumber);
  app.add_flag("--record-timing", g.timing, "write wall-clock seconds into the loss log (breaks byte-identical reruns)");

  SimulateArgs sim;
  auto* s_sim = app.add_subcommand("simulate", "generate a synthetic survey");
  s_sim->add_option("--config", sim.config, "world/trajectory config file")->check(CLI::ExistingFile);
  s_sim->add_option("--out", sim.out, "output directory")->required();
  s_sim->add_option("--seed", sim.seed, "override world and survey seeds");

  TrainArgs tr;
  auto* s_train = app.add_subcommand("train", "contrastive training of the encoder");
  s_train->add_option("--manifest", tr.manifest)->required()->check(CLI::ExistingFile);
  s_train->add_option("--mode", tr.mode, "geoclr or simclr");
  s_train->add_option("--r", tr.r, "closeness threshold in metres");
  s_train->add_option("--lambda", tr.lambda, "depth weight");
  s_train->add_option("--tau", tr.tau, "temperature");
  s_train->add_option("--batch", tr.batch, "original images per batch (N)");
  s_train->add_option("--epochs", tr.epochs);
  s_train->add_option("--seed", tr.seed);
  s_train->add_option("--lr", tr.lr);
  s_train->add_option("--weight-decay", tr.weight_decay);
  s_train->add_option("--optimizer", tr.optimizer, "adam or sgd");
  s_train->add_option("--tile", tr.tile, "tile size in pixels");
  s_train->add_option("--loss-log", tr.loss_log, "default: <out>.loss.csv");
  s_train->add_option("--out", tr.out, "checkpoint path")->required();

  EmbedArgs em;
  auto* s_embed = app.add_subcommand("embed", "write latent representations h");
  s_embed->add_option("--checkpoint", em.checkpoint)->required()->check(CLI::ExistingFile);
  s_embed->add_option("--manifest", em.manifest)->required()->check(CLI::ExistingFile);
  s_embed->add_option("--out", em.out)->required();

  SelectArgs se;
  auto* s_select = app.add_subcommand("select", "choose images for annotation");
  s_select->add_option("--latents", se.latents)->required()->check(CLI::ExistingFile);
  s_select->add_option("--strategy", se.strategy, "hkmeans, random or balanced");
  s_select->add_option("--M", se.M, "number of annotations");
  s_select->add_option("--m", se.m, "top-level clusters or 'auto'");
  s_select->add_option("--seed", se.seed);
  s_select->add_option("--exclude", se.exclude, "ids to hold out (annotation or selection CSV)")
      ->check(CLI::ExistingFile);
  s_select->add_option("--manifest", se.manifest, "ground truth for balanced selection")->check(CLI::ExistingFile);
  s_select->add_option("--out", se.out)->required();

  AnnotateArgs an;
  auto* s_annot = app.add_subcommand("annotate", "simulated annotator: label ids from manifest ground truth");
  s_annot->add_option("--manifest", an.manifest)->required()->check(CLI::ExistingFile);
  s_annot->add_option("--selection", an.selection, "rank,id CSV to label")->check(CLI::ExistingFile);
  s_annot->add_option("--validation-per-class", an.validation_per_class, "draw a balanced validation set instead");
  s_annot->add_option("--seed", an.seed);
  s_annot->add_option("--out", an.out)->required();

  ClassifyArgs cl;
  auto* s_class = app.add_subcommand("classify", "fit a classifier on annotated latents");
  s_class->add_option("--latents", cl.latents)->required()->check(CLI::ExistingFile);
  s_class->add_option("--annotations", cl.annotations)->required()->check(CLI::ExistingFile);
  s_class->add_option("--classifier", cl.classifier, "linear or svm");
  s_class->add_flag("--pseudo-finetune", cl.pseudo, "fine-tune the encoder on pseudo-labels");
  s_class->add_option("--checkpoint", cl.checkpoint, "encoder to embed in the model")->check(CLI::ExistingFile);
  s_class->add_option("--manifest", cl.manifest, "dataset for pseudo-labelling and class order")
      ->check(CLI::ExistingFile);
  s_class->add_option("--exclude", cl.exclude, "validation ids never used for training")->check(CLI::ExistingFile);
  s_class->add_option("--epochs", cl.epochs, "fine-tuning epochs");
  s_class->add_option("--svm-C", cl.svm_c);
  s_class->add_option("--l2", cl.l2, "logistic regression L2 strength");
  s_class->add_option("--seed", cl.seed);
  s_class->add_option("--out", cl.out)->required();

  EvaluateArgs ev;
  auto* s_eval = app.add_subcommand("evaluate", "macro-F1 on a labelled validation set");
  s_eval->add_option("--model", ev.model)->required()->check(CLI::ExistingFile);
  s_eval->add_option("--validation", ev.validation, "id,label CSV")->required()->check(CLI::ExistingFile);
  s_eval->add_option("--latents", ev.latents)->check(CLI::ExistingFile);
  s_eval->add_option("--manifest", ev.manifest)->check(CLI::ExistingFile);
  s_eval->add_option("--out", ev.out)->required();

  SweepArgs sw;
  auto* s_sweep = app.add_subcommand("sweep", "grid of training and classification experiments");
  s_sweep->add_option("--grid", sw.grid)->required()->check(CLI::ExistingFile);
  s_sweep->add_option("--manifest", sw.manifest)->required()->check(CLI::ExistingFile);
  s_sweep->add_option("--repeats", sw.repeats, "overrides the grid file");
  s_sweep->add_option("--out", sw.out)->required();

  MapArgs mp;
  auto* s_map = app.add_subcommand("map", "habitat maps and per-dive class proportions");
  s_map->add_option("--model", mp.model)->required()->check(CLI::ExistingFile);
  s_map->add_option("--manifest", mp.manifest)->required()->check(CLI::ExistingFile);
  s_map->add_option("--latents", mp.latents)->check(CLI::ExistingFile);
  s_map->add_option("--bin-width", mp.bin_width, "depth histogram bin width (m)");
  s_map->add_option("--out", mp.out)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (g.jobs > 0) set_default_jobs(g.jobs);
    if (*s_sim) cmd_simulate(sim, g, out);
    else if (*s_train) cmd_train(tr, g, out);
    else if (*s_embed) cmd_embed(em, g, out);
    else if (*s_select) cmd_select(se, g, out);
    else if (*s_annot) cmd_annotate(an, g, out);
    else if (*s_class) cmd_classify(cl, g, out);
    else if (*s_eval) cmd_evaluate(ev, g, out);
    else if (*s_sweep) cmd_sweep(sw, g, out);
    else if (*s_map) cmd_map(mp, g, out);
    return 0;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace geoclr
