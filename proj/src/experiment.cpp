// SPDX-License-Identifier: Apache-2.0

#include "pcseg/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "pcseg/checkpoint.hpp"
#include "pcseg/imbalance.hpp"
#include "pcseg/loss.hpp"

namespace pcseg {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Modes.

namespace {
constexpr std::string_view kModeNames[] = {"baseline", "weighted", "incremental",
                                           "weighted-incremental"};
}

std::string_view mode_name(Mode mode) { return kModeNames[static_cast<int>(mode)]; }

Mode parse_mode(std::string_view name) {
  for (int i = 0; i < 4; ++i) {
    if (kModeNames[i] == name) return static_cast<Mode>(i);
  }
  throw ConfigError("unknown mode \"" + std::string(name) +
                    "\" (baseline, weighted, incremental, weighted-incremental)");
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return kExitConfig;
    case ErrorKind::kData:
      return kExitData;
    case ErrorKind::kTraining:
      return kExitTraining;
  }
  return kExitUnexpected;
}

// ---------------------------------------------------------------------------
// Defaults.

SyntheticSceneSpec benchmark_scene_spec(const ClassCatalog& catalog) {
  SyntheticSceneSpec spec;
  spec.classes.resize(catalog.size());
  spec.background_points = 4000;
  spec.extent = 25.0;
  spec.noise_sigma = 0.05;
  spec.ground_z = -1.73;
  spec.background_height = 2.5;
  spec.background_intensity = {0.0, 0.6};
  auto set = [&](std::string_view name, SyntheticClassSpec k) {
    if (auto id = catalog.find(name)) spec.classes[index_of(*id)] = k;
  };
  set("Car", {{2, 4}, {30, 60}, {3.5, 4.5}, {1.6, 1.9}, {1.4, 1.6}, {0.3, 0.7}});
  set("Truck", {{0, 1}, {40, 80}, {6.0, 9.0}, {2.2, 2.6}, {2.8, 3.5}, {0.45, 0.8}});
  set("Van", {{0, 1}, {30, 60}, {4.5, 5.5}, {1.8, 2.1}, {1.9, 2.3}, {0.35, 0.75}});
  set("Pedestrian", {{0, 2}, {5, 12}, {0.5, 0.9}, {0.5, 0.8}, {1.6, 1.9}, {0.65, 0.9}});
  set("Cyclist", {{0, 2}, {5, 12}, {1.5, 1.9}, {0.5, 0.8}, {1.5, 1.8}, {0.8, 1.0}});
  return spec;
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.dataset.kind = DatasetSource::Kind::kSynthetic;
  c.dataset.spec = benchmark_scene_spec(c.catalog);
  c.dataset.seed = 1;
  c.dataset.scenes = 40;
  DatasetSource eval = c.dataset;
  eval.seed = 1001;
  eval.scenes = 20;
  c.eval_dataset = eval;
  c.plan = PhasePlan::kitti_default(c.catalog);
  c.arch.output_dim = static_cast<std::uint32_t>(c.catalog.size());
  return c;
}

PhasePlan ExperimentConfig::effective_plan() const {
  return is_incremental(mode) ? plan : PhasePlan::single_phase(catalog);
}

// ---------------------------------------------------------------------------
// JSON.

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw ConfigError("config key \"" + key + "\": " + why);
}

template <typename T>
T get(const Json& j, const std::string& key, const T& fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    bad(key, e.what());
  }
}

Range get_range(const Json& j, const std::string& key, Range fallback) {
  if (!j.contains(key)) return fallback;
  const Json& v = j.at(key);
  if (v.is_number()) return {v.get<double>(), v.get<double>()};
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    bad(key, "expected [min, max]");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

Json range_json(const Range& r) { return Json::array({r.min, r.max}); }

void check_keys(const Json& j, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key \"" + key + "\" in " + where);
  }
}

ClassSet parse_class_list(const Json& j, const ClassCatalog& catalog) {
  if (!j.is_array()) throw ConfigError("plan phases must be arrays of class names");
  ClassSet s;
  for (const auto& name : j) {
    if (!name.is_string()) throw ConfigError("plan phases must list class names");
    s.insert(catalog.at(name.get<std::string>()));
  }
  return s;
}

Json dataset_json(const DatasetSource& d, const ClassCatalog& catalog) {
  Json j;
  if (d.kind == DatasetSource::Kind::kKitti) {
    j["source"] = "kitti";
    j["dir"] = d.dir.string();
  } else {
    j["source"] = "synthetic";
    j["seed"] = d.seed;
    j["scenes"] = d.scenes;
    j["spec"] = scene_spec_to_json(d.spec, catalog);
  }
  return j;
}

}  // namespace

SyntheticSceneSpec parse_scene_spec(const Json& j, const ClassCatalog& catalog) {
  check_keys(j,
             {"background_points", "extent", "noise_sigma", "ground_z", "background_height",
              "background_intensity", "classes"},
             "scene spec");
  SyntheticSceneSpec spec;
  spec.classes.resize(catalog.size());
  const auto bg = get<std::int64_t>(j, "background_points", 0);
  if (bg < 0) bad("background_points", "must be non-negative");
  spec.background_points = static_cast<std::size_t>(bg);
  spec.extent = get<double>(j, "extent", spec.extent);
  spec.noise_sigma = get<double>(j, "noise_sigma", spec.noise_sigma);
  spec.ground_z = get<double>(j, "ground_z", spec.ground_z);
  spec.background_height = get<double>(j, "background_height", spec.background_height);
  spec.background_intensity =
      get_range(j, "background_intensity", spec.background_intensity);
  if (j.contains("classes")) {
    const Json& classes = j.at("classes");
    if (!classes.is_object()) bad("classes", "expected an object keyed by class name");
    for (const auto& [name, k] : classes.items()) {
      const ClassId id = catalog.at(name);
      if (id == ClassId::kNoObject) bad("classes", "NoObject is generated as background");
      check_keys(k,
                 {"instances", "points_per_instance", "length", "width", "height",
                  "intensity"},
                 "class \"" + name + "\"");
      SyntheticClassSpec c;
      c.instances = get_range(k, "instances", {});
      c.points_per_instance = get_range(k, "points_per_instance", {});
      c.length = get_range(k, "length", {});
      c.width = get_range(k, "width", {});
      c.height = get_range(k, "height", {});
      c.intensity = get_range(k, "intensity", {0.0, 1.0});
      spec.classes[index_of(id)] = c;
    }
  }
  spec.validate();
  return spec;
}

Json scene_spec_to_json(const SyntheticSceneSpec& spec, const ClassCatalog& catalog) {
  Json j;
  j["background_points"] = spec.background_points;
  j["extent"] = spec.extent;
  j["noise_sigma"] = spec.noise_sigma;
  j["ground_z"] = spec.ground_z;
  j["background_height"] = spec.background_height;
  j["background_intensity"] = range_json(spec.background_intensity);
  Json classes = Json::object();
  for (std::size_t i = 1; i < spec.classes.size() && i < catalog.size(); ++i) {
    const auto& c = spec.classes[i];
    if (c.instances.max <= 0.0) continue;
    classes[catalog.names()[i]] = {{"instances", range_json(c.instances)},
                                   {"points_per_instance", range_json(c.points_per_instance)},
                                   {"length", range_json(c.length)},
                                   {"width", range_json(c.width)},
                                   {"height", range_json(c.height)},
                                   {"intensity", range_json(c.intensity)}};
  }
  j["classes"] = classes;
  return j;
}

DatasetSource parse_dataset_source(const Json& j, const ClassCatalog& catalog,
                                   const fs::path& base_dir) {
  check_keys(j, {"source", "dir", "seed", "scenes", "spec", "spec_file", "catalog"},
             "dataset");
  DatasetSource d;
  const auto source = get<std::string>(j, "source", "synthetic");
  if (source == "kitti") {
    d.kind = DatasetSource::Kind::kKitti;
    if (!j.contains("dir")) bad("dir", "required for kitti datasets");
    d.dir = get<std::string>(j, "dir", "");
    if (d.dir.is_relative()) d.dir = base_dir / d.dir;
    return d;
  }
  if (source != "synthetic") bad("source", "expected \"synthetic\" or \"kitti\"");
  d.kind = DatasetSource::Kind::kSynthetic;
  d.seed = get<std::uint64_t>(j, "seed", 1);
  const auto scenes = get<std::int64_t>(j, "scenes", 1);
  if (scenes < 1) bad("scenes", "must be >= 1");
  d.scenes = static_cast<std::size_t>(scenes);
  if (j.contains("spec_file")) {
    fs::path p = get<std::string>(j, "spec_file", "");
    if (p.is_relative()) p = base_dir / p;
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    Json spec;
    try {
      spec = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(p.string() + ": " + e.what());
    }
    d.spec = parse_scene_spec(spec, catalog);
  } else if (j.contains("spec")) {
    d.spec = parse_scene_spec(j.at("spec"), catalog);
  } else {
    d.spec = benchmark_scene_spec(catalog);
  }
  return d;
}

ExperimentConfig parse_config(const Json& j, const fs::path& base) {
  check_keys(j,
             {"catalog", "dataset", "eval_dataset", "preprocess", "architecture", "train",
              "plan", "weights", "mode", "out"},
             "config");
  ExperimentConfig c = default_config();
  if (j.contains("catalog")) {
    c.catalog = ClassCatalog(get<std::vector<std::string>>(j, "catalog", {}));
    c.dataset.spec = benchmark_scene_spec(c.catalog);
    c.eval_dataset->spec = c.dataset.spec;
    c.plan = PhasePlan::single_phase(c.catalog);
  }
  if (j.contains("dataset")) c.dataset = parse_dataset_source(j.at("dataset"), c.catalog, base);
  if (j.contains("eval_dataset")) {
    c.eval_dataset = j.at("eval_dataset").is_null()
                         ? std::nullopt
                         : std::optional(parse_dataset_source(j.at("eval_dataset"),
                                                              c.catalog, base));
  }
  if (j.contains("preprocess")) {
    const Json& p = j.at("preprocess");
    check_keys(p, {"frontal", "z_min", "filter_before_label"}, "preprocess");
    c.preprocess.frontal = get<bool>(p, "frontal", c.preprocess.frontal);
    if (p.contains("z_min")) {
      const Json& z = p.at("z_min");
      if (z.is_null() || (z.is_string() && z.get<std::string>() == "off")) {
        c.preprocess.z_min = -std::numeric_limits<double>::infinity();
      } else {
        c.preprocess.z_min = get<double>(p, "z_min", c.preprocess.z_min);
      }
    }
    c.preprocess.filter_before_label =
        get<bool>(p, "filter_before_label", c.preprocess.filter_before_label);
  }
  c.arch.output_dim = static_cast<std::uint32_t>(c.catalog.size());
  if (j.contains("architecture")) {
    const Json& a = j.at("architecture");
    check_keys(a, {"input_dim", "encoder", "decoder", "feature_scale"}, "architecture");
    c.arch.input_dim = get<std::uint32_t>(a, "input_dim", c.arch.input_dim);
    c.arch.encoder = get<std::vector<std::uint32_t>>(a, "encoder", c.arch.encoder);
    c.arch.decoder = get<std::vector<std::uint32_t>>(a, "decoder", c.arch.decoder);
    c.arch.feature_scale = get<std::vector<float>>(a, "feature_scale", c.arch.feature_scale);
    if (!a.contains("feature_scale")) c.arch.feature_scale.resize(c.arch.input_dim, 1.0f);
  }
  c.arch.validate();
  if (j.contains("train")) {
    const Json& t = j.at("train");
    check_keys(t,
               {"optimizer", "learning_rate", "beta1", "beta2", "adam_epsilon", "epochs",
                "batch_size", "seed", "weight_epsilon", "patience", "validation_fraction",
                "threads"},
               "train");
    const auto opt = get<std::string>(t, "optimizer", "adam");
    if (opt == "adam") {
      c.train.optimizer = OptimizerKind::kAdam;
    } else if (opt == "sgd") {
      c.train.optimizer = OptimizerKind::kSgd;
    } else {
      bad("optimizer", "expected \"sgd\" or \"adam\"");
    }
    c.train.learning_rate = get<double>(t, "learning_rate", c.train.learning_rate);
    c.train.beta1 = get<double>(t, "beta1", c.train.beta1);
    c.train.beta2 = get<double>(t, "beta2", c.train.beta2);
    c.train.adam_epsilon = get<double>(t, "adam_epsilon", c.train.adam_epsilon);
    c.train.epochs = get<std::uint32_t>(t, "epochs", c.train.epochs);
    c.train.batch_size = get<std::uint32_t>(t, "batch_size", c.train.batch_size);
    c.train.seed = get<std::uint64_t>(t, "seed", c.train.seed);
    c.train.weight_epsilon = get<double>(t, "weight_epsilon", c.train.weight_epsilon);
    c.train.patience = get<std::uint32_t>(t, "patience", c.train.patience);
    c.train.validation_fraction =
        get<double>(t, "validation_fraction", c.train.validation_fraction);
    c.train.threads = get<unsigned>(t, "threads", c.train.threads);
  }
  c.train.validate();
  if (j.contains("plan")) {
    const Json& p = j.at("plan");
    if (!p.is_array()) bad("plan", "expected an array of phases");
    c.plan.phases.clear();
    for (const auto& phase : p) c.plan.phases.push_back(parse_class_list(phase, c.catalog));
  }
  c.plan.validate(c.catalog);
  if (j.contains("weights") && !j.at("weights").is_null()) {
    c.weight_table = get<std::map<std::string, double>>(j, "weights", {});
    weights_from_table(*c.weight_table, c.catalog);
  }
  c.mode = parse_mode(get<std::string>(j, "mode", std::string(mode_name(c.mode))));
  c.out = get<std::string>(j, "out", c.out.string());
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

Json ExperimentConfig::to_json() const {
  Json j;
  j["catalog"] = catalog.names();
  j["dataset"] = dataset_json(dataset, catalog);
  j["eval_dataset"] = eval_dataset ? dataset_json(*eval_dataset, catalog) : Json();
  Json pre;
  pre["frontal"] = preprocess.frontal;
  if (std::isfinite(preprocess.z_min)) {
    pre["z_min"] = preprocess.z_min;
  } else {
    pre["z_min"] = "off";
  }
  pre["filter_before_label"] = preprocess.filter_before_label;
  j["preprocess"] = pre;
  j["architecture"] = {{"input_dim", arch.input_dim},
                       {"encoder", arch.encoder},
                       {"decoder", arch.decoder},
                       {"feature_scale", arch.feature_scale}};
  j["train"] = {{"optimizer", train.optimizer == OptimizerKind::kAdam ? "adam" : "sgd"},
                {"learning_rate", train.learning_rate},
                {"beta1", train.beta1},
                {"beta2", train.beta2},
                {"adam_epsilon", train.adam_epsilon},
                {"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"seed", train.seed},
                {"weight_epsilon", train.weight_epsilon},
                {"patience", train.patience},
                {"validation_fraction", train.validation_fraction}};
  Json phases = Json::array();
  for (const auto& phase : plan.phases) {
    Json names = Json::array();
    for (ClassId id : phase) names.push_back(catalog.name(id));
    phases.push_back(names);
  }
  j["plan"] = phases;
  j["weights"] = weight_table ? Json(*weight_table) : Json();
  j["mode"] = mode_name(mode);
  return j;
}

std::uint64_t ExperimentConfig::hash() const {
  const std::string text = to_json().dump();
  return fnv1a64(std::as_bytes(std::span(text.data(), text.size())));
}

void apply_overrides(ExperimentConfig& c, const CliOverrides& o) {
  if (o.mode) c.mode = *o.mode;
  if (o.seed) c.train.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.threads) {
    if (*o.threads < 1) throw ConfigError("--threads must be >= 1");
    c.train.threads = *o.threads;
  }
  if (o.z_min) c.preprocess.z_min = *o.z_min;
  if (o.no_frontal_filter) c.preprocess.frontal = false;
}

std::vector<Scene> load_dataset(const DatasetSource& source, const ClassCatalog& catalog,
                                const PreprocessConfig& preprocess, LoadReport* report) {
  if (source.kind == DatasetSource::Kind::kKitti) {
    return load_kitti_dataset(source.dir, catalog, preprocess, report);
  }
  const auto raw = generate_synthetic_dataset(source.spec, source.seed, source.scenes);
  auto scenes = prepare_synthetic_dataset(raw, preprocess);
  if (report) *report = LoadReport{scenes.size(), 0};
  return scenes;
}

std::uint64_t dataset_hash(std::span<const LabeledCloud> clouds) {
  std::vector<std::byte> bytes;
  for (const LabeledCloud& c : clouds) {
    const auto scan = write_point_scan(c.points);
    bytes.insert(bytes.end(), scan.begin(), scan.end());
    for (ClassId id : c.labels) {
      const auto v = static_cast<std::uint16_t>(id);
      bytes.push_back(static_cast<std::byte>(v & 0xff));
      bytes.push_back(static_cast<std::byte>(v >> 8));
    }
    bytes.push_back(std::byte{0xff});
  }
  return fnv1a64(bytes);
}

std::vector<ClassIou> evaluate_active(const ModelParams& params,
                                      std::span<const LabeledCloud> clouds,
                                      const ClassSet& active, unsigned threads,
                                      ConfusionMatrix* confusion) {
  std::vector<LabeledCloud> remapped;
  remapped.reserve(clouds.size());
  for (const auto& c : clouds) remapped.push_back(remap_labels(c, active));
  const ConfusionMatrix cm = evaluate(params, remapped, threads);
  auto ious = iou_per_class(cm);
  for (std::size_t i = 1; i < ious.size(); ++i) {
    if (!active.contains(class_id(i))) ious[i].reset();
  }
  if (confusion) *confusion = cm;
  return ious;
}

// ---------------------------------------------------------------------------
// Commands.

namespace {

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string class_list(const ClassSet& s, const ClassCatalog& catalog) {
  std::string out;
  for (ClassId id : s) out += (out.empty() ? "" : ",") + catalog.name(id);
  return out;
}

}  // namespace

void cmd_stats(const ExperimentConfig& config, std::ostream& out) {
  LoadReport report;
  const auto scenes = load_dataset(config.dataset, config.catalog, config.preprocess, &report);
  const DatasetStats stats = compute_stats(scenes, config.catalog);
  const auto freq = class_frequencies(stats);  // throws on an empty dataset
  const ClassWeights weights = class_weights(freq, config.train.weight_epsilon);

  out << "scenes: " << scenes.size() << "\n";
  if (report.skipped_labels > 0) {
    out << "warning: skipped " << report.skipped_labels
        << " label lines with types outside the catalog\n";
  }
  char line[160];
  std::snprintf(line, sizeof(line), "%-12s %10s %10s %12s %12s\n", "class", "points",
                "instances", "frequency", "weight");
  out << line;
  for (std::size_t i = 0; i < config.catalog.size(); ++i) {
    std::snprintf(line, sizeof(line), "%-12s %10llu %10llu %12.6g %12.6g\n",
                  config.catalog.names()[i].c_str(),
                  static_cast<unsigned long long>(stats.point_counts[i]),
                  static_cast<unsigned long long>(stats.instance_counts[i]), freq[i],
                  weights.values[i]);
    out << line;
  }
  out << "total points: " << stats.total_points << "\n";
}

void cmd_synth(const fs::path& spec_file, std::optional<std::uint64_t> seed,
               const fs::path& out_dir, std::ostream& out) {
  std::ifstream in(spec_file);
  if (!in) throw ConfigError("cannot open spec file " + spec_file.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(spec_file.string() + ": " + e.what());
  }
  const ClassCatalog catalog =
      j.contains("catalog") ? ClassCatalog(j.at("catalog").get<std::vector<std::string>>())
                            : ClassCatalog::kitti_default();
  DatasetSource source = parse_dataset_source(j, catalog, spec_file.parent_path());
  if (source.kind != DatasetSource::Kind::kSynthetic) {
    throw ConfigError("synth needs a synthetic dataset block");
  }
  if (seed) source.seed = *seed;
  const auto scenes = generate_synthetic_dataset(source.spec, source.seed, source.scenes);
  write_synthetic_dataset(out_dir, scenes, catalog, source.seed);
  std::size_t points = 0;
  for (const auto& s : scenes) points += s.points.size();
  out << "wrote " << scenes.size() << " scenes (" << points << " points) to "
      << out_dir.string() << "\n";
}

TrainSummary cmd_train(const ExperimentConfig& config, std::ostream& out) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  const fs::path dir = config.out;
  fs::create_directories(dir);

  const auto scenes = load_dataset(config.dataset, config.catalog, config.preprocess);
  const auto clouds = clouds_of(scenes);
  const auto eval_clouds =
      config.eval_dataset
          ? clouds_of(load_dataset(*config.eval_dataset, config.catalog, config.preprocess))
          : clouds;

  ExperimentConfig resolved = config;
  resolved.train.weighted = is_weighted(config.mode);
  const PhasePlan plan = config.effective_plan();
  std::optional<ClassWeights> table;
  if (config.weight_table) table = weights_from_table(*config.weight_table, config.catalog);

  const Json config_json = resolved.to_json();
  write_file_atomic(dir / "config.json", config_json.dump(2) + "\n");

  TrainSummary summary;
  std::ostringstream manifest;
  manifest << "phase\tactive\tepochs_run\tbest_epoch\tcheckpoint\tchecksum\tparent\n";
  auto on_phase = [&](const PhaseResult& r) {
    const std::string name = "phase_" + std::to_string(r.phase) + ".ckpt";
    save_checkpoint(r.checkpoint, dir / name);
    std::ostringstream curve;
    curve << "epoch,train_loss,validation_miou\n";
    for (std::size_t e = 0; e < r.train_loss.size(); ++e) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.17g", r.train_loss[e]);
      curve << (e + 1) << ',' << buf << ',' << format_iou(r.validation_miou[e]) << '\n';
    }
    write_file_atomic(dir / ("phase_" + std::to_string(r.phase) + "_loss.csv"), curve.str());
    const auto ious = evaluate_active(r.checkpoint.params, eval_clouds, r.active,
                                      config.train.threads);
    write_file_atomic(dir / ("phase_" + std::to_string(r.phase) + "_eval_iou.csv"),
                      iou_to_csv(ious, config.catalog));
    summary.phase_eval_iou.push_back(ious);
    manifest << r.phase << '\t' << class_list(r.active, config.catalog) << '\t'
             << r.epochs_run << '\t' << r.best_epoch << '\t' << name << '\t'
             << hex64(checkpoint_checksum(r.checkpoint)) << '\t'
             << hex64(r.checkpoint.provenance.parent_checksum) << '\n';
    write_file_atomic(dir / "phases.tsv", manifest.str());
    out << "phase " << r.phase << " [" << class_list(r.active, config.catalog) << "]: "
        << r.epochs_run << " epochs, best epoch " << r.best_epoch << ", final loss "
        << r.train_loss.back() << "\n";
  };

  CurriculumResult result = run_curriculum(plan, clouds, FreshStart{config.arch, config.catalog},
                                           resolved.train, table, on_phase);
  write_file_atomic(dir / "weights.txt", format_weights_table(result.weights, config.catalog));
  summary.phases = std::move(result.phases);
  summary.error = result.error;
  summary.error_kind = result.error_kind;

  Json run;
  run["mode"] = mode_name(config.mode);
  run["seed"] = config.train.seed;
  run["config_hash"] = hex64(config.hash());
  run["catalog"] = config.catalog.names();
  run["eval_set_hash"] = hex64(dataset_hash(eval_clouds));
  run["phases"] = summary.phases.size();
  run["planned_phases"] = plan.phases.size();
  run["completed"] = !summary.error.has_value();
  if (summary.error) run["error"] = *summary.error;

  if (!summary.phases.empty()) {
    const PhaseResult& last = summary.phases.back();
    ConfusionMatrix cm(config.catalog.size());
    summary.eval_iou = evaluate_active(last.checkpoint.params, eval_clouds, last.active,
                                       config.train.threads, &cm);
    run["final_checkpoint"] = "phase_" + std::to_string(last.phase) + ".ckpt";
    run["final_checksum"] = hex64(checkpoint_checksum(last.checkpoint));
    write_file_atomic(dir / "eval_confusion.csv", confusion_to_csv(cm, config.catalog));
    write_file_atomic(dir / "eval_iou.csv", iou_to_csv(summary.eval_iou, config.catalog));
    write_file_atomic(dir / "eval_iou.txt", iou_to_text(summary.eval_iou, config.catalog));
    out << iou_to_text(summary.eval_iou, config.catalog);
  }
  write_file_atomic(dir / "run.json", run.dump(2) + "\n");
  write_file_atomic(dir / "provenance.txt", "config_hash " + hex64(config.hash()) + "\nseed " +
                                                std::to_string(config.train.seed) + "\n");
  const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  out << "mode " << mode_name(config.mode) << ", seed " << config.train.seed << ", "
      << std::fixed << std::setprecision(1) << seconds << " s\n"
      << std::defaultfloat;
  if (summary.error) out << "training failed: " << *summary.error << "\n";
  return summary;
}

std::vector<ClassIou> cmd_eval(const fs::path& checkpoint, const ExperimentConfig& config,
                               const std::optional<fs::path>& out_dir, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  if (!(ckpt.catalog == config.catalog)) {
    throw CatalogMismatchError("checkpoint catalog does not match the configured catalog");
  }
  const DatasetSource& source = config.eval_dataset ? *config.eval_dataset : config.dataset;
  const auto clouds = clouds_of(load_dataset(source, config.catalog, config.preprocess));
  const ConfusionMatrix cm = evaluate(ckpt.params, clouds, config.train.threads);
  const auto ious = iou_per_class(cm);
  if (out_dir) {
    write_file_atomic(*out_dir / "eval_confusion.csv", confusion_to_csv(cm, config.catalog));
    write_file_atomic(*out_dir / "eval_iou.csv", iou_to_csv(ious, config.catalog));
    write_file_atomic(*out_dir / "eval_iou.txt", iou_to_text(ious, config.catalog));
  }
  out << iou_to_text(ious, config.catalog);
  return ious;
}

// ---------------------------------------------------------------------------
// Comparison report.

namespace {

std::string format_delta(const ClassIou& a, const ClassIou& base) {
  if (!a || !base) return "N/A";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.4f", *a - *base);
  return buf;
}

ClassIou parse_iou_cell(const std::string& cell, const fs::path& file) {
  if (cell == "N/A") return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ParseError(0, file.string() + ": bad IoU value \"" + cell + "\"");
  }
}

}  // namespace

ExperimentReport cmd_compare(std::span<const fs::path> runs,
                             const std::optional<fs::path>& out_dir, std::ostream& out) {
  if (runs.size() < 2) throw ConfigError("compare needs at least two run directories");
  ExperimentReport report;
  std::optional<std::string> eval_hash;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const fs::path run_file = runs[r] / "run.json";
    std::ifstream in(run_file);
    if (!in) throw IoError("cannot open " + run_file.string());
    Json run;
    try {
      run = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(0, run_file.string() + ": " + e.what());
    }
    const ClassCatalog catalog(run.at("catalog").get<std::vector<std::string>>());
    if (r == 0) {
      report.catalog = catalog;
    } else if (!(catalog == report.catalog)) {
      throw CatalogMismatchError("run " + runs[r].string() + " uses a different catalog");
    }
    const std::string hash = run.at("eval_set_hash").get<std::string>();
    if (eval_hash && *eval_hash != hash) {
      throw CatalogMismatchError("run " + runs[r].string() + " was evaluated on a different set");
    }
    eval_hash = hash;

    std::string label = run.at("mode").get<std::string>();
    int dup = 1;
    for (const auto& c : report.columns) {
      if (c == label || c.rfind(label + "#", 0) == 0) ++dup;
    }
    if (dup > 1) label += "#" + std::to_string(dup);
    report.columns.push_back(label);
    report.seeds.push_back(run.at("seed").get<std::uint64_t>());
    report.config_hashes.push_back(std::stoull(run.at("config_hash").get<std::string>(), nullptr, 16));

    std::vector<ClassIou> ious(catalog.size());
    const fs::path iou_file = runs[r] / "eval_iou.csv";
    std::ifstream iou_in(iou_file);
    if (iou_in) {
      std::string line;
      std::getline(iou_in, line);  // header
      while (std::getline(iou_in, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        const auto id = catalog.find(line.substr(0, comma));
        if (id) ious[index_of(*id)] = parse_iou_cell(line.substr(comma + 1), iou_file);
      }
    }
    report.mean_objects.push_back(mean_iou(ious, object_classes(catalog)));
    report.mean_all.push_back(mean_iou(ious, all_classes(catalog)));
    report.iou.push_back(std::move(ious));
  }
  for (std::size_t r = 0; r < report.columns.size(); ++r) {
    if (report.columns[r] == mode_name(Mode::kBaseline)) {
      report.reference = r;
      break;
    }
  }
  if (out_dir) {
    write_file_atomic(*out_dir / "compare.csv", report.to_csv());
    write_file_atomic(*out_dir / "compare.txt", report.to_text());
  }
  out << report.to_text();
  return report;
}

std::string ExperimentReport::to_csv() const {
  std::ostringstream out;
  out << "class";
  for (const auto& c : columns) out << ',' << c;
  for (const auto& c : columns) out << ",delta_" << c;
  out << '\n';
  auto row = [&](const std::string& name, auto cell) {
    out << name;
    for (std::size_t r = 0; r < columns.size(); ++r) out << ',' << format_iou(cell(r));
    for (std::size_t r = 0; r < columns.size(); ++r) {
      out << ',' << format_delta(cell(r), cell(reference));
    }
    out << '\n';
  };
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    row(catalog.names()[i], [&](std::size_t r) { return iou[r][i]; });
  }
  row("mean_objects", [&](std::size_t r) { return mean_objects[r]; });
  row("mean_all", [&](std::size_t r) { return mean_all[r]; });
  return out.str();
}

std::string ExperimentReport::to_text() const {
  std::ostringstream out;
  std::size_t width = 10;
  for (const auto& c : columns) width = std::max(width, c.size() + 2);
  auto cellw = [&](const std::string& s) {
    std::string pad(width > s.size() ? width - s.size() : 1, ' ');
    return pad + s;
  };
  auto table = [&](const std::string& title, bool deltas) {
    out << title << '\n' << std::left << std::setw(16) << "class" << std::right;
    for (const auto& c : columns) out << cellw(c);
    out << '\n';
    auto row = [&](const std::string& name, auto cell) {
      out << std::left << std::setw(16) << name << std::right;
      for (std::size_t r = 0; r < columns.size(); ++r) {
        out << cellw(deltas ? format_delta(cell(r), cell(reference)) : format_iou(cell(r)));
      }
      out << '\n';
    };
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      row(catalog.names()[i], [&](std::size_t r) { return iou[r][i]; });
    }
    row("mean (objects)", [&](std::size_t r) { return mean_objects[r]; });
    row("mean (all)", [&](std::size_t r) { return mean_all[r]; });
  };
  table("IoU per class", false);
  out << '\n';
  table("Delta vs " + columns[reference], true);
  out << "\nseeds:";
  for (auto s : seeds) out << ' ' << s;
  out << "\nconfig hashes:";
  for (auto h : config_hashes) out << ' ' << hex64(h);
  out << '\n';
  return out.str();
}

}  // namespace pcseg
