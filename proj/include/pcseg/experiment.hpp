// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration and the command implementations behind the
// `pcseg` tool: stats, synth, train, eval, compare.

#ifndef PCSEG_EXPERIMENT_HPP_
#define PCSEG_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pcseg/catalog.hpp"
#include "pcseg/curriculum.hpp"
#include "pcseg/dataset.hpp"
#include "pcseg/errors.hpp"
#include "pcseg/eval.hpp"
#include "pcseg/ingest.hpp"
#include "pcseg/net.hpp"

namespace pcseg {

using Json = nlohmann::ordered_json;

enum class Mode { kBaseline, kWeighted, kIncremental, kWeightedIncremental };

std::string_view mode_name(Mode mode);
Mode parse_mode(std::string_view name);  // throws ConfigError
inline bool is_weighted(Mode m) {
  return m == Mode::kWeighted || m == Mode::kWeightedIncremental;
}
inline bool is_incremental(Mode m) {
  return m == Mode::kIncremental || m == Mode::kWeightedIncremental;
}

struct DatasetSource {
  enum class Kind { kSynthetic, kKitti };
  Kind kind = Kind::kSynthetic;
  std::filesystem::path dir;  // kKitti
  SyntheticSceneSpec spec;    // kSynthetic
  std::uint64_t seed = 1;     // kSynthetic
  std::size_t scenes = 1;     // kSynthetic
};

struct ExperimentConfig {
  ClassCatalog catalog = ClassCatalog::kitti_default();
  DatasetSource dataset;
  std::optional<DatasetSource> eval_dataset;  // defaults to `dataset`
  PreprocessConfig preprocess;
  Architecture arch;
  TrainConfig train;
  PhasePlan plan;
  std::optional<std::map<std::string, double>> weight_table;
  Mode mode = Mode::kWeightedIncremental;
  std::filesystem::path out = "run";

  // Plan used for training: `plan` for incremental modes, otherwise one
  // phase with every object class.
  PhasePlan effective_plan() const;
  // Canonical JSON; `out` and `threads` are omitted because they never
  // change results.
  Json to_json() const;
  std::uint64_t hash() const;
};

// The synthetic imbalance benchmark: roughly 96% background points, rare
// classes well under 1% after preprocessing.
SyntheticSceneSpec benchmark_scene_spec(const ClassCatalog& catalog);
ExperimentConfig default_config();

// Relative dataset paths resolve against `base_dir`.
ExperimentConfig parse_config(const Json& json, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);
SyntheticSceneSpec parse_scene_spec(const Json& json, const ClassCatalog& catalog);
Json scene_spec_to_json(const SyntheticSceneSpec& spec, const ClassCatalog& catalog);
DatasetSource parse_dataset_source(const Json& json, const ClassCatalog& catalog,
                                   const std::filesystem::path& base_dir);

struct CliOverrides {
  std::optional<Mode> mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<unsigned> threads;
  std::optional<double> z_min;
  bool no_frontal_filter = false;
};
void apply_overrides(ExperimentConfig& config, const CliOverrides& overrides);

std::vector<Scene> load_dataset(const DatasetSource& source, const ClassCatalog& catalog,
                                const PreprocessConfig& preprocess,
                                LoadReport* report = nullptr);

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUnexpected = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitTraining = 4;
int exit_code_for(ErrorKind kind);

// FNV-1a over the points and labels of every cloud.
std::uint64_t dataset_hash(std::span<const LabeledCloud> clouds);

// Evaluates `params` with ground truth remapped to `active`; classes outside
// `active` (other than NoObject) are reported as N/A.
std::vector<ClassIou> evaluate_active(const ModelParams& params,
                                      std::span<const LabeledCloud> clouds,
                                      const ClassSet& active, unsigned threads,
                                      ConfusionMatrix* confusion = nullptr);

void cmd_stats(const ExperimentConfig& config, std::ostream& out);

// `spec_file` holds a dataset block: {"scenes": n, "seed": s, "spec": {...}}
// with an optional "catalog". `seed` overrides the file's seed.
void cmd_synth(const std::filesystem::path& spec_file, std::optional<std::uint64_t> seed,
               const std::filesystem::path& out_dir, std::ostream& out);

struct TrainSummary {
  std::vector<PhaseResult> phases;
  std::vector<ClassIou> eval_iou;
  std::vector<std::vector<ClassIou>> phase_eval_iou;
  std::optional<std::string> error;
  ErrorKind error_kind = ErrorKind::kTraining;
};
TrainSummary cmd_train(const ExperimentConfig& config, std::ostream& out);

std::vector<ClassIou> cmd_eval(const std::filesystem::path& checkpoint,
                               const ExperimentConfig& config,
                               const std::optional<std::filesystem::path>& out_dir,
                               std::ostream& out);

struct ExperimentReport {
  ClassCatalog catalog;
  std::vector<std::string> columns;             // run labels (mode names)
  std::vector<std::vector<ClassIou>> iou;       // [column][class]
  std::vector<ClassIou> mean_objects;           // per column
  std::vector<ClassIou> mean_all;               // per column
  std::size_t reference = 0;                    // baseline column
  std::vector<std::uint64_t> seeds;
  std::vector<std::uint64_t> config_hashes;

  std::string to_csv() const;
  std::string to_text() const;
};
ExperimentReport cmd_compare(std::span<const std::filesystem::path> runs,
                             const std::optional<std::filesystem::path>& out_dir,
                             std::ostream& out);

// Full command line entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pcseg

#endif  // PCSEG_EXPERIMENT_HPP_
