// SPDX-License-Identifier: Apache-2.0
//
// Self-incremental training. Training starts on the rare classes only (every
// other point is relabeled NoObject); each following phase activates more
// classes and resumes from the previous phase's best checkpoint. The output
// head always spans the full catalog.

#ifndef PCSEG_CURRICULUM_HPP_
#define PCSEG_CURRICULUM_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pcseg/catalog.hpp"
#include "pcseg/checkpoint.hpp"
#include "pcseg/errors.hpp"
#include "pcseg/eval.hpp"
#include "pcseg/geom.hpp"
#include "pcseg/imbalance.hpp"
#include "pcseg/net.hpp"

namespace pcseg {

struct PhasePlan {
  // Classes activated by each phase.
  std::vector<ClassSet> phases;

  // Throws ConfigError unless phases are non-empty, pairwise disjoint, never
  // list NoObject, and together cover every other catalog class.
  void validate(const ClassCatalog& catalog) const;
  // Union of phases[0..phase].
  ClassSet active_through(std::size_t phase) const;

  // One phase holding every object class.
  static PhasePlan single_phase(const ClassCatalog& catalog);
  // {Pedestrian, Cyclist}, {Car}, {Truck, Van}.
  static PhasePlan kitti_default(const ClassCatalog& catalog);
};

enum class OptimizerKind { kSgd, kAdam };

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint32_t epochs = 20;      // per phase
  std::uint32_t batch_size = 4;   // scenes per optimizer step
  std::uint64_t seed = 1;
  bool weighted = false;
  double weight_epsilon = kDefaultWeightEpsilon;
  std::uint32_t patience = 0;     // epochs without improvement; 0 disables
  double validation_fraction = 0.2;
  unsigned threads = 1;

  // Throws ConfigError.
  void validate() const;
};

// Seed streams derived from TrainConfig::seed.
inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kSplitStream = 2;
inline constexpr std::uint64_t kShuffleStream = 3;

struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  static OptimizerState for_params(const ModelParams& params);
};

// Labels outside `active` become NoObject.
LabeledCloud remap_labels(const LabeledCloud& cloud, const ClassSet& active);

// sgd: p -= lr g. adam: bias-corrected first/second moments. Throws
// NonFiniteGradientError before touching params if any gradient is not
// finite.
void optimizer_step(ModelParams& params, const Gradients& grads,
                    OptimizerState& state, const TrainConfig& config);

struct FreshStart {
  Architecture arch;
  ClassCatalog catalog;
};
using PhaseStart = std::variant<FreshStart, Checkpoint>;

struct PhaseResult {
  std::uint32_t phase = 0;
  ClassSet active;
  Checkpoint checkpoint;  // best validation epoch
  std::vector<double> train_loss;        // mean scene loss per epoch
  std::vector<ClassIou> validation_miou;  // per epoch, over active classes
  std::vector<ClassIou> validation_iou;   // per class, best checkpoint
  std::uint32_t epochs_run = 0;
  std::uint32_t best_epoch = 0;           // 1-based
};

// Splits scene indices into (train, validation). With a zero validation
// count the training scenes double as the validation set.
struct DataSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};
DataSplit split_dataset(std::size_t scenes, const TrainConfig& config);

// Trains one phase on labels remapped to `active`. Throws EmptyDatasetError,
// CatalogMismatchError, NonFiniteGradientError.
PhaseResult run_phase(const PhaseStart& start,
                      std::span<const LabeledCloud> dataset,
                      const ClassSet& active, const ClassWeights& weights,
                      const TrainConfig& config, std::uint32_t phase_index = 1);

struct CurriculumResult {
  std::vector<PhaseResult> phases;
  ClassWeights weights;
  // Set when a phase threw; `phases` then holds the completed ones.
  std::optional<std::string> error;
  ErrorKind error_kind = ErrorKind::kTraining;

  const Checkpoint* final_checkpoint() const {
    return phases.empty() ? nullptr : &phases.back().checkpoint;
  }
};

// Loss weights for a run: unit weights unless config.weighted, in which case
// `override_weights` or the frequency-derived weights of the full dataset.
ClassWeights training_weights(std::span<const LabeledCloud> dataset,
                              const ClassCatalog& catalog,
                              const TrainConfig& config,
                              const std::optional<ClassWeights>& override_weights);

using PhaseCallback = std::function<void(const PhaseResult&)>;

CurriculumResult run_curriculum(
    const PhasePlan& plan, std::span<const LabeledCloud> dataset,
    const FreshStart& start, const TrainConfig& config,
    const std::optional<ClassWeights>& override_weights = std::nullopt,
    const PhaseCallback& on_phase = {});

}  // namespace pcseg

#endif  // PCSEG_CURRICULUM_HPP_
