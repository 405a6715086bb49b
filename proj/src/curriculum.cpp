// SPDX-License-Identifier: Apache-2.0

#include "pcseg/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "pcseg/ingest.hpp"
#include "pcseg/loss.hpp"
#include "pcseg/rng.hpp"

namespace pcseg {

// ---------------------------------------------------------------------------
// Plans and configuration.

void PhasePlan::validate(const ClassCatalog& catalog) const {
  if (phases.empty()) throw ConfigError("phase plan has no phases");
  ClassSet seen;
  for (std::size_t k = 0; k < phases.size(); ++k) {
    if (phases[k].empty()) {
      throw ConfigError("phase " + std::to_string(k + 1) + " activates no classes");
    }
    for (ClassId id : phases[k]) {
      if (id == ClassId::kNoObject) throw ConfigError("phase plan lists NoObject");
      if (!catalog.valid(id)) throw ConfigError("phase plan class outside catalog");
      if (!seen.insert(id).second) {
        throw ConfigError("class \"" + catalog.name(id) + "\" appears in two phases");
      }
    }
  }
  if (seen.size() != catalog.size() - 1) {
    throw ConfigError("phase plan does not cover every object class");
  }
}

ClassSet PhasePlan::active_through(std::size_t phase) const {
  ClassSet active;
  for (std::size_t k = 0; k <= phase && k < phases.size(); ++k) {
    active.insert(phases[k].begin(), phases[k].end());
  }
  return active;
}

PhasePlan PhasePlan::single_phase(const ClassCatalog& catalog) {
  return PhasePlan{{object_classes(catalog)}};
}

PhasePlan PhasePlan::kitti_default(const ClassCatalog& catalog) {
  return PhasePlan{{{catalog.at("Pedestrian"), catalog.at("Cyclist")},
                    {catalog.at("Car")},
                    {catalog.at("Truck"), catalog.at("Van")}}};
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be finite and non-negative");
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in [0, 1)");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
  if (!(weight_epsilon > 0.0)) throw ConfigError("weight epsilon must be positive");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

// ---------------------------------------------------------------------------

LabeledCloud remap_labels(const LabeledCloud& cloud, const ClassSet& active) {
  LabeledCloud out = cloud;
  for (ClassId& label : out.labels) {
    if (!active.contains(label)) label = ClassId::kNoObject;
  }
  return out;
}

OptimizerState OptimizerState::for_params(const ModelParams& params) {
  OptimizerState s;
  for (const Tensor& t : params.tensors) {
    s.first_moment.emplace_back(t.data.size(), 0.0);
    s.second_moment.emplace_back(t.data.size(), 0.0);
  }
  return s;
}

void optimizer_step(ModelParams& params, const Gradients& grads, OptimizerState& state,
                    const TrainConfig& config) {
  if (grads.tensors.size() != params.tensors.size()) {
    throw ShapeError("gradient layout does not match parameters");
  }
  for (std::size_t k = 0; k < grads.tensors.size(); ++k) {
    if (grads.tensors[k].size() != params.tensors[k].data.size()) {
      throw ShapeError("gradient layout does not match parameters");
    }
    for (double g : grads.tensors[k]) {
      if (!std::isfinite(g)) throw NonFiniteGradientError("non-finite gradient");
    }
  }
  const double lr = config.learning_rate;
  if (config.optimizer == OptimizerKind::kSgd) {
    for (std::size_t k = 0; k < grads.tensors.size(); ++k) {
      auto& p = params.tensors[k].data;
      for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = static_cast<float>(static_cast<double>(p[i]) - lr * grads.tensors[k][i]);
      }
    }
    ++state.step;
    return;
  }

  if (state.first_moment.size() != params.tensors.size()) {
    state = OptimizerState::for_params(params);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < grads.tensors.size(); ++k) {
    auto& p = params.tensors[k].data;
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = grads.tensors[k][i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] = static_cast<float>(static_cast<double>(p[i]) -
                                lr * m_hat / (std::sqrt(v_hat) + config.adam_epsilon));
    }
  }
}

// ---------------------------------------------------------------------------

DataSplit split_dataset(std::size_t scenes, const TrainConfig& config) {
  std::vector<std::size_t> order(scenes);
  for (std::size_t i = 0; i < scenes; ++i) order[i] = i;
  Rng rng(derive_seed(config.seed, kSplitStream));
  rng.shuffle(std::span<std::size_t>(order));
  std::size_t n_val = static_cast<std::size_t>(
      std::floor(config.validation_fraction * static_cast<double>(scenes)));
  if (scenes > 0 && n_val >= scenes) n_val = scenes - 1;
  DataSplit split;
  split.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

namespace {

// Fixed pairwise combination order, independent of the thread count.
Gradients tree_reduce(std::vector<Gradients>& parts, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return std::move(parts[lo]);
  const std::size_t mid = lo + (hi - lo) / 2;
  Gradients left = tree_reduce(parts, lo, mid);
  left += tree_reduce(parts, mid, hi);
  return left;
}

struct SceneStep {
  double loss = 0.0;
  Gradients grads;
};

SceneStep scene_step(const ModelParams& params, const LabeledCloud& cloud,
                     const ClassWeights& weights) {
  const ForwardTrace trace = forward_trace(params, cloud.points);
  SceneStep out;
  out.loss = weighted_cross_entropy(softmax(trace.logits), cloud.labels, weights).loss;
  const Matrix dlogits = loss_grad_logits(trace.logits, cloud.labels, weights);
  out.grads = backward(params, cloud.points, trace, dlogits);
  return out;
}

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn fn) {
  const unsigned workers =
      static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(threads, n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double iou_score(const ClassIou& iou) { return iou ? *iou : -1.0; }

}  // namespace

PhaseResult run_phase(const PhaseStart& start, std::span<const LabeledCloud> dataset,
                      const ClassSet& active, const ClassWeights& weights,
                      const TrainConfig& config, std::uint32_t phase_index) {
  config.validate();
  if (dataset.empty()) throw EmptyDatasetError("training dataset is empty");

  ModelParams params;
  std::optional<ClassCatalog> catalog;
  std::uint64_t parent = 0;
  if (const auto* fresh = std::get_if<FreshStart>(&start)) {
    fresh->arch.validate();
    if (fresh->arch.output_dim != fresh->catalog.size()) {
      throw CatalogMismatchError("output width does not match catalog size");
    }
    params = init_params(fresh->arch, derive_seed(config.seed, kInitStream));
    catalog = fresh->catalog;
  } else {
    const auto& ckpt = std::get<Checkpoint>(start);
    if (ckpt.params.arch.output_dim != ckpt.catalog.size()) {
      throw CatalogMismatchError("checkpoint output width does not match its catalog");
    }
    params = ckpt.params;
    catalog = ckpt.catalog;
    parent = checkpoint_checksum(ckpt);
  }
  if (weights.size() != catalog->size()) {
    throw ShapeError("weight vector does not match catalog size");
  }
  for (ClassId id : active) {
    if (id == ClassId::kNoObject || !catalog->valid(id)) {
      throw ConfigError("active set must hold object classes from the catalog");
    }
  }

  const DataSplit split = split_dataset(dataset.size(), config);
  std::vector<LabeledCloud> train;
  std::vector<LabeledCloud> validation;
  for (std::size_t i : split.train) {
    if (dataset[i].points.size() != dataset[i].labels.size()) {
      throw ShapeError("cloud has mismatched point and label counts");
    }
    if (!dataset[i].points.empty()) train.push_back(remap_labels(dataset[i], active));
  }
  for (std::size_t i : split.validation) {
    validation.push_back(remap_labels(dataset[i], active));
  }
  if (train.empty()) throw EmptyDatasetError("no non-empty training scenes");
  const std::span<const LabeledCloud> val_set =
      validation.empty() ? std::span<const LabeledCloud>(train) : validation;

  PhaseResult result;
  result.phase = phase_index;
  result.active = active;
  OptimizerState state = OptimizerState::for_params(params);
  std::optional<ModelParams> best;
  double best_score = 0.0;
  std::uint32_t stale = 0;

  std::vector<std::size_t> order(train.size());
  for (std::uint32_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffler(derive_seed(config.seed, kShuffleStream, epoch));
    shuffler.shuffle(std::span<std::size_t>(order));

    std::vector<double> losses;
    losses.reserve(train.size());
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t n = std::min<std::size_t>(config.batch_size, order.size() - b);
      std::vector<SceneStep> steps(n);
      parallel_for(n, config.threads, [&](std::size_t i) {
        steps[i] = scene_step(params, train[order[b + i]], weights);
      });
      std::vector<Gradients> parts;
      parts.reserve(n);
      for (auto& s : steps) {
        losses.push_back(s.loss);
        parts.push_back(std::move(s.grads));
      }
      Gradients grads = tree_reduce(parts, 0, parts.size());
      grads *= 1.0 / static_cast<double>(n);
      optimizer_step(params, grads, state, config);
    }
    result.train_loss.push_back(pairwise_sum(losses) / static_cast<double>(losses.size()));

    const auto ious = iou_per_class(evaluate(params, val_set, config.threads));
    const ClassIou miou = mean_iou(ious, active);
    result.validation_miou.push_back(miou);
    result.epochs_run = epoch;
    if (!best || iou_score(miou) > best_score) {
      best = params;
      best_score = iou_score(miou);
      result.best_epoch = epoch;
      result.validation_iou = ious;
      stale = 0;
    } else if (config.patience > 0 && ++stale >= config.patience) {
      break;
    }
  }

  result.checkpoint = Checkpoint{std::move(*best), *catalog,
                                 Provenance{phase_index, result.best_epoch, config.seed, parent}};
  return result;
}

ClassWeights training_weights(std::span<const LabeledCloud> dataset,
                              const ClassCatalog& catalog, const TrainConfig& config,
                              const std::optional<ClassWeights>& override_weights) {
  if (!config.weighted) return ClassWeights::uniform(catalog.size());
  if (override_weights) {
    if (override_weights->size() != catalog.size()) {
      throw ConfigError("weight table does not match catalog");
    }
    return *override_weights;
  }
  return class_weights(class_frequencies(compute_stats(dataset, catalog)),
                       config.weight_epsilon);
}

CurriculumResult run_curriculum(const PhasePlan& plan, std::span<const LabeledCloud> dataset,
                                const FreshStart& start, const TrainConfig& config,
                                const std::optional<ClassWeights>& override_weights,
                                const PhaseCallback& on_phase) {
  plan.validate(start.catalog);
  config.validate();
  CurriculumResult result;
  result.weights = training_weights(dataset, start.catalog, config, override_weights);

  PhaseStart from = start;
  for (std::size_t k = 0; k < plan.phases.size(); ++k) {
    try {
      PhaseResult phase = run_phase(from, dataset, plan.active_through(k), result.weights,
                                    config, static_cast<std::uint32_t>(k + 1));
      if (on_phase) on_phase(phase);
      from = phase.checkpoint;
      result.phases.push_back(std::move(phase));
    } catch (const Error& e) {
      result.error = "phase " + std::to_string(k + 1) + ": " + e.what();
      result.error_kind = e.kind();
      break;
    }
  }
  return result;
}

}  // namespace pcseg
