// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "pcseg/catalog.hpp"
#include "pcseg/checkpoint.hpp"
#include "pcseg/curriculum.hpp"
#include "pcseg/dataset.hpp"
#include "pcseg/errors.hpp"
#include "pcseg/rng.hpp"

namespace pcseg {
namespace {

const ClassCatalog kCatalog = ClassCatalog::kitti_default();
const ClassId kCar = kCatalog.at("Car");
const ClassId kTruck = kCatalog.at("Truck");
const ClassId kVan = kCatalog.at("Van");
const ClassId kPed = kCatalog.at("Pedestrian");
const ClassId kCyc = kCatalog.at("Cyclist");

Architecture tiny_arch() {
  Architecture a;
  a.encoder = {8, 8};
  a.decoder = {8};
  a.output_dim = 6;
  return a;
}

std::vector<LabeledCloud> mixed_dataset(std::uint64_t seed, std::size_t scenes) {
  Rng rng(seed);
  std::vector<LabeledCloud> out(scenes);
  for (auto& c : out) {
    for (int i = 0; i < 40; ++i) {
      const auto k = static_cast<std::uint16_t>(rng.below(6));
      c.points.push_back({static_cast<float>(rng.uniform(1, 30)), static_cast<float>(rng.uniform(-10, 10)),
                          static_cast<float>(rng.uniform(-1.4, 1) + 0.1 * k),
                          static_cast<float>(std::min(1.0, 0.15 * k + 0.1 * rng.uniform01()))});
      c.labels.push_back(ClassId(k));
    }
  }
  return out;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 2;
  c.seed = 5;
  c.validation_fraction = 0.25;
  return c;
}

TEST(RemapLabels, IdentityEmptyAndPartial) {
  const auto data = mixed_dataset(1, 1);
  const auto& cloud = data[0];
  EXPECT_EQ(remap_labels(cloud, {kCar, kTruck, kVan, kPed, kCyc}), cloud);
  const auto none = remap_labels(cloud, {});
  for (ClassId c : none.labels) EXPECT_EQ(c, ClassId::kNoObject);
  EXPECT_EQ(none.points, cloud.points);

  const auto rare = remap_labels(cloud, {kPed, kCyc});
  std::vector<std::size_t> before(6), after(6);
  for (ClassId c : cloud.labels) ++before[index_of(c)];
  for (ClassId c : rare.labels) ++after[index_of(c)];
  EXPECT_EQ(after[index_of(kPed)], before[index_of(kPed)]);
  EXPECT_EQ(after[index_of(kCyc)], before[index_of(kCyc)]);
  EXPECT_EQ(after[index_of(kCar)] + after[index_of(kTruck)] + after[index_of(kVan)], 0u);
  EXPECT_EQ(after[0], before[0] + before[index_of(kCar)] + before[index_of(kTruck)] +
                          before[index_of(kVan)]);
}

ModelParams scalar_params(float value) {
  Architecture a;
  a.encoder = {1};
  a.decoder = {};
  a.output_dim = 2;
  ModelParams p = init_params(a, 0);
  for (auto& t : p.tensors) std::fill(t.data.begin(), t.data.end(), value);
  return p;
}

Gradients constant_grads(const ModelParams& p, double g) {
  Gradients out = Gradients::zeros_like(p);
  for (auto& t : out.tensors) std::fill(t.begin(), t.end(), g);
  return out;
}

TEST(Optimizer, SgdStep) {
  auto p = scalar_params(1.0f);
  auto state = OptimizerState::for_params(p);
  TrainConfig c;
  c.optimizer = OptimizerKind::kSgd;
  c.learning_rate = 0.1;
  optimizer_step(p, constant_grads(p, 2.0), state, c);
  for (const auto& t : p.tensors) {
    for (float v : t.data) EXPECT_EQ(v, 0.8f);
  }
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  for (double g : {3.0, -0.02}) {
    auto p = scalar_params(1.0f);
    auto state = OptimizerState::for_params(p);
    TrainConfig c;
    c.learning_rate = 0.01;
    optimizer_step(p, constant_grads(p, g), state, c);
    // m_hat = g, v_hat = g^2, step = lr * g / (|g| + eps).
    const double expected = 1.0 - 0.01 * g / (std::fabs(g) + 1e-8);
    for (const auto& t : p.tensors) {
      for (float v : t.data) EXPECT_EQ(v, static_cast<float>(expected));
    }
    EXPECT_EQ(state.step, 1u);
  }
}

TEST(Optimizer, ZeroGradientIsNoOp) {
  for (auto kind : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
    auto p = init_params(tiny_arch(), 3);
    const auto before = p;
    auto state = OptimizerState::for_params(p);
    TrainConfig c;
    c.optimizer = kind;
    for (int i = 0; i < 3; ++i) optimizer_step(p, Gradients::zeros_like(p), state, c);
    EXPECT_EQ(p, before);
  }
}

TEST(Optimizer, NonFiniteGradientLeavesParamsUntouched) {
  auto p = init_params(tiny_arch(), 3);
  const auto before = p;
  auto state = OptimizerState::for_params(p);
  auto g = constant_grads(p, 0.5);
  g.tensors.back().back() = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(optimizer_step(p, g, state, TrainConfig{}), NonFiniteGradientError);
  EXPECT_EQ(p, before);
  EXPECT_EQ(state.step, 0u);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.validation_fraction = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  EXPECT_NO_THROW(c.validate());
}

TEST(PhasePlan, Validation) {
  EXPECT_NO_THROW(PhasePlan::kitti_default(kCatalog).validate(kCatalog));
  EXPECT_NO_THROW(PhasePlan::single_phase(kCatalog).validate(kCatalog));
  EXPECT_THROW((PhasePlan{{{kPed, kCyc}, {kCar}}}).validate(kCatalog), ConfigError);
  EXPECT_THROW((PhasePlan{{{kPed, kCyc}, {kCar, kPed}, {kTruck, kVan}}}).validate(kCatalog),
               ConfigError);
  EXPECT_THROW((PhasePlan{{{ClassId::kNoObject, kPed, kCyc}, {kCar}, {kTruck, kVan}}})
                   .validate(kCatalog),
               ConfigError);
  EXPECT_THROW((PhasePlan{{{kPed, kCyc}, {}, {kCar, kTruck, kVan}}}).validate(kCatalog),
               ConfigError);
  const auto plan = PhasePlan::kitti_default(kCatalog);
  EXPECT_EQ(plan.active_through(0), (ClassSet{kPed, kCyc}));
  EXPECT_EQ(plan.active_through(1), (ClassSet{kCar, kPed, kCyc}));
  EXPECT_EQ(plan.active_through(2), (ClassSet{kCar, kTruck, kVan, kPed, kCyc}));
}

TEST(Split, DeterministicDisjointAndSorted) {
  TrainConfig c;
  c.validation_fraction = 0.3;
  const auto a = split_dataset(10, c);
  EXPECT_EQ(a.validation.size(), 3u);
  EXPECT_EQ(a.train.size(), 7u);
  EXPECT_TRUE(std::is_sorted(a.train.begin(), a.train.end()));
  std::vector<std::size_t> all = a.train;
  all.insert(all.end(), a.validation.begin(), a.validation.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(all[i], i);
  EXPECT_EQ(split_dataset(10, c).validation, a.validation);
  c.validation_fraction = 0.0;
  EXPECT_TRUE(split_dataset(10, c).validation.empty());
}

TEST(RunPhase, DeterministicForEqualSeeds) {
  const auto data = mixed_dataset(2, 8);
  const auto w = ClassWeights::uniform(6);
  const ClassSet all = {kCar, kTruck, kVan, kPed, kCyc};
  const auto a = run_phase(FreshStart{tiny_arch(), kCatalog}, data, all, w, quick_config());
  const auto b = run_phase(FreshStart{tiny_arch(), kCatalog}, data, all, w, quick_config());
  EXPECT_EQ(a.checkpoint.params, b.checkpoint.params);
  EXPECT_EQ(a.train_loss, b.train_loss);
  EXPECT_EQ(a.validation_miou, b.validation_miou);
  EXPECT_EQ(a.best_epoch, b.best_epoch);
  auto threaded = quick_config();
  threaded.threads = 3;
  const auto c = run_phase(FreshStart{tiny_arch(), kCatalog}, data, all, w, threaded);
  EXPECT_EQ(a.checkpoint.params, c.checkpoint.params);
  EXPECT_EQ(a.train_loss, c.train_loss);
}

TEST(RunPhase, ZeroLearningRateIsNoOp) {
  const auto data = mixed_dataset(3, 6);
  auto cfg = quick_config();
  cfg.learning_rate = 0.0;
  cfg.epochs = 1;
  const Checkpoint start{init_params(tiny_arch(), 77), kCatalog, {}};
  for (auto kind : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
    cfg.optimizer = kind;
    const auto r = run_phase(start, data, {kPed, kCyc}, ClassWeights::uniform(6), cfg);
    EXPECT_EQ(r.checkpoint.params, start.params);
  }
}

TEST(RunPhase, LearnsSeparableTwoClassData) {
  // Class follows the sign of y; a per-point classifier separates it.
  Rng rng(4);
  std::vector<LabeledCloud> data(8);
  for (auto& c : data) {
    for (int i = 0; i < 64; ++i) {
      const double y = rng.uniform(-10, 10);
      c.points.push_back({static_cast<float>(rng.uniform(1, 20)), static_cast<float>(y),
                          static_cast<float>(rng.uniform(-1, 1)), 0.5f});
      c.labels.push_back(y > 0 ? kCar : ClassId::kNoObject);
    }
  }
  Architecture a = tiny_arch();
  a.feature_scale = {0.1f, 0.1f, 1.0f, 1.0f};
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 2;
  cfg.validation_fraction = 0.0;
  cfg.seed = 3;
  const auto r = run_phase(FreshStart{a, kCatalog}, data, {kCar}, ClassWeights::uniform(6), cfg);
  EXPECT_LT(r.train_loss.back(), std::numbers::ln2);
  EXPECT_LT(r.train_loss.back(), 0.2);
}

TEST(RunPhase, PatienceStopsEarly) {
  const auto data = mixed_dataset(5, 6);
  auto cfg = quick_config();
  cfg.learning_rate = 0.0;
  cfg.epochs = 10;
  cfg.patience = 2;
  const auto r = run_phase(FreshStart{tiny_arch(), kCatalog}, data, {kCar},
                           ClassWeights::uniform(6), cfg);
  // Nothing changes after epoch 1, so two stale epochs end the phase.
  EXPECT_EQ(r.epochs_run, 3u);
  EXPECT_EQ(r.best_epoch, 1u);
}

TEST(RunPhase, Errors) {
  const auto w = ClassWeights::uniform(6);
  EXPECT_THROW(run_phase(FreshStart{tiny_arch(), kCatalog}, {}, {kCar}, w, quick_config()),
               EmptyDatasetError);
  Architecture wrong = tiny_arch();
  wrong.output_dim = 4;
  const auto data = mixed_dataset(6, 4);
  EXPECT_THROW(run_phase(FreshStart{wrong, kCatalog}, data, {kCar}, w, quick_config()),
               CatalogMismatchError);
  EXPECT_THROW(run_phase(FreshStart{tiny_arch(), kCatalog}, data, {kCar}, ClassWeights::uniform(5),
                         quick_config()),
               ShapeError);
}

TEST(Curriculum, SinglePhaseEqualsPlainTraining) {
  const auto data = mixed_dataset(7, 8);
  const auto cfg = quick_config();
  const auto plan = PhasePlan::single_phase(kCatalog);
  const auto cur = run_curriculum(plan, data, FreshStart{tiny_arch(), kCatalog}, cfg);
  ASSERT_EQ(cur.phases.size(), 1u);
  const auto plain = run_phase(FreshStart{tiny_arch(), kCatalog}, data, plan.phases[0],
                               ClassWeights::uniform(6), cfg);
  EXPECT_EQ(cur.phases[0].checkpoint.params, plain.checkpoint.params);
  EXPECT_EQ(cur.phases[0].train_loss, plain.train_loss);
}

TEST(Curriculum, PhasesChainThroughCheckpoints) {
  const auto data = mixed_dataset(8, 8);
  auto cfg = quick_config();
  cfg.weighted = true;
  std::vector<std::uint32_t> seen;
  const auto cur = run_curriculum(PhasePlan::kitti_default(kCatalog), data,
                                  FreshStart{tiny_arch(), kCatalog}, cfg, std::nullopt,
                                  [&](const PhaseResult& r) { seen.push_back(r.phase); });
  ASSERT_FALSE(cur.error.has_value());
  ASSERT_EQ(cur.phases.size(), 3u);
  EXPECT_EQ(seen, (std::vector<std::uint32_t>{1, 2, 3}));
  EXPECT_EQ(cur.phases[0].checkpoint.provenance.parent_checksum, 0u);
  for (std::size_t k = 1; k < 3; ++k) {
    EXPECT_EQ(cur.phases[k].checkpoint.provenance.parent_checksum,
              checkpoint_checksum(cur.phases[k - 1].checkpoint));
    EXPECT_EQ(cur.phases[k].checkpoint.provenance.phase, k + 1);
  }
  EXPECT_EQ(cur.phases[1].active, (ClassSet{kCar, kPed, kCyc}));
  EXPECT_EQ(cur.final_checkpoint(), &cur.phases.back().checkpoint);
  // Weights come from the full dataset once.
  const auto w = training_weights(data, kCatalog, cfg, std::nullopt);
  EXPECT_EQ(cur.weights.values, w.values);
  EXPECT_GT(w[kPed], 1.0);
}

TEST(Curriculum, WeightsDefaultToUnitAndHonourOverrides) {
  const auto data = mixed_dataset(9, 2);
  TrainConfig cfg;
  EXPECT_EQ(training_weights(data, kCatalog, cfg, std::nullopt).values, std::vector<double>(6, 1.0));
  cfg.weighted = true;
  ClassWeights table{{1.469, 16.306, 16.306, 16.306, 48.749, 48.604}, 0.0};
  EXPECT_EQ(training_weights(data, kCatalog, cfg, table).values, table.values);
}

TEST(Curriculum, FailureKeepsCompletedPhases) {
  auto data = mixed_dataset(10, 6);
  auto cfg = quick_config();
  cfg.weighted = true;
  // A NaN coordinate in every scene poisons the first gradient.
  for (auto& c : data) c.points[0].x = std::numeric_limits<float>::quiet_NaN();
  const auto cur = run_curriculum(PhasePlan::kitti_default(kCatalog), data,
                                  FreshStart{tiny_arch(), kCatalog}, cfg);
  ASSERT_TRUE(cur.error.has_value());
  EXPECT_EQ(cur.error_kind, ErrorKind::kTraining);
  EXPECT_TRUE(cur.phases.empty());
}

}  // namespace
}  // namespace pcseg
