// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pcseg/catalog.hpp"
#include "pcseg/errors.hpp"
#include "pcseg/eval.hpp"
#include "pcseg/rng.hpp"

namespace pcseg {
namespace {

std::vector<ClassId> ids(std::initializer_list<int> v) {
  std::vector<ClassId> out;
  for (int i : v) out.push_back(ClassId(static_cast<std::uint16_t>(i)));
  return out;
}

TEST(Confusion, DiagonalWhenPerfect) {
  ConfusionMatrix cm(3);
  const auto y = ids({0, 1, 2, 2});
  cm.accumulate(y, y);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i != j) {
        EXPECT_EQ(cm.at(i, j), 0u);
      }
    }
  }
  EXPECT_EQ(cm.at(2, 2), 2u);
  EXPECT_EQ(cm.total(), 4u);
}

TEST(Confusion, EmptyInputIsNoOp) {
  ConfusionMatrix cm(3);
  cm.accumulate({}, {});
  EXPECT_EQ(cm, ConfusionMatrix(3));
}

TEST(Confusion, Errors) {
  ConfusionMatrix cm(3);
  EXPECT_THROW(cm.accumulate(ids({0, 1}), ids({0})), ShapeError);
  EXPECT_THROW(cm.accumulate(ids({0, 3}), ids({0, 1})), InvalidLabelError);
  EXPECT_THROW(cm.accumulate(ids({0, 1}), ids({0, 5})), InvalidLabelError);
}

TEST(Confusion, MatchesPairCounting) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::size_t n = rng.below(500);
    const std::size_t k = 2 + rng.below(5);
    std::vector<ClassId> t;
    std::vector<ClassId> p;
    for (std::size_t i = 0; i < n; ++i) {
      t.push_back(ClassId(static_cast<std::uint16_t>(rng.below(k))));
      p.push_back(ClassId(static_cast<std::uint16_t>(rng.below(k))));
    }
    ConfusionMatrix cm(k);
    cm.accumulate(std::span(t).first(n / 2), std::span(p).first(n / 2));
    cm.accumulate(std::span(t).subspan(n / 2), std::span(p).subspan(n / 2));
    const auto counts = oracle::pair_counts(t, p);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const auto it = counts.find({i, j});
        EXPECT_EQ(cm.at(i, j), it == counts.end() ? 0u : it->second);
      }
    }
  }
}

TEST(Iou, PerfectDiagonal) {
  ConfusionMatrix cm(4);
  cm.accumulate(ids({0, 1, 1, 3}), ids({0, 1, 1, 3}));
  const auto iou = iou_per_class(cm);
  EXPECT_EQ(iou[0], 1.0);
  EXPECT_EQ(iou[1], 1.0);
  EXPECT_FALSE(iou[2].has_value());
  EXPECT_EQ(iou[3], 1.0);
}

TEST(Iou, DirectArithmetic) {
  // Class 1: TP 3, FN 1, FP 2.
  ConfusionMatrix cm(2);
  cm.accumulate(ids({1, 1, 1, 1, 0, 0}), ids({1, 1, 1, 0, 1, 1}));
  EXPECT_EQ(iou_per_class(cm)[1], 0.5);
}

TEST(Iou, MatchesSetOracle) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed + 77);
    const std::size_t n = rng.below(400);
    const std::size_t k = 2 + rng.below(5);
    std::vector<ClassId> t;
    std::vector<ClassId> p;
    for (std::size_t i = 0; i < n; ++i) {
      t.push_back(ClassId(static_cast<std::uint16_t>(rng.below(k))));
      p.push_back(rng.below(3) == 0 ? t.back() : ClassId(static_cast<std::uint16_t>(rng.below(k))));
    }
    ConfusionMatrix cm(k);
    cm.accumulate(t, p);
    const auto got = iou_per_class(cm);
    const auto want = oracle::iou(t, p, k);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t c = 0; c < k; ++c) {
      ASSERT_EQ(got[c].has_value(), want[c].has_value());
      if (got[c]) {
        EXPECT_EQ(*got[c], *want[c]);
      }
    }
  }
}

TEST(MeanIou, ExcludesAbsentClasses) {
  const std::vector<ClassIou> a = {1.0, 0.5};
  EXPECT_EQ(mean_iou(a, {ClassId{0}, ClassId{1}}), 0.75);
  const std::vector<ClassIou> b = {std::nullopt, 0.4};
  EXPECT_EQ(mean_iou(b, {ClassId{0}, ClassId{1}}), 0.4);
  const std::vector<ClassIou> c = {std::nullopt, std::nullopt};
  EXPECT_FALSE(mean_iou(c, {ClassId{0}, ClassId{1}}).has_value());
}

TEST(MeanIou, MatchesRecomputation) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ClassIou> v(6);
    for (auto& x : v) {
      if (rng.below(4)) x = rng.uniform01();
    }
    ClassSet include;
    for (std::uint16_t c = 0; c < 6; ++c) {
      if (rng.below(2)) include.insert(ClassId(c));
    }
    long double sum = 0;
    int count = 0;
    for (ClassId c : include) {
      if (v[index_of(c)]) {
        sum += *v[index_of(c)];
        ++count;
      }
    }
    const auto got = mean_iou(v, include);
    ASSERT_EQ(got.has_value(), count > 0);
    if (got) {
      EXPECT_NEAR(*got, static_cast<double>(sum / count), 1e-12);
    }
  }
}

TEST(Evaluate, ThreadCountDoesNotChangeResult) {
  Architecture a;
  a.encoder = {8, 8};
  a.decoder = {8};
  const auto params = init_params(a, 3);
  Rng rng(3);
  std::vector<LabeledCloud> clouds(9);
  for (auto& c : clouds) {
    const std::size_t n = 1 + rng.below(50);
    for (std::size_t i = 0; i < n; ++i) {
      c.points.push_back({static_cast<float>(rng.uniform(0, 20)), static_cast<float>(rng.normal()),
                          static_cast<float>(rng.normal()), static_cast<float>(rng.uniform01())});
      c.labels.push_back(ClassId(static_cast<std::uint16_t>(rng.below(6))));
    }
  }
  const auto one = evaluate(params, clouds, 1);
  EXPECT_EQ(evaluate(params, clouds, 4), one);
  ConfusionMatrix manual(6);
  for (const auto& c : clouds) manual.accumulate(c.labels, predict_labels(params, c.points));
  EXPECT_EQ(one, manual);
}

TEST(Format, IouAndTables) {
  const auto catalog = ClassCatalog::kitti_default();
  EXPECT_EQ(format_iou(std::nullopt), "N/A");
  EXPECT_EQ(format_iou(0.5), "0.5000");
  const std::vector<ClassIou> v = {0.9, 0.5, std::nullopt, std::nullopt, 0.25, 0.0};
  const auto csv = iou_to_csv(v, catalog);
  EXPECT_NE(csv.find("Truck,N/A"), std::string::npos);
  EXPECT_NE(csv.find("Pedestrian,0.2500"), std::string::npos);
  EXPECT_NE(csv.find("mean_objects,0.2500"), std::string::npos);
  ConfusionMatrix cm(6);
  cm.accumulate(ids({0, 1}), ids({1, 1}));
  const auto table = confusion_to_csv(cm, catalog);
  EXPECT_EQ(table.substr(0, table.find('\n')),
            "truth\\predicted,NoObject,Car,Truck,Van,Pedestrian,Cyclist");
  EXPECT_NE(table.find("NoObject,0,1,0,0,0,0"), std::string::npos);
}

}  // namespace
}  // namespace pcseg
