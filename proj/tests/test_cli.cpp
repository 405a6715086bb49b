// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "pcseg/checkpoint.hpp"
#include "pcseg/dataset.hpp"
#include "pcseg/experiment.hpp"
#include "pcseg/imbalance.hpp"

namespace pcseg {
namespace {

namespace fs = std::filesystem;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("pcseg_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // A small, fast experiment.
  Json small_config() const {
    Json j = default_config().to_json();
    j["dataset"]["scenes"] = 6;
    j["eval_dataset"]["scenes"] = 3;
    j["train"]["epochs"] = 2;
    j["architecture"]["encoder"] = {8, 8};
    j["architecture"]["decoder"] = {8};
    return j;
  }

  fs::path write_json(const std::string& name, const Json& j) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }

  int run(std::vector<std::string> args, std::string* out_text = nullptr,
          std::string* err_text = nullptr) {
    args.insert(args.begin(), "pcseg");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text) *out_text = out.str();
    if (err_text) *err_text = err.str();
    return code;
  }

  fs::path dir_;
};

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_text(e.path());
  }
  return out;
}

TEST(Modes, ParseAndName) {
  for (auto m : {Mode::kBaseline, Mode::kWeighted, Mode::kIncremental, Mode::kWeightedIncremental}) {
    EXPECT_EQ(parse_mode(mode_name(m)), m);
  }
  EXPECT_THROW(parse_mode("fancy"), ConfigError);
  EXPECT_EQ(exit_code_for(ErrorKind::kConfig), 2);
  EXPECT_EQ(exit_code_for(ErrorKind::kData), 3);
  EXPECT_EQ(exit_code_for(ErrorKind::kTraining), 4);
}

TEST(Config, JsonRoundTrip) {
  const auto c = default_config();
  const auto back = parse_config(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.hash(), c.hash());
}

TEST(Config, HashIgnoresOutputAndThreads) {
  auto a = default_config();
  auto b = a;
  b.out = "elsewhere";
  b.train.threads = 8;
  EXPECT_EQ(a.hash(), b.hash());
  b.train.seed = 2;
  EXPECT_NE(a.hash(), b.hash());
}

TEST(Config, RejectsBadInput) {
  Json j = default_config().to_json();
  j["trian"] = Json::object();
  EXPECT_THROW(parse_config(j), ConfigError);
  j = default_config().to_json();
  j["train"]["epochs"] = 0;
  EXPECT_THROW(parse_config(j), ConfigError);
  j = default_config().to_json();
  j["plan"] = {{"Pedestrian"}, {"Car"}};
  EXPECT_THROW(parse_config(j), ConfigError);
  j = default_config().to_json();
  j["weights"] = {{"NoObject", 1.0}};
  EXPECT_THROW(parse_config(j), ConfigError);
  j = default_config().to_json();
  j["mode"] = "nope";
  EXPECT_THROW(parse_config(j), ConfigError);
}

TEST(Config, GroundFilterCanBeDisabled) {
  Json j = default_config().to_json();
  j["preprocess"]["z_min"] = "off";
  EXPECT_TRUE(std::isinf(parse_config(j).preprocess.z_min));
  j["preprocess"]["z_min"] = nullptr;
  EXPECT_TRUE(std::isinf(parse_config(j).preprocess.z_min));
}

TEST(Config, ShippedConfigsParse) {
  const fs::path dir = PCSEG_CONFIG_DIR;
  const auto bench = load_config(dir / "benchmark.json");
  EXPECT_EQ(bench.hash(), default_config().hash());
  const auto kitti = load_config(dir / "kitti.json");
  EXPECT_EQ(kitti.dataset.kind, DatasetSource::Kind::kKitti);
  ASSERT_TRUE(kitti.weight_table.has_value());
  EXPECT_EQ(kitti.weight_table->at("Pedestrian"), 48.749);
}

TEST(Config, OverridesApply) {
  auto c = default_config();
  CliOverrides o;
  o.mode = Mode::kBaseline;
  o.seed = 9;
  o.z_min = -1.0;
  o.no_frontal_filter = true;
  apply_overrides(c, o);
  EXPECT_EQ(c.mode, Mode::kBaseline);
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.preprocess.z_min, -1.0);
  EXPECT_FALSE(c.preprocess.frontal);
}

TEST(Benchmark, ImbalanceRegime) {
  const auto c = default_config();
  const auto scenes = load_dataset(c.dataset, c.catalog, c.preprocess);
  const auto stats = compute_stats(scenes, c.catalog);
  const auto f = class_frequencies(stats);
  EXPECT_GE(f[0], 0.95);
  EXPECT_LT(f[index_of(c.catalog.at("Pedestrian"))] + f[index_of(c.catalog.at("Cyclist"))], 0.01);
  EXPECT_GT(stats.point_counts[index_of(c.catalog.at("Pedestrian"))], 0u);
  EXPECT_GT(stats.point_counts[index_of(c.catalog.at("Cyclist"))], 0u);
}

TEST_F(CliTest, StatsWeightColumnMatchesImbalanceModule) {
  const auto cfg = write_json("c.json", small_config());
  std::string out;
  ASSERT_EQ(run({"stats", "--config", cfg.string()}, &out), 0);
  const auto c = load_config(cfg);
  const auto stats = compute_stats(load_dataset(c.dataset, c.catalog, c.preprocess), c.catalog);
  const auto w = class_weights(class_frequencies(stats));
  std::istringstream lines(out);
  std::string line;
  std::size_t found = 0;
  while (std::getline(lines, line)) {
    std::istringstream fields(line);
    std::string name;
    std::uint64_t points = 0, instances = 0;
    double freq = 0, weight = 0;
    if (!(fields >> name >> points >> instances >> freq >> weight)) continue;
    const auto id = c.catalog.find(name);
    ASSERT_TRUE(id.has_value()) << line;
    EXPECT_EQ(points, stats.point_counts[index_of(*id)]);
    EXPECT_NEAR(weight, w[*id], 1e-5 * w[*id]);
    ++found;
  }
  EXPECT_EQ(found, c.catalog.size());
}

TEST_F(CliTest, EmptyDatasetIsDataError) {
  fs::create_directories(dir_ / "empty" / "velodyne");
  Json j = small_config();
  j["dataset"] = {{"source", "kitti"}, {"dir", (dir_ / "empty").string()}};
  std::string err;
  EXPECT_EQ(run({"stats", "--config", write_json("c.json", j).string()}, nullptr, &err), 3);
  EXPECT_NE(err.find("error"), std::string::npos);
  j["dataset"]["dir"] = (dir_ / "missing").string();
  EXPECT_EQ(run({"stats", "--config", write_json("c.json", j).string()}), 3);
}

TEST_F(CliTest, UsageErrorsAreConfigErrors) {
  EXPECT_EQ(run({"train", "--mode", "sideways"}), 2);
  EXPECT_EQ(run({"frobnicate"}), 2);
  EXPECT_EQ(run({"train", "--config", (dir_ / "nope.json").string()}), 2);
  EXPECT_EQ(run({"compare", (dir_ / "a").string()}), 2);
}

TEST_F(CliTest, BaselineEqualsSinglePhaseIncremental) {
  Json j = small_config();
  j["plan"] = {{"Car", "Truck", "Van", "Pedestrian", "Cyclist"}};
  const auto cfg = write_json("c.json", j).string();
  ASSERT_EQ(run({"train", "--config", cfg, "--mode", "baseline", "--out", (dir_ / "b").string()}), 0);
  ASSERT_EQ(run({"train", "--config", cfg, "--mode", "incremental", "--out", (dir_ / "i").string()}), 0);
  EXPECT_EQ(read_text(dir_ / "b" / "phase_1.ckpt"), read_text(dir_ / "i" / "phase_1.ckpt"));
  EXPECT_EQ(read_text(dir_ / "b" / "eval_iou.csv"), read_text(dir_ / "i" / "eval_iou.csv"));
}

TEST_F(CliTest, RerunIsByteIdentical) {
  const auto cfg = write_json("c.json", small_config()).string();
  ASSERT_EQ(run({"train", "--config", cfg, "--out", (dir_ / "a").string(), "--threads", "1"}), 0);
  ASSERT_EQ(run({"train", "--config", cfg, "--out", (dir_ / "b").string(), "--threads", "1"}), 0);
  const auto a = tree(dir_ / "a");
  EXPECT_EQ(a, tree(dir_ / "b"));
  for (const char* f : {"phase_1.ckpt", "phase_2.ckpt", "phase_3.ckpt", "phase_1.ckpt.txt",
                        "phases.tsv", "weights.txt", "eval_iou.csv", "eval_confusion.csv",
                        "run.json", "config.json", "phase_3_loss.csv"}) {
    EXPECT_TRUE(a.contains(f)) << f;
  }
  // Thread count does not change results.
  ASSERT_EQ(run({"train", "--config", cfg, "--out", (dir_ / "c").string(), "--threads", "3"}), 0);
  EXPECT_EQ(a, tree(dir_ / "c"));
}

TEST_F(CliTest, EvalReproducesValidationOnTrainingSet) {
  Json j = small_config();
  j["train"]["validation_fraction"] = 0.0;
  j["eval_dataset"] = nullptr;
  j["mode"] = "baseline";
  const auto cfg = write_json("c.json", j);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (dir_ / "r").string()}), 0);
  const auto c = load_config(cfg);
  const auto ckpt = load_checkpoint(dir_ / "r" / "phase_1.ckpt");
  std::ostringstream sink;
  const auto ious = cmd_eval(dir_ / "r" / "phase_1.ckpt", c, std::nullopt, sink);
  TrainSummary again = cmd_train(c, sink);
  EXPECT_EQ(ious, again.phases.back().validation_iou);
  EXPECT_EQ(mean_iou(ious, object_classes(c.catalog)),
            again.phases.back().validation_miou[again.phases.back().best_epoch - 1]);
  std::string out;
  EXPECT_EQ(run({"eval", "--config", cfg.string(), "--checkpoint",
                 (dir_ / "r" / "phase_1.ckpt").string(), "--out", (dir_ / "e").string()},
                &out),
            0);
  EXPECT_EQ(read_text(dir_ / "e" / "eval_iou.csv"), read_text(dir_ / "r" / "eval_iou.csv"));
}

TEST_F(CliTest, CompareWithItselfHasZeroDeltas) {
  const auto cfg = write_json("c.json", small_config()).string();
  ASSERT_EQ(run({"train", "--config", cfg, "--out", (dir_ / "a").string()}), 0);
  std::ostringstream sink;
  const std::vector<fs::path> runs = {dir_ / "a", dir_ / "a"};
  const auto report = cmd_compare(runs, dir_ / "cmp", sink);
  EXPECT_EQ(report.columns.size(), 2u);
  const std::string csv = read_text(dir_ / "cmp" / "compare.csv");
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    ASSERT_EQ(cells.size(), 5u) << line;
    for (std::size_t k = 3; k < 5; ++k) {
      EXPECT_TRUE(cells[k] == "+0.0000" || cells[k] == "N/A") << line;
    }
  }
}

TEST_F(CliTest, CompareRendersMissingClassesAsNA) {
  const auto cfg = write_json("c.json", small_config()).string();
  ASSERT_EQ(run({"train", "--config", cfg, "--mode", "baseline", "--out", (dir_ / "b").string()}), 0);
  // A run whose last completed phase never activated Truck and Van.
  fs::copy(dir_ / "b", dir_ / "i", fs::copy_options::recursive);
  std::string iou = read_text(dir_ / "i" / "eval_iou.csv");
  for (const char* name : {"Truck,", "Van,"}) {
    const auto at = iou.find(name);
    const auto end = iou.find('\n', at);
    iou.replace(at, end - at, std::string(name) + "N/A");
  }
  std::ofstream(dir_ / "i" / "eval_iou.csv") << iou;
  std::string out;
  ASSERT_EQ(run({"compare", (dir_ / "b").string(), (dir_ / "i").string()}, &out), 0);
  std::istringstream lines(out);
  std::string line;
  bool saw_truck = false;
  while (std::getline(lines, line)) {
    if (line.rfind("Truck", 0) == 0) {
      saw_truck = true;
      EXPECT_NE(line.find("N/A"), std::string::npos) << line;
    }
  }
  EXPECT_TRUE(saw_truck);
}

TEST_F(CliTest, CompareRejectsDifferentEvalSets) {
  Json j = small_config();
  const auto cfg = write_json("c.json", j).string();
  ASSERT_EQ(run({"train", "--config", cfg, "--out", (dir_ / "a").string()}), 0);
  j["eval_dataset"]["seed"] = 4242;
  const auto cfg2 = write_json("d.json", j).string();
  ASSERT_EQ(run({"train", "--config", cfg2, "--out", (dir_ / "b").string()}), 0);
  EXPECT_EQ(run({"compare", (dir_ / "a").string(), (dir_ / "b").string()}), 3);
}

TEST_F(CliTest, SynthIsDeterministicAndReingests) {
  Json block = {{"seed", 3}, {"scenes", 4}, {"spec", scene_spec_to_json(
                    benchmark_scene_spec(ClassCatalog::kitti_default()), ClassCatalog::kitti_default())}};
  const auto spec = write_json("spec.json", block).string();
  ASSERT_EQ(run({"synth", "--spec", spec, "--out", (dir_ / "s1").string()}), 0);
  ASSERT_EQ(run({"synth", "--spec", spec, "--out", (dir_ / "s2").string()}), 0);
  EXPECT_EQ(tree(dir_ / "s1"), tree(dir_ / "s2"));

  const auto catalog = ClassCatalog::kitti_default();
  const PreprocessConfig pre;
  const auto from_disk = load_kitti_dataset(dir_ / "s1", catalog, pre);
  DatasetSource src;
  src.spec = benchmark_scene_spec(catalog);
  src.seed = 3;
  src.scenes = 4;
  const auto in_memory = load_dataset(src, catalog, pre);
  ASSERT_EQ(from_disk.size(), in_memory.size());
  EXPECT_EQ(compute_stats(from_disk, catalog).point_counts,
            compute_stats(in_memory, catalog).point_counts);
  for (std::size_t k = 0; k < from_disk.size(); ++k) {
    EXPECT_EQ(from_disk[k].cloud.labels, in_memory[k].cloud.labels) << k;
  }
}

TEST_F(CliTest, SynthZeroInstancesGivesBackgroundOnly) {
  Json block = {{"seed", 1}, {"scenes", 2}, {"spec", {{"background_points", 50}}}};
  const auto spec = write_json("spec.json", block).string();
  ASSERT_EQ(run({"synth", "--spec", spec, "--out", (dir_ / "s").string()}), 0);
  const auto scenes = load_kitti_dataset(dir_ / "s", ClassCatalog::kitti_default(),
                                         {false, -std::numeric_limits<double>::infinity(), false});
  ASSERT_EQ(scenes.size(), 2u);
  for (const auto& s : scenes) {
    EXPECT_TRUE(s.annotations.empty());
    EXPECT_EQ(s.cloud.size(), 50u);
  }
}

}  // namespace
}  // namespace pcseg
