// SPDX-License-Identifier: Apache-2.0
//
// Scene assembly: labeling plus preprocessing, KITTI-layout directories and
// the on-disk synthetic dataset.
//
// Directory layout (both real and synthetic):
//   velodyne/<id>.bin   scan
//   label_2/<id>.txt    object labels, camera frame
//   calib/<id>.txt      per-scene calibration, or a shared calib.txt at the root
//   manifest.json       optional; scene ids and catalog (always written by synth)

#ifndef PCSEG_DATASET_HPP_
#define PCSEG_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pcseg/catalog.hpp"
#include "pcseg/geom.hpp"
#include "pcseg/ingest.hpp"

namespace pcseg {

struct PreprocessConfig {
  bool frontal = true;
  double z_min = -1.4;  // -infinity disables the ground filter
  // Labels are assigned before filtering unless this is set.
  bool filter_before_label = false;
};

struct Scene {
  std::string id;
  LabeledCloud cloud;
  std::vector<Annotation> annotations;
};

Scene prepare_scene(std::string id, std::span<const Point3> points,
                    std::vector<Annotation> annotations,
                    const PreprocessConfig& preprocess);

std::vector<LabeledCloud> clouds_of(std::span<const Scene> scenes);
DatasetStats compute_stats(std::span<const Scene> scenes,
                           const ClassCatalog& catalog);

struct LoadReport {
  std::size_t scenes = 0;
  std::size_t skipped_labels = 0;
};

// Reads every velodyne/*.bin (sorted by id). Scenes without a label file have
// no annotations. Throws IoError, ParseError, LengthError, NonRigidError.
std::vector<Scene> load_kitti_dataset(const std::filesystem::path& dir,
                                      const ClassCatalog& catalog,
                                      const PreprocessConfig& preprocess,
                                      LoadReport* report = nullptr);

// Scene k uses seed derive_seed(seed, kSceneStream, k).
std::vector<SyntheticScene> generate_synthetic_dataset(
    const SyntheticSceneSpec& spec, std::uint64_t seed, std::size_t scenes);

std::vector<Scene> prepare_synthetic_dataset(
    std::span<const SyntheticScene> raw, const PreprocessConfig& preprocess);

std::string scene_id(std::size_t index);

// Writes the layout above with a shared calib.txt (canonical axes).
void write_synthetic_dataset(const std::filesystem::path& dir,
                             std::span<const SyntheticScene> scenes,
                             const ClassCatalog& catalog, std::uint64_t seed);

// Writes via a temporary file and rename so readers never see partial data.
void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::byte> bytes);
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& text);
std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);

}  // namespace pcseg

#endif  // PCSEG_DATASET_HPP_
