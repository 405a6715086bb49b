// SPDX-License-Identifier: Apache-2.0

#include "pcseg/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "pcseg/errors.hpp"
#include "pcseg/rng.hpp"

namespace pcseg {

namespace fs = std::filesystem;

namespace {
constexpr std::uint64_t kSceneStream = 0x5343454e45ULL;  // "SCENE"
}

Scene prepare_scene(std::string id, std::span<const Point3> points,
                    std::vector<Annotation> annotations,
                    const PreprocessConfig& preprocess) {
  auto apply_filters = [&](LabeledCloud cloud) {
    if (preprocess.frontal) cloud = frontal_filter(cloud);
    return ground_filter(cloud, preprocess.z_min);
  };
  Scene scene;
  scene.id = std::move(id);
  if (preprocess.filter_before_label) {
    LabeledCloud unlabeled;
    unlabeled.points.assign(points.begin(), points.end());
    unlabeled.labels.assign(points.size(), ClassId::kNoObject);
    const LabeledCloud kept = apply_filters(std::move(unlabeled));
    scene.cloud = label_points(kept.points, annotations);
  } else {
    scene.cloud = apply_filters(label_points(points, annotations));
  }
  scene.annotations = std::move(annotations);
  return scene;
}

std::vector<LabeledCloud> clouds_of(std::span<const Scene> scenes) {
  std::vector<LabeledCloud> clouds;
  clouds.reserve(scenes.size());
  for (const Scene& s : scenes) clouds.push_back(s.cloud);
  return clouds;
}

DatasetStats compute_stats(std::span<const Scene> scenes, const ClassCatalog& catalog) {
  DatasetStats stats;
  stats.point_counts.assign(catalog.size(), 0);
  stats.instance_counts.assign(catalog.size(), 0);
  for (const Scene& s : scenes) {
    stats += compute_stats(std::span<const LabeledCloud>(&s.cloud, 1), catalog);
    add_instance_counts(stats, s.annotations);
  }
  return stats;
}

std::vector<std::byte> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::byte> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()),
                           static_cast<std::streamsize>(size))) {
    throw IoError("cannot read " + path.string());
  }
  return bytes;
}

void write_file_atomic(const fs::path& path, std::span<const std::byte> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out.flush()) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

void write_file_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::as_bytes(std::span(text.data(), text.size())));
}

namespace {

std::string read_text(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

RigidTransform load_calibration(const fs::path& path) {
  std::istringstream in(read_text(path));
  try {
    return read_calibration(in);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

}  // namespace

std::vector<Scene> load_kitti_dataset(const fs::path& dir, const ClassCatalog& catalog,
                                      const PreprocessConfig& preprocess,
                                      LoadReport* report) {
  const fs::path scan_dir = dir / "velodyne";
  if (!fs::is_directory(scan_dir)) {
    throw IoError("no velodyne/ directory under " + dir.string());
  }
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(scan_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".bin") {
      ids.push_back(entry.path().stem().string());
    }
  }
  std::sort(ids.begin(), ids.end());

  std::optional<RigidTransform> shared_calib;
  if (fs::exists(dir / "calib.txt")) shared_calib = load_calibration(dir / "calib.txt");

  LoadReport local;
  std::vector<Scene> scenes;
  scenes.reserve(ids.size());
  for (const std::string& id : ids) {
    const auto points = read_point_scan(read_file_bytes(scan_dir / (id + ".bin")));
    std::vector<Annotation> annotations;
    const fs::path label_path = dir / "label_2" / (id + ".txt");
    if (fs::exists(label_path)) {
      const fs::path calib_path = dir / "calib" / (id + ".txt");
      RigidTransform calib;
      if (fs::exists(calib_path)) {
        calib = load_calibration(calib_path);
      } else if (shared_calib) {
        calib = *shared_calib;
      } else {
        throw IoError("no calibration for scene " + id);
      }
      std::istringstream in(read_text(label_path));
      LabelFile labels;
      try {
        labels = read_labels(in, catalog);
      } catch (const ParseError& e) {
        throw ParseError(e.line(), label_path.string() + ": " + e.what());
      }
      local.skipped_labels += labels.skipped;
      for (const LabelRecord& r : labels.records) {
        annotations.push_back({box_to_sensor_frame(r.box, calib), r.label});
      }
    }
    // Sensors reporting 0..255 reflectance are not supported; clamp stray
    // values into [0, 1].
    std::vector<Point3> clamped(points);
    for (Point3& p : clamped) p.intensity = std::clamp(p.intensity, 0.0f, 1.0f);
    scenes.push_back(prepare_scene(id, clamped, std::move(annotations), preprocess));
  }
  local.scenes = scenes.size();
  if (report) *report = local;
  return scenes;
}

std::string scene_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu", index);
  return buf;
}

std::vector<SyntheticScene> generate_synthetic_dataset(const SyntheticSceneSpec& spec,
                                                       std::uint64_t seed,
                                                       std::size_t scenes) {
  std::vector<SyntheticScene> out;
  out.reserve(scenes);
  for (std::size_t k = 0; k < scenes; ++k) {
    out.push_back(generate_synthetic_scene(spec, derive_seed(seed, kSceneStream, k)));
  }
  return out;
}

std::vector<Scene> prepare_synthetic_dataset(std::span<const SyntheticScene> raw,
                                             const PreprocessConfig& preprocess) {
  std::vector<Scene> scenes;
  scenes.reserve(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) {
    scenes.push_back(prepare_scene(scene_id(k), raw[k].points, raw[k].annotations,
                                   preprocess));
  }
  return scenes;
}

void write_synthetic_dataset(const fs::path& dir, std::span<const SyntheticScene> scenes,
                             const ClassCatalog& catalog, std::uint64_t seed) {
  const RigidTransform calib = canonical_velo_to_cam();
  write_file_atomic(dir / "calib.txt", format_calibration(calib));
  nlohmann::ordered_json manifest;
  manifest["format"] = "pcseg-synthetic";
  manifest["seed"] = seed;
  manifest["catalog"] = catalog.names();
  manifest["scenes"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < scenes.size(); ++k) {
    const std::string id = scene_id(k);
    write_file_atomic(dir / "velodyne" / (id + ".bin"), write_point_scan(scenes[k].points));
    std::string labels;
    for (const Annotation& a : scenes[k].annotations) {
      CameraBox box = box_to_camera_frame(a.box, calib);
      box.type = catalog.name(a.label);
      labels += format_label_line(box) + "\n";
    }
    write_file_atomic(dir / "label_2" / (id + ".txt"), labels);
    manifest["scenes"].push_back(id);
  }
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace pcseg
