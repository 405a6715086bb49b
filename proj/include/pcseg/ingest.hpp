// SPDX-License-Identifier: Apache-2.0
//
// KITTI-format readers (Velodyne scans, object labels, calibration), the
// camera-to-sensor box conversion, the seeded synthetic scene generator and
// dataset statistics.

#ifndef PCSEG_INGEST_HPP_
#define PCSEG_INGEST_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pcseg/catalog.hpp"
#include "pcseg/geom.hpp"

namespace pcseg {

// ---------------------------------------------------------------------------
// Scans: consecutive 16-byte records of little-endian float32
// (x, y, z, intensity).

inline constexpr std::size_t kScanRecordBytes = 16;

// Throws LengthError if bytes.size() is not a multiple of 16 and ValueError
// on any non-finite value.
std::vector<Point3> read_point_scan(std::span<const std::byte> bytes);
std::vector<std::byte> write_point_scan(std::span<const Point3> points);

// ---------------------------------------------------------------------------
// Object labels.

// One line of a KITTI label file, camera frame (x right, y down, z forward).
// `location` is the bottom-center of the box.
struct CameraBox {
  std::string type;
  double truncated = 0.0;
  int occluded = 0;
  double alpha = 0.0;
  std::array<double, 4> image_box{};  // left, top, right, bottom (pixels)
  double height = 0.0;
  double width = 0.0;
  double length = 0.0;
  Eigen::Vector3d location = Eigen::Vector3d::Zero();
  double rotation_y = 0.0;
};

struct LabelRecord {
  CameraBox box;
  ClassId label = ClassId::kNoObject;
};

struct LabelFile {
  std::vector<LabelRecord> records;
  // Lines whose type is not in the catalog (e.g. "DontCare").
  std::size_t skipped = 0;
};

// Parses whitespace-delimited 15-field lines; blank lines are ignored.
// Throws ParseError (with the 1-based line number) on a wrong field count or
// a malformed number.
LabelFile read_labels(std::istream& in, const ClassCatalog& catalog);
std::string format_label_line(const CameraBox& box);

// ---------------------------------------------------------------------------
// Calibration.

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }
  RigidTransform inverse() const;
  RigidTransform compose(const RigidTransform& inner) const;  // this * inner

  // Throws NonRigidError unless R R^T = I and det R = 1 within `tolerance`.
  void check_rigid(double tolerance) const;
};

inline constexpr double kCalibrationTolerance = 1e-4;

// Reads the "Tr_velo_to_cam:" line (12 numbers, 3x4 row-major) and returns the
// sensor-to-camera transform. Throws MissingKeyError, ParseError or
// NonRigidError.
RigidTransform read_calibration(std::istream& in);
std::string format_calibration(const RigidTransform& velo_to_cam);

// The canonical axis permutation between the Velodyne and camera frames
// (sensor x -> camera z, sensor y -> camera -x, sensor z -> camera -y).
RigidTransform canonical_velo_to_cam(const Eigen::Vector3d& translation =
                                         Eigen::Vector3d::Zero());

// Lifts the bottom-center location by h/2 along the camera up axis, maps the
// result through the inverse calibration and converts the heading. For the
// canonical axis permutation yaw = -rotation_y - pi/2.
OrientedBox3 box_to_sensor_frame(const CameraBox& box,
                                 const RigidTransform& velo_to_cam);
// Inverse of box_to_sensor_frame. Only `type` is left empty; the image-plane
// fields are zero.
CameraBox box_to_camera_frame(const OrientedBox3& box,
                              const RigidTransform& velo_to_cam);

// ---------------------------------------------------------------------------
// Synthetic scenes.

struct Range {
  double min = 0.0;
  double max = 0.0;
};

struct SyntheticClassSpec {
  Range instances;             // boxes per scene (integers, inclusive)
  Range points_per_instance;   // integers, inclusive
  Range length, width, height; // meters
  Range intensity;             // reflectance in [0, 1]
};

struct SyntheticSceneSpec {
  // Indexed by ClassId; entry 0 (NoObject) is ignored.
  std::vector<SyntheticClassSpec> classes;
  std::size_t background_points = 0;
  double extent = 30.0;  // x and y drawn in [-extent, extent]
  double noise_sigma = 0.05;
  double ground_z = -1.73;
  // Background returns fill z in [ground_z, ground_z + background_height]
  // before noise; 0 gives a flat ground.
  double background_height = 0.0;
  Range background_intensity{0.0, 1.0};

  // Throws SpecError on empty or negative ranges or a non-positive extent.
  void validate() const;
};

struct SyntheticScene {
  std::vector<Point3> points;
  std::vector<Annotation> annotations;
  // Points generated per annotation, same order.
  std::vector<std::size_t> instance_points;
};

// Pure function of (spec, seed). Boxes stand on the ground and are placed
// without overlap where possible; background points are never generated
// inside a box.
SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec,
                                        std::uint64_t seed);

// ---------------------------------------------------------------------------
// Statistics.

struct DatasetStats {
  std::vector<std::uint64_t> point_counts;
  std::vector<std::uint64_t> instance_counts;
  std::uint64_t total_points = 0;

  DatasetStats& operator+=(const DatasetStats& other);
  friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

DatasetStats compute_stats(std::span<const LabeledCloud> clouds,
                           const ClassCatalog& catalog);
// Adds annotation counts to the point histogram.
void add_instance_counts(DatasetStats& stats,
                         std::span<const Annotation> annotations);

}  // namespace pcseg

#endif  // PCSEG_INGEST_HPP_
