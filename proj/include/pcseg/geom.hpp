// SPDX-License-Identifier: Apache-2.0
//
// Point-cloud geometry: points, yaw-oriented boxes, box-to-point labeling
// and the two preprocessing filters (frontal half-space, ground height).

#ifndef PCSEG_GEOM_HPP_
#define PCSEG_GEOM_HPP_

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "pcseg/catalog.hpp"

namespace pcseg {

// Sensor frame: x forward, y left, z up. Meters; intensity in [0, 1].
struct Point3 {
  float x = 0.0f;
  float y = 0.0f;
  float z = 0.0f;
  float intensity = 0.0f;

  Eigen::Vector3d position() const { return {x, y, z}; }
  friend bool operator==(const Point3&, const Point3&) = default;
};

// Wraps an angle into (-pi, pi].
double normalize_angle(double radians);

struct OrientedBox3 {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  // (length, width, height): extents along the box's local x, y, z axes.
  Eigen::Vector3d dims = Eigen::Vector3d::Ones();
  // Rotation about +z, radians.
  double yaw = 0.0;

  double volume() const { return dims.x() * dims.y() * dims.z(); }
  bool valid() const;
  std::array<Eigen::Vector3d, 8> corners() const;
};

// Validates dims (DomainError if any is not strictly positive or finite) and
// normalizes yaw.
OrientedBox3 make_box(const Eigen::Vector3d& center, const Eigen::Vector3d& dims,
                      double yaw);

struct Annotation {
  OrientedBox3 box;
  ClassId label = ClassId::kNoObject;
};

struct LabeledCloud {
  std::vector<Point3> points;
  std::vector<ClassId> labels;

  std::size_t size() const { return points.size(); }
  friend bool operator==(const LabeledCloud&, const LabeledCloud&) = default;
};

// Boundary points count as inside.
bool contains(const OrientedBox3& box, const Eigen::Vector3d& p);
inline bool contains(const OrientedBox3& box, const Point3& p) {
  return contains(box, p.position());
}

// Points inside several boxes take the class of the smallest-volume box;
// equal volumes resolve to the earlier annotation. Throws DomainError for an
// invalid box and InvalidLabelError for a NoObject annotation.
LabeledCloud label_points(std::span<const Point3> points,
                          std::span<const Annotation> annotations);

// Keeps points with x > 0.
LabeledCloud frontal_filter(const LabeledCloud& cloud);

// Keeps points with z >= z_min. Pass -infinity to disable.
LabeledCloud ground_filter(const LabeledCloud& cloud, double z_min);

}  // namespace pcseg

#endif  // PCSEG_GEOM_HPP_
