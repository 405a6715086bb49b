// SPDX-License-Identifier: Apache-2.0

#include "pcseg/geom.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "pcseg/errors.hpp"

namespace pcseg {

double normalize_angle(double radians) {
  double a = std::remainder(radians, 2.0 * M_PI);  // [-pi, pi]
  if (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

bool OrientedBox3::valid() const {
  return center.allFinite() && std::isfinite(yaw) && dims.allFinite() &&
         dims.x() > 0.0 && dims.y() > 0.0 && dims.z() > 0.0;
}

std::array<Eigen::Vector3d, 8> OrientedBox3::corners() const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  std::array<Eigen::Vector3d, 8> out;
  for (int i = 0; i < 8; ++i) {
    const double lx = ((i & 1) ? 0.5 : -0.5) * dims.x();
    const double ly = ((i & 2) ? 0.5 : -0.5) * dims.y();
    const double lz = ((i & 4) ? 0.5 : -0.5) * dims.z();
    out[i] = center + Eigen::Vector3d(c * lx - s * ly, s * lx + c * ly, lz);
  }
  return out;
}

OrientedBox3 make_box(const Eigen::Vector3d& center, const Eigen::Vector3d& dims,
                      double yaw) {
  OrientedBox3 box{center, dims, std::isfinite(yaw) ? normalize_angle(yaw) : yaw};
  if (!box.valid()) {
    throw DomainError("box dims must be positive and all fields finite");
  }
  return box;
}

bool contains(const OrientedBox3& box, const Eigen::Vector3d& p) {
  const Eigen::Vector3d d = p - box.center;
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  // Rotate by -yaw into the box frame.
  const double lx = c * d.x() + s * d.y();
  const double ly = -s * d.x() + c * d.y();
  return std::abs(lx) <= 0.5 * box.dims.x() &&
         std::abs(ly) <= 0.5 * box.dims.y() &&
         std::abs(d.z()) <= 0.5 * box.dims.z();
}

LabeledCloud label_points(std::span<const Point3> points,
                          std::span<const Annotation> annotations) {
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    if (!annotations[i].box.valid()) {
      throw DomainError("annotation " + std::to_string(i) +
                        ": box dims must be positive and finite");
    }
    if (annotations[i].label == ClassId::kNoObject) {
      throw InvalidLabelError("annotation " + std::to_string(i) +
                              " is labeled NoObject");
    }
  }

  LabeledCloud out;
  out.points.assign(points.begin(), points.end());
  out.labels.assign(points.size(), ClassId::kNoObject);
  std::vector<double> best_volume(points.size(),
                                  std::numeric_limits<double>::infinity());
  for (const Annotation& a : annotations) {
    const double volume = a.box.volume();
    for (std::size_t i = 0; i < points.size(); ++i) {
      // Strict comparison keeps the earlier annotation on equal volumes.
      if (volume < best_volume[i] && contains(a.box, points[i])) {
        best_volume[i] = volume;
        out.labels[i] = a.label;
      }
    }
  }
  return out;
}

namespace {

template <typename Keep>
LabeledCloud filter_points(const LabeledCloud& cloud, Keep keep) {
  LabeledCloud out;
  out.points.reserve(cloud.points.size());
  out.labels.reserve(cloud.labels.size());
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (keep(cloud.points[i])) {
      out.points.push_back(cloud.points[i]);
      out.labels.push_back(cloud.labels[i]);
    }
  }
  return out;
}

}  // namespace

LabeledCloud frontal_filter(const LabeledCloud& cloud) {
  return filter_points(cloud, [](const Point3& p) { return p.x > 0.0f; });
}

LabeledCloud ground_filter(const LabeledCloud& cloud, double z_min) {
  return filter_points(cloud, [z_min](const Point3& p) {
    return static_cast<double>(p.z) >= z_min;
  });
}

}  // namespace pcseg
