// SPDX-License-Identifier: Apache-2.0

#include "pcseg/ingest.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <istream>
#include <sstream>

#include <Eigen/LU>

#include "pcseg/errors.hpp"
#include "pcseg/rng.hpp"

namespace pcseg {

namespace {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

std::uint32_t load_le32(const std::byte* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | std::to_integer<std::uint32_t>(p[i]);
  return v;
}

void store_le32(std::byte* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::byte>((v >> (8 * i)) & 0xffu);
}

std::vector<std::string> split_whitespace(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream ss(line);
  std::string token;
  while (ss >> token) fields.push_back(token);
  return fields;
}

template <typename T>
bool parse_number(const std::string& token, T& out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string fmt_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<Point3> read_point_scan(std::span<const std::byte> bytes) {
  if (bytes.size() % kScanRecordBytes != 0) {
    throw LengthError("scan length " + std::to_string(bytes.size()) +
                      " is not a multiple of 16");
  }
  std::vector<Point3> points(bytes.size() / kScanRecordBytes);
  for (std::size_t i = 0; i < points.size(); ++i) {
    float v[4];
    for (int k = 0; k < 4; ++k) {
      v[k] = std::bit_cast<float>(load_le32(bytes.data() + 16 * i + 4 * k));
      if (!std::isfinite(v[k])) {
        throw ValueError("non-finite value in scan record " + std::to_string(i));
      }
    }
    points[i] = Point3{v[0], v[1], v[2], v[3]};
  }
  return points;
}

std::vector<std::byte> write_point_scan(std::span<const Point3> points) {
  std::vector<std::byte> bytes(points.size() * kScanRecordBytes);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const float v[4] = {points[i].x, points[i].y, points[i].z, points[i].intensity};
    for (int k = 0; k < 4; ++k) {
      store_le32(bytes.data() + 16 * i + 4 * k, std::bit_cast<std::uint32_t>(v[k]));
    }
  }
  return bytes;
}

// ---------------------------------------------------------------------------

LabelFile read_labels(std::istream& in, const ClassCatalog& catalog) {
  LabelFile out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_whitespace(line);
    if (fields.empty()) continue;
    if (fields.size() != 15) {
      throw ParseError(line_no, "expected 15 fields, found " +
                                    std::to_string(fields.size()));
    }
    CameraBox box;
    box.type = fields[0];
    double numbers[14] = {};
    for (int k = 1; k < 15; ++k) {
      if (k == 2) continue;
      if (!parse_number(fields[k], numbers[k - 1]) || !std::isfinite(numbers[k - 1])) {
        throw ParseError(line_no, "malformed number \"" + fields[k] + "\" in field " +
                                      std::to_string(k + 1));
      }
    }
    if (!parse_number(fields[2], box.occluded)) {
      throw ParseError(line_no, "malformed occlusion flag \"" + fields[2] + "\"");
    }
    box.truncated = numbers[0];
    box.alpha = numbers[2];
    for (int k = 0; k < 4; ++k) box.image_box[k] = numbers[3 + k];
    box.height = numbers[7];
    box.width = numbers[8];
    box.length = numbers[9];
    box.location = {numbers[10], numbers[11], numbers[12]};
    box.rotation_y = numbers[13];

    const auto id = catalog.find(box.type);
    if (!id || *id == ClassId::kNoObject) {
      ++out.skipped;
      continue;
    }
    out.records.push_back({std::move(box), *id});
  }
  return out;
}

std::string format_label_line(const CameraBox& box) {
  std::ostringstream ss;
  ss << box.type << ' ' << fmt_double(box.truncated) << ' ' << box.occluded << ' '
     << fmt_double(box.alpha);
  for (double v : box.image_box) ss << ' ' << fmt_double(v);
  ss << ' ' << fmt_double(box.height) << ' ' << fmt_double(box.width) << ' '
     << fmt_double(box.length);
  for (int k = 0; k < 3; ++k) ss << ' ' << fmt_double(box.location[k]);
  ss << ' ' << fmt_double(box.rotation_y);
  return ss.str();
}

// ---------------------------------------------------------------------------

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

RigidTransform RigidTransform::compose(const RigidTransform& inner) const {
  RigidTransform out;
  out.rotation = rotation * inner.rotation;
  out.translation = rotation * inner.translation + translation;
  return out;
}

void RigidTransform::check_rigid(double tolerance) const {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw NonRigidError("calibration contains non-finite values");
  }
  const double ortho =
      (rotation * rotation.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  const double det = rotation.determinant();
  if (ortho > tolerance || std::abs(det - 1.0) > tolerance) {
    std::ostringstream ss;
    ss << "rotation is not rigid (max |RR^T - I| = " << ortho << ", det = " << det << ")";
    throw NonRigidError(ss.str());
  }
}

RigidTransform read_calibration(std::istream& in) {
  static const std::string kKey = "Tr_velo_to_cam:";
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = split_whitespace(line);
    if (fields.empty() || fields[0] != kKey) continue;
    if (fields.size() != 13) {
      throw ParseError(line_no, "Tr_velo_to_cam needs 12 numbers, found " +
                                    std::to_string(fields.size() - 1));
    }
    double m[12];
    for (int k = 0; k < 12; ++k) {
      if (!parse_number(fields[k + 1], m[k])) {
        throw ParseError(line_no, "malformed number \"" + fields[k + 1] + "\"");
      }
    }
    RigidTransform t;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) t.rotation(r, c) = m[4 * r + c];
      t.translation[r] = m[4 * r + 3];
    }
    t.check_rigid(kCalibrationTolerance);
    return t;
  }
  throw MissingKeyError("calibration has no Tr_velo_to_cam entry");
}

std::string format_calibration(const RigidTransform& velo_to_cam) {
  std::ostringstream ss;
  ss << "Tr_velo_to_cam:";
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) ss << ' ' << fmt_double(velo_to_cam.rotation(r, c));
    ss << ' ' << fmt_double(velo_to_cam.translation[r]);
  }
  ss << '\n';
  return ss.str();
}

RigidTransform canonical_velo_to_cam(const Eigen::Vector3d& translation) {
  RigidTransform t;
  t.rotation << 0, -1, 0,
                0, 0, -1,
                1, 0, 0;
  t.translation = translation;
  return t;
}

namespace {
const Eigen::Vector3d kCameraUp(0.0, -1.0, 0.0);
}

OrientedBox3 box_to_sensor_frame(const CameraBox& box,
                                 const RigidTransform& velo_to_cam) {
  velo_to_cam.check_rigid(kCalibrationTolerance);
  const RigidTransform cam_to_velo = velo_to_cam.inverse();
  const Eigen::Vector3d center_cam = box.location + 0.5 * box.height * kCameraUp;
  const Eigen::Vector3d heading_cam(std::cos(box.rotation_y), 0.0,
                                    -std::sin(box.rotation_y));
  const Eigen::Vector3d heading = cam_to_velo.rotation * heading_cam;
  return make_box(cam_to_velo.apply(center_cam), {box.length, box.width, box.height},
                  std::atan2(heading.y(), heading.x()));
}

CameraBox box_to_camera_frame(const OrientedBox3& box,
                              const RigidTransform& velo_to_cam) {
  velo_to_cam.check_rigid(kCalibrationTolerance);
  CameraBox out;
  out.length = box.dims.x();
  out.width = box.dims.y();
  out.height = box.dims.z();
  out.location = velo_to_cam.apply(box.center) - 0.5 * out.height * kCameraUp;
  const Eigen::Vector3d heading_cam =
      velo_to_cam.rotation * Eigen::Vector3d(std::cos(box.yaw), std::sin(box.yaw), 0.0);
  out.rotation_y = std::atan2(-heading_cam.z(), heading_cam.x());
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_range(const Range& r, const std::string& what, bool unit_interval = false) {
  if (!std::isfinite(r.min) || !std::isfinite(r.max) || r.min < 0.0 || r.max < r.min) {
    throw SpecError(what + ": range must satisfy 0 <= min <= max");
  }
  if (unit_interval && r.max > 1.0) throw SpecError(what + ": range must lie in [0, 1]");
}

double draw(Rng& rng, const Range& r) { return rng.uniform(r.min, r.max); }

std::int64_t draw_count(Rng& rng, const Range& r) {
  return rng.uniform_int(static_cast<std::int64_t>(std::ceil(r.min)),
                         static_cast<std::int64_t>(std::floor(r.max)));
}

// Points are drawn inside this fraction of each half-extent so that float32
// rounding never moves them onto or past a face.
constexpr double kInteriorShrink = 0.98;
constexpr int kPlacementAttempts = 100;
constexpr int kBackgroundAttempts = 64;

}  // namespace

void SyntheticSceneSpec::validate() const {
  if (!(extent > 0.0) || !std::isfinite(extent)) throw SpecError("extent must be positive");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw SpecError("noise sigma must be non-negative");
  }
  if (!(background_height >= 0.0) || !std::isfinite(background_height)) {
    throw SpecError("background height must be non-negative");
  }
  if (!std::isfinite(ground_z)) throw SpecError("ground height must be finite");
  check_range(background_intensity, "background intensity", true);
  for (std::size_t c = 1; c < classes.size(); ++c) {
    const auto& k = classes[c];
    const std::string tag = "class " + std::to_string(c);
    check_range(k.instances, tag + " instances");
    check_range(k.points_per_instance, tag + " points per instance");
    check_range(k.intensity, tag + " intensity", true);
    if (std::floor(k.instances.max) < std::ceil(k.instances.min) ||
        std::floor(k.points_per_instance.max) < std::ceil(k.points_per_instance.min)) {
      throw SpecError(tag + ": count range contains no integer");
    }
    if (k.instances.max > 0.0) {
      check_range(k.length, tag + " length");
      check_range(k.width, tag + " width");
      check_range(k.height, tag + " height");
      if (k.length.min <= 0.0 || k.width.min <= 0.0 || k.height.min <= 0.0) {
        throw SpecError(tag + ": box dimensions must be positive");
      }
    }
  }
}

SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec,
                                        std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  SyntheticScene scene;
  std::vector<double> radii;

  for (std::size_t c = 1; c < spec.classes.size(); ++c) {
    const SyntheticClassSpec& k = spec.classes[c];
    const std::int64_t instances = draw_count(rng, k.instances);
    for (std::int64_t n = 0; n < instances; ++n) {
      const Eigen::Vector3d dims(draw(rng, k.length), draw(rng, k.width),
                                 draw(rng, k.height));
      const double yaw = rng.uniform(-M_PI, M_PI);
      const double radius = 0.5 * std::hypot(dims.x(), dims.y());
      const double span = std::max(spec.extent - radius, 0.0);
      Eigen::Vector3d center;
      for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
        center = {rng.uniform(-span, span), rng.uniform(-span, span),
                  spec.ground_z + 0.5 * dims.z()};
        bool clear = true;
        for (std::size_t j = 0; j < scene.annotations.size() && clear; ++j) {
          const Eigen::Vector3d d = scene.annotations[j].box.center - center;
          clear = std::hypot(d.x(), d.y()) > radius + radii[j];
        }
        if (clear) break;
      }
      const OrientedBox3 box = make_box(center, dims, yaw);
      scene.annotations.push_back({box, class_id(c)});
      radii.push_back(radius);

      const std::int64_t count = draw_count(rng, k.points_per_instance);
      const double cy = std::cos(box.yaw);
      const double sy = std::sin(box.yaw);
      for (std::int64_t i = 0; i < count; ++i) {
        const double lx = kInteriorShrink * dims.x() * (rng.uniform01() - 0.5);
        const double ly = kInteriorShrink * dims.y() * (rng.uniform01() - 0.5);
        const double lz = kInteriorShrink * dims.z() * (rng.uniform01() - 0.5);
        const double intensity = draw(rng, k.intensity);
        scene.points.push_back(Point3{
            static_cast<float>(center.x() + cy * lx - sy * ly),
            static_cast<float>(center.y() + sy * lx + cy * ly),
            static_cast<float>(center.z() + lz), static_cast<float>(intensity)});
      }
      scene.instance_points.push_back(static_cast<std::size_t>(count));
    }
  }

  // Background samples that land inside a box are redrawn; a sample that
  // keeps landing inside boxes is dropped.
  for (std::size_t i = 0; i < spec.background_points; ++i) {
    for (int attempt = 0; attempt < kBackgroundAttempts; ++attempt) {
      const double x = rng.uniform(-spec.extent, spec.extent);
      const double y = rng.uniform(-spec.extent, spec.extent);
      const double z = spec.ground_z + rng.uniform(0.0, spec.background_height) +
                       spec.noise_sigma * rng.normal();
      const double intensity = draw(rng, spec.background_intensity);
      const Point3 p{static_cast<float>(x), static_cast<float>(y),
                     static_cast<float>(z), static_cast<float>(intensity)};
      const bool inside = std::any_of(
          scene.annotations.begin(), scene.annotations.end(),
          [&](const Annotation& a) { return contains(a.box, p); });
      if (!inside) {
        scene.points.push_back(p);
        break;
      }
    }
  }
  return scene;
}

// ---------------------------------------------------------------------------

DatasetStats& DatasetStats::operator+=(const DatasetStats& other) {
  if (point_counts.size() != other.point_counts.size() ||
      instance_counts.size() != other.instance_counts.size()) {
    throw ShapeError("dataset stats have different class counts");
  }
  for (std::size_t i = 0; i < point_counts.size(); ++i) {
    point_counts[i] += other.point_counts[i];
    instance_counts[i] += other.instance_counts[i];
  }
  total_points += other.total_points;
  return *this;
}

DatasetStats compute_stats(std::span<const LabeledCloud> clouds,
                           const ClassCatalog& catalog) {
  DatasetStats stats;
  stats.point_counts.assign(catalog.size(), 0);
  stats.instance_counts.assign(catalog.size(), 0);
  for (const LabeledCloud& cloud : clouds) {
    for (ClassId label : cloud.labels) {
      if (!catalog.valid(label)) {
        throw InvalidLabelError("label " + std::to_string(index_of(label)) +
                                " outside catalog");
      }
      ++stats.point_counts[index_of(label)];
    }
    stats.total_points += cloud.labels.size();
  }
  return stats;
}

void add_instance_counts(DatasetStats& stats, std::span<const Annotation> annotations) {
  for (const Annotation& a : annotations) {
    if (index_of(a.label) >= stats.instance_counts.size()) {
      throw InvalidLabelError("annotation label outside catalog");
    }
    ++stats.instance_counts[index_of(a.label)];
  }
}

}  // namespace pcseg
