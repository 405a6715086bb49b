// SPDX-License-Identifier: Apache-2.0

#ifndef PCSEG_CATALOG_HPP_
#define PCSEG_CATALOG_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace pcseg {

// Index into a ClassCatalog. Index 0 is always the background class.
enum class ClassId : std::uint16_t { kNoObject = 0 };

constexpr std::size_t index_of(ClassId id) { return static_cast<std::size_t>(id); }
constexpr ClassId class_id(std::size_t index) {
  return static_cast<ClassId>(static_cast<std::uint16_t>(index));
}

using ClassSet = std::set<ClassId>;

// Ordered list of class names; position defines the ClassId.
class ClassCatalog {
 public:
  static constexpr std::string_view kNoObjectName = "NoObject";

  // Background only.
  ClassCatalog() : names_{std::string(kNoObjectName)} {}
  // Throws ConfigError unless names are unique, non-empty and start with
  // "NoObject".
  explicit ClassCatalog(std::vector<std::string> names);

  // NoObject, Car, Truck, Van, Pedestrian, Cyclist.
  static ClassCatalog kitti_default();

  std::size_t size() const { return names_.size(); }
  const std::string& name(ClassId id) const { return names_.at(index_of(id)); }
  const std::vector<std::string>& names() const { return names_; }
  std::optional<ClassId> find(std::string_view name) const;
  // Like find() but throws ConfigError for unknown names.
  ClassId at(std::string_view name) const;
  bool valid(ClassId id) const { return index_of(id) < names_.size(); }

  friend bool operator==(const ClassCatalog&, const ClassCatalog&) = default;

 private:
  std::vector<std::string> names_;
};

}  // namespace pcseg

#endif  // PCSEG_CATALOG_HPP_
