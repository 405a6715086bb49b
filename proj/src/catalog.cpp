// SPDX-License-Identifier: Apache-2.0

#include "pcseg/catalog.hpp"

#include <algorithm>
#include <limits>

#include "pcseg/errors.hpp"

namespace pcseg {

ClassCatalog::ClassCatalog(std::vector<std::string> names)
    : names_(std::move(names)) {
  if (names_.empty() || names_.front() != kNoObjectName) {
    throw ConfigError("class catalog must start with \"NoObject\"");
  }
  if (names_.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw ConfigError("class catalog too large");
  }
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty()) throw ConfigError("empty class name in catalog");
    for (std::size_t j = 0; j < i; ++j) {
      if (names_[i] == names_[j]) {
        throw ConfigError("duplicate class name \"" + names_[i] + "\"");
      }
    }
  }
}

ClassCatalog ClassCatalog::kitti_default() {
  return ClassCatalog({"NoObject", "Car", "Truck", "Van", "Pedestrian", "Cyclist"});
}

std::optional<ClassId> ClassCatalog::find(std::string_view name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return class_id(static_cast<std::size_t>(it - names_.begin()));
}

ClassId ClassCatalog::at(std::string_view name) const {
  if (auto id = find(name)) return *id;
  throw ConfigError("unknown class \"" + std::string(name) + "\"");
}

}  // namespace pcseg
