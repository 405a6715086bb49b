// SPDX-License-Identifier: Apache-2.0

#include "pcseg/imbalance.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "pcseg/errors.hpp"

namespace pcseg {

ClassWeights ClassWeights::uniform(std::size_t classes) {
  return ClassWeights{std::vector<double>(classes, 1.0), 0.0};
}

std::vector<double> class_frequencies(const DatasetStats& stats) {
  if (stats.total_points == 0) {
    throw EmptyDatasetError("dataset contains no points");
  }
  std::vector<double> f(stats.point_counts.size());
  const double total = static_cast<double>(stats.total_points);
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = static_cast<double>(stats.point_counts[i]) / total;
  }
  return f;
}

double class_weight(double frequency, double epsilon) {
  if (!(frequency >= 0.0 && frequency <= 1.0)) {
    throw DomainError("class frequency must lie in [0, 1]");
  }
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw DomainError("epsilon must be non-negative");
  }
  const double denom = std::log1p(frequency + epsilon);
  if (!(denom > 0.0)) {
    throw DomainError("zero frequency requires epsilon > 0");
  }
  return 1.0 / denom;
}

ClassWeights class_weights(std::span<const double> frequencies, double epsilon) {
  ClassWeights w;
  w.epsilon = epsilon;
  w.values.reserve(frequencies.size());
  for (double f : frequencies) w.values.push_back(class_weight(f, epsilon));
  return w;
}

double implied_frequency(double weight, double epsilon) {
  if (!(weight > 0.0) || !std::isfinite(weight)) {
    throw DomainError("weight must be positive and finite");
  }
  return std::expm1(1.0 / weight) - epsilon;
}

double min_class_weight(double epsilon) { return 1.0 / std::log1p(1.0 + epsilon); }
double max_class_weight(double epsilon) { return 1.0 / std::log1p(epsilon); }

ClassWeights weights_from_table(const std::map<std::string, double>& table,
                                const ClassCatalog& catalog) {
  ClassWeights w;
  w.epsilon = 0.0;
  for (const std::string& name : catalog.names()) {
    const auto it = table.find(name);
    if (it == table.end()) {
      throw ConfigError("weight table has no entry for class \"" + name + "\"");
    }
    if (!(it->second > 0.0) || !std::isfinite(it->second)) {
      throw ConfigError("weight for \"" + name + "\" must be positive");
    }
    w.values.push_back(it->second);
  }
  for (const auto& [name, value] : table) {
    if (!catalog.find(name)) {
      throw ConfigError("weight table names unknown class \"" + name + "\"");
    }
  }
  return w;
}

std::string format_weights_table(const ClassWeights& weights,
                                 const ClassCatalog& catalog) {
  if (weights.size() != catalog.size()) {
    throw ShapeError("weight vector does not match catalog");
  }
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-12s %12s\n", "class", "weight");
  out << line;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    std::snprintf(line, sizeof(line), "%-12s %12.6g\n", catalog.names()[i].c_str(),
                  weights.values[i]);
    out << line;
  }
  return out.str();
}

}  // namespace pcseg
