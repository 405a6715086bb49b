// SPDX-License-Identifier: Apache-2.0
//
// Frequency-derived class weights: w_i = 1 / ln(1 + f_i + epsilon), where f_i
// is the fraction of all points that belong to class i.

#ifndef PCSEG_IMBALANCE_HPP_
#define PCSEG_IMBALANCE_HPP_

#include <map>
#include <span>
#include <string>
#include <vector>

#include "pcseg/catalog.hpp"
#include "pcseg/ingest.hpp"

namespace pcseg {

inline constexpr double kDefaultWeightEpsilon = 1e-4;

struct ClassWeights {
  std::vector<double> values;
  double epsilon = kDefaultWeightEpsilon;

  std::size_t size() const { return values.size(); }
  double operator[](ClassId id) const { return values[index_of(id)]; }

  static ClassWeights uniform(std::size_t classes);
};

// Throws EmptyDatasetError when the dataset has no points.
std::vector<double> class_frequencies(const DatasetStats& stats);

// Throws DomainError if a frequency is outside [0, 1] or epsilon < 0.
// epsilon = 0 is accepted for inspecting published tables.
ClassWeights class_weights(std::span<const double> frequencies,
                           double epsilon = kDefaultWeightEpsilon);
double class_weight(double frequency, double epsilon = kDefaultWeightEpsilon);

// exp(1/w) - 1 - epsilon. Throws DomainError for w <= 0.
double implied_frequency(double weight, double epsilon = kDefaultWeightEpsilon);

// Bounds of class_weight over f in [0, 1].
double min_class_weight(double epsilon);
double max_class_weight(double epsilon);

// Builds weights from a user-supplied name -> weight table. Every catalog
// class must be present; weights must be positive and finite.
ClassWeights weights_from_table(const std::map<std::string, double>& table,
                                const ClassCatalog& catalog);

// "class  weight" rows, 6 significant digits.
std::string format_weights_table(const ClassWeights& weights,
                                 const ClassCatalog& catalog);

}  // namespace pcseg

#endif  // PCSEG_IMBALANCE_HPP_
