// SPDX-License-Identifier: Apache-2.0
//
// Confusion matrices and per-class IoU = TP / (TP + FN + FP).

#ifndef PCSEG_EVAL_HPP_
#define PCSEG_EVAL_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcseg/catalog.hpp"
#include "pcseg/geom.hpp"
#include "pcseg/net.hpp"

namespace pcseg {

// Rows are ground truth, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes)
      : classes_(classes), counts_(classes * classes, 0) {}

  // Throws ShapeError on a length mismatch, InvalidLabelError on an index
  // outside the matrix.
  void accumulate(std::span<const ClassId> truth,
                  std::span<const ClassId> predicted);

  std::size_t size() const { return classes_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * classes_ + predicted];
  }
  std::uint64_t total() const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

// nullopt marks a class with TP + FN + FP = 0 (reported as "N/A").
using ClassIou = std::optional<double>;

std::vector<ClassIou> iou_per_class(const ConfusionMatrix& cm);

// Mean over the included classes that are defined; nullopt if none is.
ClassIou mean_iou(std::span<const ClassIou> ious, const ClassSet& include);

// Every class except NoObject.
ClassSet object_classes(const ClassCatalog& catalog);
ClassSet all_classes(const ClassCatalog& catalog);

// Runs the model over every cloud; scenes are split across `threads` workers
// and merged with integer addition.
ConfusionMatrix evaluate(const ModelParams& params,
                         std::span<const LabeledCloud> clouds,
                         unsigned threads = 1);

std::string format_iou(const ClassIou& iou);  // "0.1234" or "N/A"
std::string confusion_to_csv(const ConfusionMatrix& cm,
                             const ClassCatalog& catalog);
// Columns: class,iou. Two trailing rows hold the mean over object classes
// and the mean over all classes.
std::string iou_to_csv(std::span<const ClassIou> ious,
                       const ClassCatalog& catalog);
std::string iou_to_text(std::span<const ClassIou> ious,
                        const ClassCatalog& catalog);

}  // namespace pcseg

#endif  // PCSEG_EVAL_HPP_
