// SPDX-License-Identifier: Apache-2.0

#include "pcseg/eval.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>
#include <thread>

#include "pcseg/errors.hpp"

namespace pcseg {

void ConfusionMatrix::accumulate(std::span<const ClassId> truth,
                                 std::span<const ClassId> predicted) {
  if (truth.size() != predicted.size()) {
    throw ShapeError("ground truth and prediction lengths differ");
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const std::size_t g = index_of(truth[i]);
    const std::size_t p = index_of(predicted[i]);
    if (g >= classes_ || p >= classes_) {
      throw InvalidLabelError("class index outside confusion matrix");
    }
    ++counts_[g * classes_ + p];
  }
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw ShapeError("confusion matrix sizes differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

std::vector<ClassIou> iou_per_class(const ConfusionMatrix& cm) {
  const std::size_t n = cm.size();
  std::vector<ClassIou> ious(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t tp = cm.at(i, i);
    std::uint64_t fn = 0;
    std::uint64_t fp = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      fn += cm.at(i, j);
      fp += cm.at(j, i);
    }
    const std::uint64_t denom = tp + fn + fp;
    if (denom > 0) ious[i] = static_cast<double>(tp) / static_cast<double>(denom);
  }
  return ious;
}

ClassIou mean_iou(std::span<const ClassIou> ious, const ClassSet& include) {
  double sum = 0.0;
  std::size_t count = 0;
  for (ClassId id : include) {
    const std::size_t i = index_of(id);
    if (i < ious.size() && ious[i]) {
      sum += *ious[i];
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

ClassSet object_classes(const ClassCatalog& catalog) {
  ClassSet s;
  for (std::size_t i = 1; i < catalog.size(); ++i) s.insert(class_id(i));
  return s;
}

ClassSet all_classes(const ClassCatalog& catalog) {
  ClassSet s = object_classes(catalog);
  s.insert(ClassId::kNoObject);
  return s;
}

ConfusionMatrix evaluate(const ModelParams& params, std::span<const LabeledCloud> clouds,
                         unsigned threads) {
  const std::size_t n = params.arch.output_dim;
  const unsigned workers =
      static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(threads, clouds.size())));
  std::vector<ConfusionMatrix> partial(workers, ConfusionMatrix(n));
  auto work = [&](unsigned w) {
    for (std::size_t i = w; i < clouds.size(); i += workers) {
      if (clouds[i].points.empty()) continue;
      partial[w].accumulate(clouds[i].labels, predict_labels(params, clouds[i].points));
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  ConfusionMatrix total(n);
  for (const auto& p : partial) total += p;
  return total;
}

std::string format_iou(const ClassIou& iou) {
  if (!iou) return "N/A";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", *iou);
  return buf;
}

std::string confusion_to_csv(const ConfusionMatrix& cm, const ClassCatalog& catalog) {
  std::ostringstream out;
  out << "truth\\predicted";
  for (const auto& name : catalog.names()) out << ',' << name;
  out << '\n';
  for (std::size_t g = 0; g < cm.size(); ++g) {
    out << catalog.names()[g];
    for (std::size_t p = 0; p < cm.size(); ++p) out << ',' << cm.at(g, p);
    out << '\n';
  }
  return out.str();
}

std::string iou_to_csv(std::span<const ClassIou> ious, const ClassCatalog& catalog) {
  std::ostringstream out;
  out << "class,iou\n";
  for (std::size_t i = 0; i < ious.size(); ++i) {
    out << catalog.names()[i] << ',' << format_iou(ious[i]) << '\n';
  }
  out << "mean_objects," << format_iou(mean_iou(ious, object_classes(catalog))) << '\n';
  out << "mean_all," << format_iou(mean_iou(ious, all_classes(catalog))) << '\n';
  return out.str();
}

std::string iou_to_text(std::span<const ClassIou> ious, const ClassCatalog& catalog) {
  std::ostringstream out;
  char line[96];
  std::snprintf(line, sizeof(line), "%-14s %8s\n", "class", "IoU");
  out << line;
  for (std::size_t i = 0; i < ious.size(); ++i) {
    std::snprintf(line, sizeof(line), "%-14s %8s\n", catalog.names()[i].c_str(),
                  format_iou(ious[i]).c_str());
    out << line;
  }
  std::snprintf(line, sizeof(line), "%-14s %8s\n", "mean (objects)",
                format_iou(mean_iou(ious, object_classes(catalog))).c_str());
  out << line;
  std::snprintf(line, sizeof(line), "%-14s %8s\n", "mean (all)",
                format_iou(mean_iou(ious, all_classes(catalog))).c_str());
  out << line;
  return out.str();
}

}  // namespace pcseg
