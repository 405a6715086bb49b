// SPDX-License-Identifier: Apache-2.0

#include "pcseg/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pcseg/errors.hpp"

namespace pcseg {

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kBlock = 8;
  if (values.size() <= kBlock) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

namespace {

void check_inputs(const Matrix& m, std::span<const ClassId> labels,
                  const ClassWeights& weights) {
  if (m.rows != labels.size()) {
    throw ShapeError("prediction rows (" + std::to_string(m.rows) +
                     ") do not match label count (" + std::to_string(labels.size()) + ")");
  }
  if (weights.size() != m.cols) {
    throw ShapeError("weight vector length does not match class count");
  }
  for (ClassId y : labels) {
    if (index_of(y) >= m.cols) {
      throw InvalidLabelError("label " + std::to_string(index_of(y)) +
                              " outside [0, " + std::to_string(m.cols) + ")");
    }
  }
}

}  // namespace

LossValue weighted_cross_entropy(const Matrix& probabilities,
                                 std::span<const ClassId> labels,
                                 const ClassWeights& weights) {
  check_inputs(probabilities, labels, weights);
  const std::size_t P = labels.size();
  LossValue out;
  out.per_class.assign(probabilities.cols, 0.0);
  if (P == 0) return out;

  std::vector<double> terms(P);
  for (std::size_t p = 0; p < P; ++p) {
    const double s = std::max(probabilities(p, index_of(labels[p])), kProbabilityClamp);
    terms[p] = weights[labels[p]] * -std::log(s);
  }
  const double inv_p = 1.0 / static_cast<double>(P);
  out.loss = pairwise_sum(terms) * inv_p;

  std::vector<double> bucket;
  for (std::size_t c = 0; c < probabilities.cols; ++c) {
    bucket.clear();
    for (std::size_t p = 0; p < P; ++p) {
      if (index_of(labels[p]) == c) bucket.push_back(terms[p]);
    }
    out.per_class[c] = pairwise_sum(bucket) * inv_p;
  }
  return out;
}

LossValue cross_entropy(const Matrix& probabilities, std::span<const ClassId> labels) {
  return weighted_cross_entropy(probabilities, labels,
                                ClassWeights::uniform(probabilities.cols));
}

Matrix loss_grad_logits(const Matrix& logits, std::span<const ClassId> labels,
                        const ClassWeights& weights) {
  check_inputs(logits, labels, weights);
  Matrix grad = softmax(logits);
  if (labels.empty()) return grad;
  const double inv_p = 1.0 / static_cast<double>(labels.size());
  for (std::size_t p = 0; p < labels.size(); ++p) {
    const double scale = weights[labels[p]] * inv_p;
    auto row = grad.row(p);
    row[index_of(labels[p])] -= 1.0;
    for (double& v : row) v *= scale;
  }
  return grad;
}

}  // namespace pcseg
