// SPDX-License-Identifier: Apache-2.0
//
// Point-wise cross-entropy and class-weighted cross-entropy, averaged over
// points, plus the fused softmax + loss gradient with respect to logits.
//
// Sums over points use a fixed pairwise tree (see pairwise_sum) so results do
// not depend on how work is split across threads.

#ifndef PCSEG_LOSS_HPP_
#define PCSEG_LOSS_HPP_

#include <span>
#include <vector>

#include "pcseg/catalog.hpp"
#include "pcseg/imbalance.hpp"
#include "pcseg/net.hpp"

namespace pcseg {

inline constexpr double kProbabilityClamp = 1e-12;

struct LossValue {
  double loss = 0.0;
  // Contribution of each ground-truth class to `loss`.
  std::vector<double> per_class;
};

// Sums blocks of up to 8 values left to right, then combines halves
// recursively.
double pairwise_sum(std::span<const double> values);

// Throws ShapeError on size mismatches and InvalidLabelError on a label
// outside [0, N).
LossValue cross_entropy(const Matrix& probabilities,
                        std::span<const ClassId> labels);
LossValue weighted_cross_entropy(const Matrix& probabilities,
                                 std::span<const ClassId> labels,
                                 const ClassWeights& weights);

// d(weighted loss of softmax(logits)) / d logits:
//   (w[y_p] / P) * (S[p, j] - [j == y_p]).
Matrix loss_grad_logits(const Matrix& logits, std::span<const ClassId> labels,
                        const ClassWeights& weights);

}  // namespace pcseg

#endif  // PCSEG_LOSS_HPP_
