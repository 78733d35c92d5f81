#pragma once

#include <cstddef>
#include <span>

namespace ttime {

/// Fraction of equal entries. Throws MetricError on empty or mismatched input.
double accuracy(std::span<const int> predicted, std::span<const int> truth);

/// Mean per-class recall over the classes present in truth.
double balanced_accuracy(std::span<const int> predicted, std::span<const int> truth);

/// Mann-Whitney estimate of P(score_pos > score_neg) with ties counted 1/2,
/// computed from mid-ranks in O(n log n). Labels are 0/1 (anything non-zero
/// is positive). Throws MetricError unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

}  // namespace ttime
