#include "ttime/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <vector>

#include "ttime/errors.hpp"

namespace ttime {

namespace {

void check_pair(std::size_t a, std::size_t b) {
  if (a != b) throw MetricError("metric: length mismatch");
  if (a == 0) throw MetricError("metric: empty input");
}

}  // namespace

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  check_pair(predicted.size(), truth.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double balanced_accuracy(std::span<const int> predicted, std::span<const int> truth) {
  check_pair(predicted.size(), truth.size());
  std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // hits, total
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto& [hits, total] = per_class[truth[i]];
    ++total;
    hits += predicted[i] == truth[i];
  }
  double sum = 0.0;
  for (const auto& [cls, ht] : per_class) sum += static_cast<double>(ht.first) / static_cast<double>(ht.second);
  return sum / static_cast<double>(per_class.size());
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_pair(scores.size(), labels.size());
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });

  // Sum of mid-ranks (1-based) of the positives.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start + 1;
    while (end < n && scores[order[end]] == scores[order[start]]) ++end;
    const double mid = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t i = start; i < end; ++i) {
      if (labels[order[i]] != 0) {
        rank_sum += mid;
        ++n_pos;
      }
    }
    start = end;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw MetricError("auc: both classes must be present");
  const double pos = static_cast<double>(n_pos);
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * static_cast<double>(n_neg));
}

}  // namespace ttime
