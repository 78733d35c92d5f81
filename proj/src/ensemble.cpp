#include "ttime/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ttime/errors.hpp"

namespace ttime {

std::string to_string(EnsembleMode m) {
  switch (m) {
    case EnsembleMode::sml_soft: return "sml-soft";
    case EnsembleMode::sml_hard: return "sml-hard";
    case EnsembleMode::average: return "average";
    case EnsembleMode::vote: return "vote";
  }
  return "?";
}

EnsembleMode parse_ensemble_mode(const std::string& s) {
  if (s == "sml-soft") return EnsembleMode::sml_soft;
  if (s == "sml-hard") return EnsembleMode::sml_hard;
  if (s == "average") return EnsembleMode::average;
  if (s == "vote") return EnsembleMode::vote;
  throw ConfigError("unknown ensemble mode: " + s);
}

PredictionHistory::PredictionHistory(std::size_t members, std::size_t classes, bool keep_rows)
    : members_(members), classes_(classes), keep_rows_(keep_rows) {
  if (members == 0 || classes == 0) throw ShapeError("PredictionHistory: need M >= 1 and K >= 1");
  reset();
}

void PredictionHistory::reset() {
  count_ = 0;
  rows_.clear();
  means_.assign(classes_, std::vector<double>(members_, 0.0));
  comoments_.assign(classes_, SymMatrix(members_));
}

void PredictionHistory::record(const Matrix& probs) {
  if (probs.rows != members_ || probs.cols != classes_)
    throw ShapeError("PredictionHistory::record: expected M x K probabilities");
  ++count_;
  const double a = static_cast<double>(count_);
  std::vector<double> delta(members_);
  for (std::size_t k = 0; k < classes_; ++k) {
    for (std::size_t m = 0; m < members_; ++m) {
      delta[m] = probs(m, k) - means_[k][m];
      means_[k][m] += delta[m] / a;
    }
    // C += delta (x - mean_new)^T = ((a-1)/a) delta delta^T
    const double f = (a - 1.0) / a;
    for (std::size_t i = 0; i < members_; ++i)
      for (std::size_t j = i; j < members_; ++j) comoments_[k].add(i, j, f * delta[i] * delta[j]);
  }
  if (keep_rows_) rows_.insert(rows_.end(), probs.data.begin(), probs.data.end());
}

Matrix PredictionHistory::class_matrix(std::size_t k) const {
  if (!keep_rows_) throw StateError("PredictionHistory: rows were not kept");
  Matrix out(count_, members_);
  for (std::size_t i = 0; i < count_; ++i)
    for (std::size_t m = 0; m < members_; ++m) out(i, m) = rows_[(i * members_ + m) * classes_ + k];
  return out;
}

SymMatrix PredictionHistory::covariance(std::size_t k) const {
  if (count_ < 2) throw StateError("PredictionHistory::covariance: need at least 2 trials");
  SymMatrix q = comoments_.at(k);
  q *= 1.0 / static_cast<double>(count_ - 1);
  return q;
}

SymMatrix sample_covariance(const Matrix& columns) {
  if (columns.rows < 2) throw StateError("sample_covariance: need at least 2 rows");
  const std::size_t n = columns.rows, m = columns.cols;
  std::vector<double> mean(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) mean[j] += columns(i, j);
  for (double& v : mean) v /= static_cast<double>(n);
  SymMatrix q(m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = a; b < m; ++b)
        q.add(a, b, (columns(i, a) - mean[a]) * (columns(i, b) - mean[b]));
  q *= 1.0 / static_cast<double>(n - 1);
  return q;
}

SmlWeights sml_weights_from(std::span<const SymMatrix> class_covariances) {
  SmlWeights w;
  w.per_class.reserve(class_covariances.size());
  for (const auto& q : class_covariances) {
    std::vector<double> v;
    try {
      v = principal_eigenvector(q);
    } catch (const ConvergenceError&) {
      return SmlWeights{};
    } catch (const NumericalError&) {
      return SmlWeights{};
    }
    if (std::accumulate(v.begin(), v.end(), 0.0) <= 0.0) return SmlWeights{};
    w.per_class.push_back(std::move(v));
  }
  w.valid = !w.per_class.empty();
  return w;
}

SmlWeights sml_weights(const PredictionHistory& history) {
  if (history.count() <= history.members()) return SmlWeights{};
  std::vector<SymMatrix> qs;
  qs.reserve(history.classes());
  for (std::size_t k = 0; k < history.classes(); ++k) qs.push_back(history.covariance(k));
  return sml_weights_from(qs);
}

namespace {

std::size_t first_max(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

EnsembleOutput ensemble_predict(const Matrix& probs, const SmlWeights* weights, EnsembleMode mode) {
  const std::size_t m_count = probs.rows, k_count = probs.cols;
  if (m_count == 0 || k_count == 0) throw ShapeError("ensemble_predict: empty probability block");
  const bool sml = mode == EnsembleMode::sml_soft || mode == EnsembleMode::sml_hard;
  if (sml) {
    if (!weights || !weights->valid) throw StateError("ensemble_predict: SML mode without valid weights");
    if (weights->per_class.size() != k_count) throw ShapeError("ensemble_predict: weights/classes mismatch");
    for (const auto& v : weights->per_class)
      if (v.size() != m_count) throw ShapeError("ensemble_predict: weights/members mismatch");
  }

  EnsembleOutput out;
  out.scores.assign(k_count, 0.0);
  for (std::size_t m = 0; m < m_count; ++m) {
    const auto p = probs.row(m);
    const bool hard = mode == EnsembleMode::vote || mode == EnsembleMode::sml_hard;
    const std::size_t top = hard ? first_max(p) : 0;
    for (std::size_t k = 0; k < k_count; ++k) {
      const double x = hard ? (k == top ? 1.0 : 0.0) : p[k];
      const double w = sml ? weights->per_class[k][m] : 1.0 / static_cast<double>(m_count);
      out.scores[k] += x * w;
    }
  }
  out.label = first_max(out.scores);
  return out;
}

}  // namespace ttime
