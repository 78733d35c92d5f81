#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttime/matcore.hpp"
#include "ttime/parallel.hpp"

namespace ttime {

/// One multi-channel trial, ch x ts, row-major (channel-major, time-minor).
class Trial {
 public:
  Trial(std::size_t ch, std::size_t ts);
  Trial(std::size_t ch, std::size_t ts, std::vector<double> data);

  std::size_t channels() const { return ch_; }
  std::size_t samples() const { return ts_; }
  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(data_).subspan(c * ts_, ts_);
  }
  double& at(std::size_t c, std::size_t t) { return data_[c * ts_ + t]; }
  double at(std::size_t c, std::size_t t) const { return data_[c * ts_ + t]; }

  /// X X^T, computed on the upper triangle and mirrored.
  SymMatrix outer() const;

  Trial& operator*=(double s);

 private:
  std::size_t ch_;
  std::size_t ts_;
  std::vector<double> data_;
};

struct TrialBatch {
  std::vector<Trial> trials;
  std::optional<std::vector<int>> labels;
  std::string subject_id;

  std::size_t size() const { return trials.size(); }
  bool empty() const { return trials.empty(); }
  bool labeled() const { return labels.has_value(); }

  /// Throws ShapeError on mixed (ch, ts) or label-count mismatch.
  void validate() const;
};

/// W x for a ch x ch whitener W.
Trial apply_whitener(const SymMatrix& w, const Trial& x);

/// (1/n) sum_i X_i X_i^T. Throws EmptyInputError on an empty batch.
SymMatrix mean_covariance(const TrialBatch& batch);

/// Euclidean alignment: every trial replaced by R^{-1/2} X_i where R is the
/// batch mean covariance. floor <= 0 selects relative_floor(R).
TrialBatch align_offline(const TrialBatch& batch, double floor = 0.0, Exec exec = Exec::serial);

/// Incremental alignment state: running sum of X X^T over the target stream
/// plus a lazily recomputed whitener for the current mean.
class RunningCovariance {
 public:
  RunningCovariance() = default;
  explicit RunningCovariance(double floor) : floor_(floor) {}

  /// Adds x x^T. Throws ShapeError if x's dims differ from earlier trials.
  void update(const Trial& x);

  /// (R_a)^{-1/2} x with R_a = sum / count. Throws StateError when empty.
  Trial transform(const Trial& x) const;

  const SymMatrix& whitener() const;
  SymMatrix mean() const;
  std::size_t count() const { return count_; }
  std::size_t channels() const { return sum_ ? sum_->dim() : 0; }
  const std::optional<SymMatrix>& sum() const { return sum_; }
  void reset();

 private:
  std::optional<SymMatrix> sum_;
  std::size_t count_ = 0;
  std::size_t samples_ = 0;
  double floor_ = 0.0;
  mutable std::optional<SymMatrix> whitener_;
};

}  // namespace ttime
