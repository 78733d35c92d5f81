#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttime/matcore.hpp"

namespace ttime {

enum class EnsembleMode { sml_soft, sml_hard, average, vote };

std::string to_string(EnsembleMode m);
EnsembleMode parse_ensemble_mode(const std::string& s);

/// Per-trial probability vectors of all M members, with running per-(k, m)
/// means and per-class co-moment matrices maintained online (Welford), so
/// the class-k covariance of member outputs is available in O(M^2) per trial.
class PredictionHistory {
 public:
  PredictionHistory(std::size_t members, std::size_t classes, bool keep_rows = true);

  /// probs is M x K, one probability vector per member. Throws ShapeError.
  void record(const Matrix& probs);

  std::size_t count() const { return count_; }
  std::size_t members() const { return members_; }
  std::size_t classes() const { return classes_; }

  /// Running mean of member m's class-k probability.
  double mean(std::size_t k, std::size_t m) const { return means_[k][m]; }

  /// Recorded class-k probabilities as an a x M matrix (requires keep_rows).
  Matrix class_matrix(std::size_t k) const;

  /// Q_k = (1/(a-1)) sum_i (F_k(i) - mean)(F_k(i) - mean)^T.
  /// Throws StateError for a < 2.
  SymMatrix covariance(std::size_t k) const;

  void reset();

 private:
  std::size_t members_;
  std::size_t classes_;
  bool keep_rows_;
  std::size_t count_ = 0;
  std::vector<double> rows_;  // a x M x K
  std::vector<std::vector<double>> means_;
  std::vector<SymMatrix> comoments_;
};

/// Two-pass sample covariance of the columns of an a x M matrix.
SymMatrix sample_covariance(const Matrix& columns);

struct SmlWeights {
  std::vector<std::vector<double>> per_class;  // K unit vectors of length M
  bool valid = false;
};

/// Principal eigenvector of every class covariance. Invalid (not an error)
/// when a <= M, when a power iteration fails to converge, or when a vector
/// has zero total mass.
SmlWeights sml_weights(const PredictionHistory& history);
SmlWeights sml_weights_from(std::span<const SymMatrix> class_covariances);

struct EnsembleOutput {
  std::size_t label = 0;
  std::vector<double> scores;  // combined per-class score
};

/// Combines an M x K block of member probabilities. Ties resolve to the
/// lowest class index. sml-* modes throw StateError without valid weights.
EnsembleOutput ensemble_predict(const Matrix& probs, const SmlWeights* weights, EnsembleMode mode);

}  // namespace ttime
