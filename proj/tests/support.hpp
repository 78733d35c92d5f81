#pragma once

// Glue between library types and the plain-vector oracles.

#include <random>

#include "oracles.hpp"
#include "ttime/alignment.hpp"
#include "ttime/classifier.hpp"
#include "ttime/matcore.hpp"

namespace support {

inline ttime::SymMatrix to_sym(const oracle::Mat& m) {
  return ttime::SymMatrix::from_entries(m.size(), oracle::flatten(m));
}

inline oracle::Mat to_mat(const ttime::SymMatrix& s) {
  oracle::Mat m = oracle::zeros(s.dim(), s.dim());
  for (std::size_t i = 0; i < s.dim(); ++i)
    for (std::size_t j = 0; j < s.dim(); ++j) m[i][j] = s(i, j);
  return m;
}

inline oracle::Mat to_mat(const ttime::Trial& t) {
  oracle::Mat m = oracle::zeros(t.channels(), t.samples());
  for (std::size_t c = 0; c < t.channels(); ++c)
    for (std::size_t i = 0; i < t.samples(); ++i) m[c][i] = t.at(c, i);
  return m;
}

inline ttime::Trial random_trial(std::size_t ch, std::size_t ts, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  ttime::Trial t(ch, ts);
  for (double& v : t.data()) v = g(rng);
  return t;
}

inline ttime::TrialBatch random_batch(std::size_t n, std::size_t ch, std::size_t ts, std::mt19937_64& rng) {
  ttime::TrialBatch b;
  for (std::size_t i = 0; i < n; ++i) b.trials.push_back(random_trial(ch, ts, rng));
  return b;
}

inline ttime::FeatureMatrix random_features(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  ttime::FeatureMatrix f(n, d);
  for (double& v : f.data) v = g(rng);
  return f;
}

}  // namespace support
