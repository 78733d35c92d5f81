#include "ttime/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "ttime/engine.hpp"
#include "ttime/errors.hpp"

namespace ttime {

void SynthSpec::validate() const {
  if (n_subjects < 1 || trials_per_subject < 1 || n_sessions < 1 || ch < 1 || K < 2)
    throw ConfigError("synth: counts must be >= 1 and K >= 2");
  if (ts < 2) throw ConfigError("synth: ts must be >= 2");
  if (K > ch) throw ConfigError("synth: K must not exceed ch");
  if (!(imbalance_ratio >= 1.0)) throw ConfigError("synth: imbalance_ratio must be >= 1");
  if (noise < 0.0 || class_effect < 0.0 || effect_spread < 0.0 || subject_shift < 0.0 || session_drift < 0.0)
    throw ConfigError("synth: magnitudes must be non-negative");
}

std::vector<std::size_t> class_counts(std::size_t n, std::size_t classes, double ratio) {
  const double total = ratio + static_cast<double>(classes - 1);
  std::vector<std::size_t> counts(classes);
  std::size_t used = 0;
  for (std::size_t k = 0; k < classes; ++k) {
    const double share = (k == 0 ? ratio : 1.0) / total;
    counts[k] = static_cast<std::size_t>(std::floor(share * static_cast<double>(n) + 1e-9));
    used += counts[k];
  }
  for (std::size_t k = 0; used < n; k = (k + 1) % classes, ++used) ++counts[k];
  return counts;
}

namespace {

using Rng = std::mt19937_64;

std::vector<double> gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double sd) {
  std::normal_distribution<double> nd(0.0, sd);
  std::vector<double> m(rows * cols);
  for (double& v : m) v = nd(rng);
  return m;
}

TrialBatch draw_session(const SynthSpec& spec, const std::vector<double>& mixing,
                        const std::vector<double>& variance, const std::vector<double>& effect,
                        std::vector<int> labels, Rng& rng,
                        const std::string& id) {
  std::shuffle(labels.begin(), labels.end(), rng);
  std::normal_distribution<double> nd(0.0, 1.0);
  TrialBatch batch;
  batch.subject_id = id;
  batch.trials.reserve(labels.size());
  const std::size_t ch = spec.ch, ts = spec.ts;
  std::vector<double> latent(ch * ts);
  for (int y : labels) {
    const double amp = std::exp(spec.trial_jitter * nd(rng));
    for (std::size_t j = 0; j < ch; ++j) {
      double var = variance[j];
      if (j == static_cast<std::size_t>(y)) var *= 1.0 + effect[j];
      const double sd = amp * std::sqrt(var);
      for (std::size_t t = 0; t < ts; ++t) latent[j * ts + t] = sd * nd(rng);
    }
    Trial x(ch, ts);
    matmul(mixing, latent, x.data(), ch, ch, ts);
    for (double& v : x.data()) v += spec.noise * nd(rng);
    batch.trials.push_back(std::move(x));
  }
  batch.labels = std::move(labels);
  return batch;
}

std::vector<int> labels_from_counts(const std::vector<std::size_t>& counts) {
  std::vector<int> labels;
  for (std::size_t k = 0; k < counts.size(); ++k) labels.insert(labels.end(), counts[k], static_cast<int>(k));
  return labels;
}

}  // namespace

SynthDataset synth_generate(const SynthSpec& spec) {
  spec.validate();
  SynthDataset ds;
  ds.spec = spec;
  const std::size_t ch = spec.ch;

  Rng shared(member_seed(spec.seed, 0xA0));
  // A0: identity plus a moderate random mix, well conditioned.
  std::vector<double> a0 = gaussian_matrix(shared, ch, ch, 0.5 / std::sqrt(static_cast<double>(ch)));
  for (std::size_t i = 0; i < ch; ++i) a0[i * ch + i] += 1.0;

  const auto balanced = labels_from_counts(class_counts(spec.trials_per_subject, spec.K, 1.0));
  const auto skewed = labels_from_counts(class_counts(spec.trials_per_subject, spec.K, spec.imbalance_ratio));

  for (std::size_t s = 0; s < spec.n_subjects; ++s) {
    Rng rng(member_seed(spec.seed, 1000 + s));
    std::normal_distribution<double> nd(0.0, 1.0);
    SynthSubject subj;
    char buf[32];
    std::snprintf(buf, sizeof buf, "S%02zu", s);
    subj.id = buf;

    auto mixing = gaussian_matrix(rng, ch, ch, spec.subject_shift / std::sqrt(static_cast<double>(ch)));
    for (std::size_t i = 0; i < ch * ch; ++i) mixing[i] += a0[i];
    for (std::size_t i = 0; i < ch; ++i) {
      const double g = std::exp(spec.gain_spread * nd(rng));
      for (std::size_t j = 0; j < ch; ++j) mixing[i * ch + j] *= g;
    }
    std::vector<double> variance(ch);
    for (double& v : variance) v = std::exp(spec.profile_spread * nd(rng));
    std::vector<double> effect(spec.K, spec.class_effect);
    if (spec.effect_spread > 0.0)
      for (double& v : effect) v *= std::exp(spec.effect_spread * nd(rng));

    for (std::size_t e = 0; e < spec.n_sessions; ++e) {
      auto session_mixing = mixing;
      if (e > 0 && spec.session_drift > 0.0) {
        const auto drift = gaussian_matrix(rng, ch, ch, spec.session_drift / std::sqrt(static_cast<double>(ch)));
        for (std::size_t i = 0; i < ch * ch; ++i) session_mixing[i] += drift[i];
      }
      subj.sessions.push_back(draw_session(spec, session_mixing, variance, effect, balanced, rng, subj.id));
      if (spec.imbalance_ratio > 1.0)
        subj.target_sessions.push_back(draw_session(spec, session_mixing, variance, effect, skewed, rng, subj.id));
    }
    ds.subjects.push_back(std::move(subj));
  }
  return ds;
}

}  // namespace ttime
