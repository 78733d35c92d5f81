#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ttime/alignment.hpp"

namespace ttime {

/// Synthetic multi-subject trial generator.
///
/// Trial of subject s, session e, class y:
///   X = A_{s,e} (Lambda_{s,y}^{1/2} W) + noise * N
/// with W white Gaussian latent activity (ch x ts), Lambda a diagonal latent
/// variance profile in which latent source y is boosted by class_effect (scaled
/// per subject and class by exp(effect_spread * N)), and
/// A_{s,e} = diag(gain_s) (A0 + subject_shift * G_s) [+ session_drift * G_{s,e}]
/// the subject/session-specific spatial mixing around a shared A0.
struct SynthSpec {
  std::size_t n_subjects = 8;
  std::size_t trials_per_subject = 150;
  std::size_t n_sessions = 1;
  std::size_t ch = 8;
  std::size_t ts = 128;
  std::size_t K = 2;
  double class_effect = 1.0;     // relative variance boost of the class source
  double effect_spread = 0.4;    // log-sd of per-subject, per-class effect scale
  double subject_shift = 2.0;    // spread of per-subject mixing around A0
  double profile_spread = 0.3;   // log-sd of per-subject latent variances
  double gain_spread = 0.3;      // log-sd of per-channel gains
  double trial_jitter = 0.0;     // log-sd of per-trial amplitude
  double noise = 0.3;            // sensor noise sd relative to unit latent sd
  double session_drift = 0.0;    // extra mixing perturbation per session
  double imbalance_ratio = 1.0;  // class 0 : every other class, target only
  std::uint64_t seed = 0;

  /// Throws ConfigError for zero counts, K > ch, ts < 2 or ratio < 1.
  void validate() const;
};

struct SynthSubject {
  std::string id;
  std::vector<TrialBatch> sessions;         // balanced labels
  std::vector<TrialBatch> target_sessions;  // imbalanced draw; empty when ratio == 1

  const TrialBatch& target_session(std::size_t e) const {
    return target_sessions.empty() ? sessions.at(e) : target_sessions.at(e);
  }
};

struct SynthDataset {
  SynthSpec spec;
  std::vector<SynthSubject> subjects;
};

/// Fully determined by spec (seed included).
SynthDataset synth_generate(const SynthSpec& spec);

/// Per-class counts for n trials: class 0 weighted by ratio, the rest by 1,
/// remainders to the lowest indices.
std::vector<std::size_t> class_counts(std::size_t n, std::size_t classes, double ratio);

}  // namespace ttime
