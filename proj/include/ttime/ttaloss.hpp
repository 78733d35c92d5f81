#pragma once

#include <span>
#include <vector>

#include "ttime/classifier.hpp"

namespace ttime {

/// Knobs of the adaptation loss. The enable flags are the ablation toggles;
/// with use_temperature off the losses run at T = 1, and with recalibrate off
/// the class counts are forced to zero so the regularizer reduces to the
/// plain diversity term sum_k pbar_k ln pbar_k.
struct TtaLossOptions {
  double temperature = 2.0;
  double tau = 0.7;
  int c = 4;
  bool use_cem = true;
  bool use_mdr = true;
  bool use_temperature = true;
  bool recalibrate = true;

  double effective_temperature() const { return use_temperature ? temperature : 1.0; }
  /// Throws ConfigError for T <= 0, tau outside [0.5, 1), or c < 1.
  void validate() const;
};

struct BatchStats {
  std::vector<double> p_bar;
  std::vector<int> z;
  std::vector<double> q;
  std::vector<double> q_hat;
};

// Logit-level terms. `logits` is B x K; dlogits (if non-null) receives the
// gradient of the returned value with respect to every logit.

/// -(1/B) sum_i sum_k p_ik ln p_ik with p_i = softmax(l_i / T).
double cem_from_logits(const FeatureMatrix& logits, double temperature, FeatureMatrix* dlogits = nullptr);

/// Confident pseudo-label counts at T = 1. A trial counts toward its argmax
/// class (lowest index on ties) when that probability is >= tau, so each
/// trial contributes to at most one class. Throws ConfigError unless
/// tau in [0.5, 1).
std::vector<int> class_frequency_from_logits(const FeatureMatrix& logits, double tau);

/// sum_k qhat_k ln qhat_k, where qhat normalizes pbar_k / (c + z_k) and pbar
/// is the temperature-scaled batch mean. z is a constant: no gradient flows
/// through the counting.
double mdr_from_logits(const FeatureMatrix& logits, std::span<const int> z, int c, double temperature,
                       FeatureMatrix* dlogits = nullptr, BatchStats* stats = nullptr);

/// sum_k p ln p with 0 ln 0 = 0.
double neg_entropy(std::span<const double> p);

// Model-level wrappers over a window of feature vectors.
double cem_loss(const Model& model, const FeatureMatrix& window, double temperature);
std::vector<int> class_frequency(const Model& model, const FeatureMatrix& window, double tau);
double mdr_loss(const Model& model, const FeatureMatrix& window, std::span<const int> z, int c,
                double temperature);

enum class LossKind { cross_entropy, cem, mdr, cem_mdr };

/// Scalar loss of the given kind and, if grad is non-null, its exact
/// reverse-mode gradient with respect to every entry of model.theta.
/// `labels` is only read for cross_entropy. For the TTA kinds the toggles in
/// opts.use_cem / use_mdr are ignored; the kind decides the terms.
double loss_and_grad(const Model& model, LossKind kind, const FeatureMatrix& features,
                     std::span<const int> labels, const TtaLossOptions& opts,
                     std::vector<double>* grad = nullptr);

struct UpdateResult {
  BatchStats stats;
  double loss = 0.0;
  bool applied = false;  // false when the loss or gradient was non-finite
};

/// One Adam step on L = CEM + MDR (as toggled by opts) over the window.
/// A non-finite loss or gradient leaves model and optimizer untouched.
UpdateResult ttime_update_step(Model& model, AdamState& adam, const FeatureMatrix& window,
                               const TtaLossOptions& opts);

}  // namespace ttime
