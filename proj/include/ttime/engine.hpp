#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "ttime/alignment.hpp"
#include "ttime/classifier.hpp"
#include "ttime/ensemble.hpp"
#include "ttime/parallel.hpp"
#include "ttime/ttaloss.hpp"

namespace ttime {

struct TtaConfig {
  std::size_t M = 5;
  std::size_t B = 8;
  double temperature = 2.0;
  double tau = 0.7;
  int c = 4;
  double lr = 1e-3;
  EnsembleMode ensemble_mode = EnsembleMode::sml_soft;
  std::size_t sml_recompute_interval = 1;
  bool exact_sml = false;

  // Ablation toggles. adapt is the master switch; with it off the models
  // stay frozen at their source weights.
  bool adapt = true;
  bool use_cem = true;
  bool use_mdr = true;
  bool use_temperature = true;
  bool recalibrate = true;

  std::uint64_t seed = 0;

  Featurizer featurizer = Featurizer::log_variance;
  Arch arch = Arch::mlp;
  std::size_t hidden_dim = 32;
  int source_epochs = 100;
  std::size_t source_batch_size = 32;
  double source_lr = 1e-3;

  Exec exec = Exec::parallel;

  TtaLossOptions loss_options() const;
  bool updates_active() const { return adapt && (use_cem || use_mdr); }
  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

/// Per-trial instrumentation record, emitted after prediction and before any
/// update triggered by the same trial.
struct TrialRecord {
  std::size_t a = 0;
  std::size_t label = 0;
  std::vector<double> scores;
  Matrix member_probs;  // M x K, prediction-time
  bool used_sml = false;
  double align_ms = 0.0;  // stages of the pre-inference path
  double score_ms = 0.0;
  double ensemble_ms = 0.0;
  double pre_inference_ms = 0.0;
  double post_inference_ms = 0.0;  // filled in once the update finishes
};

/// Derives the per-member seed from the run seed.
std::uint64_t member_seed(std::uint64_t seed, std::size_t member);

/// Aligns every subject on its own, pools, and trains M members with
/// distinct seeds. Throws LabelError / ShapeError on bad input.
std::vector<Model> train_source_ensemble(const std::vector<TrialBatch>& subjects, const TtaConfig& config);

/// Pools per-subject aligned trials, keeping labels and order.
TrialBatch pool_aligned(const std::vector<TrialBatch>& subjects, Exec exec = Exec::serial);

/// Streaming test-time adaptation over one target stream: incremental
/// alignment, ensemble prediction, then sliding-window updates of every
/// member.
class Engine {
 public:
  Engine(std::vector<Model> models, TtaConfig config);

  static Engine init(const std::vector<TrialBatch>& source_subjects, const TtaConfig& config);

  /// Processes one arrival. Prediction always completes before updates start.
  TrialRecord process_trial(const Trial& x);

  /// Clears alignment, prediction history, SML weights and the window.
  /// Models and optimizer states persist.
  void reset_session();

  /// Called with each record right after the prediction is formed.
  void set_prediction_hook(std::function<void(const TrialRecord&)> hook) { hook_ = std::move(hook); }

  TtaConfig& config() { return config_; }
  const TtaConfig& config() const { return config_; }
  const std::vector<Model>& models() const { return models_; }
  const std::vector<AdamState>& optimizers() const { return adam_; }
  const RunningCovariance& running_covariance() const { return running_cov_; }
  const PredictionHistory& history() const { return history_; }
  const SmlWeights& weights() const { return weights_; }
  std::size_t trial_index() const { return a_; }
  std::size_t update_failures() const { return update_failures_; }

 private:
  SmlWeights compute_weights() const;
  void update_members(const Trial& aligned_newest);

  TtaConfig config_;
  std::vector<Model> models_;
  std::vector<AdamState> adam_;
  RunningCovariance running_cov_;
  PredictionHistory history_;
  SmlWeights weights_;
  std::deque<Trial> window_;       // raw trials, newest last
  std::vector<Trial> raw_history_;  // only with exact_sml
  std::size_t a_ = 0;
  std::size_t since_weights_ = 0;
  std::size_t update_failures_ = 0;
  std::function<void(const TrialRecord&)> hook_;
};

enum class SessionMode { source, tta1, tta2, tta1_2 };
std::string to_string(SessionMode m);
SessionMode parse_session_mode(const std::string& s);

struct TimingSummary {
  double mean_pre_ms = 0.0;
  double worst_pre_ms = 0.0;
  double mean_post_ms = 0.0;
  double worst_post_ms = 0.0;
};

struct SessionResult {
  std::vector<int> predictions;
  std::vector<std::vector<double>> scores;
  std::vector<int> truth;  // empty for unlabeled streams
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double auc = 0.0;  // NaN unless binary with both classes present
  TimingSummary timing;
  std::vector<TrialRecord> records;
};

/// Runs one target session from a copy of `engine`:
///   source  frozen models, predictions only
///   tta1    adapt over prior_session, then freeze and predict on stream
///   tta2    adapt and predict on stream
///   tta1+2  adapt over prior_session, keep adapting on stream
/// Each session starts with fresh alignment statistics. tta1 / tta1+2
/// without a prior session throw ConfigError.
SessionResult run_session(Engine engine, const TrialBatch& stream, SessionMode mode,
                          const TrialBatch* prior_session = nullptr);

/// Metrics and timing for already collected records.
SessionResult summarize(std::vector<TrialRecord> records, const TrialBatch& stream);

}  // namespace ttime
