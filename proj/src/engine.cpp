#include "ttime/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "ttime/errors.hpp"
#include "ttime/metrics.hpp"

namespace ttime {

TtaLossOptions TtaConfig::loss_options() const {
  TtaLossOptions o;
  o.temperature = temperature;
  o.tau = tau;
  o.c = c;
  o.use_cem = use_cem;
  o.use_mdr = use_mdr;
  o.use_temperature = use_temperature;
  o.recalibrate = recalibrate;
  return o;
}

void TtaConfig::validate() const {
  if (M < 1) throw ConfigError("M must be >= 1");
  if (B < 1) throw ConfigError("B must be >= 1");
  if (sml_recompute_interval < 1) throw ConfigError("sml_recompute_interval must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (arch == Arch::mlp && hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
  if (source_epochs < 0) throw ConfigError("source_epochs must be >= 0");
  loss_options().validate();
}

std::uint64_t member_seed(std::uint64_t seed, std::size_t member) {
  // splitmix64 finalizer over (seed, member)
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + (member + 1) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

TrialBatch pool_aligned(const std::vector<TrialBatch>& subjects, Exec exec) {
  if (subjects.empty()) throw EmptyInputError("pool_aligned: no source subjects");
  TrialBatch pooled;
  pooled.labels = std::vector<int>{};
  pooled.subject_id = "pooled";
  for (const auto& s : subjects) {
    if (!s.labeled()) throw LabelError("source subject " + s.subject_id + " is unlabeled");
    s.validate();
    const TrialBatch aligned = align_offline(s, 0.0, exec);
    for (std::size_t i = 0; i < aligned.size(); ++i) {
      const Trial& t = aligned.trials[i];
      if (!pooled.trials.empty() && (t.channels() != pooled.trials.front().channels() ||
                                     t.samples() != pooled.trials.front().samples()))
        throw ShapeError("source subjects disagree on (ch, ts)");
      pooled.trials.push_back(t);
      pooled.labels->push_back((*aligned.labels)[i]);
    }
  }
  return pooled;
}

std::vector<Model> train_source_ensemble(const std::vector<TrialBatch>& subjects, const TtaConfig& config) {
  config.validate();
  const TrialBatch pooled = pool_aligned(subjects, config.exec);
  const int max_label = *std::max_element(pooled.labels->begin(), pooled.labels->end());
  const FeatureMatrix features = featurize_all(pooled.trials, config.featurizer);

  ModelSpec spec;
  spec.featurizer = config.featurizer;
  spec.arch = config.arch;
  spec.input_dim = features.cols;
  spec.hidden_dim = config.hidden_dim;
  spec.classes = static_cast<std::size_t>(std::max(max_label + 1, 2));

  std::vector<Model> models(config.M);
  for_each_index(config.exec, config.M, [&](std::size_t m) {
    const std::uint64_t s = member_seed(config.seed, m);
    Model model = make_model(spec, s);
    TrainOptions opts;
    opts.epochs = config.source_epochs;
    opts.batch_size = config.source_batch_size;
    opts.lr = config.source_lr;
    opts.seed = s ^ 0x5DEECE66DULL;
    train_source(model, features, *pooled.labels, opts);
    models[m] = std::move(model);
  });
  return models;
}

Engine::Engine(std::vector<Model> models, TtaConfig config)
    : config_(std::move(config)),
      models_(std::move(models)),
      history_(std::max<std::size_t>(models_.size(), 1),
               models_.empty() ? 2 : models_.front().spec.classes, config_.exact_sml) {
  if (models_.empty()) throw ConfigError("Engine: no models");
  config_.M = models_.size();
  config_.validate();
  for (const auto& m : models_)
    if (m.spec != models_.front().spec) throw ShapeError("Engine: ensemble members disagree on shape");
  for (const auto& m : models_) adam_.emplace_back(m.theta.size(), config_.lr);
}

Engine Engine::init(const std::vector<TrialBatch>& source_subjects, const TtaConfig& config) {
  return Engine(train_source_ensemble(source_subjects, config), config);
}

void Engine::reset_session() {
  running_cov_.reset();
  history_.reset();
  weights_ = SmlWeights{};
  window_.clear();
  raw_history_.clear();
  a_ = 0;
  since_weights_ = 0;
}

SmlWeights Engine::compute_weights() const {
  if (!config_.exact_sml) return sml_weights(history_);
  if (a_ <= models_.size()) return SmlWeights{};
  // Re-align every seen trial with the current whitener and re-score with the
  // current members, then recompute the class covariances from scratch.
  const std::size_t k_count = models_.front().spec.classes;
  std::vector<Matrix> columns(k_count, Matrix(raw_history_.size(), models_.size()));
  for (std::size_t i = 0; i < raw_history_.size(); ++i) {
    const auto f = featurize(running_cov_.transform(raw_history_[i]), config_.featurizer);
    for (std::size_t m = 0; m < models_.size(); ++m) {
      const auto p = softmax_t(forward(models_[m], f), 1.0);
      for (std::size_t k = 0; k < k_count; ++k) columns[k](i, m) = p[k];
    }
  }
  std::vector<SymMatrix> qs;
  for (const auto& c : columns) qs.push_back(sample_covariance(c));
  return sml_weights_from(qs);
}

TrialRecord Engine::process_trial(const Trial& x) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  if (running_cov_.count() > 0 && x.channels() != running_cov_.channels())
    throw ShapeError("process_trial: channel count differs from stream");
  if (x.channels() != 0 && feature_dim(config_.featurizer, x.channels()) != models_.front().spec.input_dim)
    throw ShapeError("process_trial: trial does not match model input");

  running_cov_.update(x);
  ++a_;
  const Trial aligned = running_cov_.transform(x);
  const auto t_align = clock::now();
  const auto f = featurize(aligned, config_.featurizer);

  const std::size_t k_count = models_.front().spec.classes;
  TrialRecord rec;
  rec.a = a_;
  rec.member_probs = Matrix(models_.size(), k_count);
  for (std::size_t m = 0; m < models_.size(); ++m) {
    const auto p = softmax_t(forward(models_[m], f), 1.0);
    std::copy(p.begin(), p.end(), rec.member_probs.row(m).begin());
  }
  history_.record(rec.member_probs);
  if (config_.exact_sml) raw_history_.push_back(x);
  const auto t_score = clock::now();

  const bool sml_mode =
      config_.ensemble_mode == EnsembleMode::sml_soft || config_.ensemble_mode == EnsembleMode::sml_hard;
  EnsembleMode mode = EnsembleMode::average;
  if (a_ > models_.size()) {
    if (sml_mode) {
      if (!weights_.valid || since_weights_ + 1 >= config_.sml_recompute_interval) {
        weights_ = compute_weights();
        since_weights_ = 0;
      } else {
        ++since_weights_;
      }
      if (weights_.valid) mode = config_.ensemble_mode;
    } else {
      mode = config_.ensemble_mode;
    }
  }
  const EnsembleOutput out = ensemble_predict(rec.member_probs, &weights_, mode);
  rec.label = out.label;
  rec.scores = out.scores;
  rec.used_sml = mode == EnsembleMode::sml_soft || mode == EnsembleMode::sml_hard;
  const auto t1 = clock::now();
  using ms = std::chrono::duration<double, std::milli>;
  rec.align_ms = ms(t_align - t0).count();
  rec.score_ms = ms(t_score - t_align).count();
  rec.ensemble_ms = ms(t1 - t_score).count();
  rec.pre_inference_ms = ms(t1 - t0).count();
  if (hook_) hook_(rec);

  window_.push_back(x);
  while (window_.size() > config_.B) window_.pop_front();
  if (a_ >= config_.B && config_.updates_active()) update_members(aligned);
  rec.post_inference_ms = ms(clock::now() - t1).count();
  return rec;
}

void Engine::update_members(const Trial& aligned_newest) {
  // Every window trial is re-aligned with the newest whitener.
  const std::size_t b = window_.size();
  FeatureMatrix window(b, models_.front().spec.input_dim);
  for (std::size_t i = 0; i < b; ++i) {
    const auto f = i + 1 == b ? featurize(aligned_newest, config_.featurizer)
                              : featurize(running_cov_.transform(window_[i]), config_.featurizer);
    std::copy(f.begin(), f.end(), window.row(i).begin());
  }
  const TtaLossOptions opts = config_.loss_options();
  std::vector<char> applied(models_.size(), 1);
  for_each_index(config_.exec, models_.size(), [&](std::size_t m) {
    applied[m] = ttime_update_step(models_[m], adam_[m], window, opts).applied ? 1 : 0;
  });
  update_failures_ += static_cast<std::size_t>(std::count(applied.begin(), applied.end(), 0));
}

std::string to_string(SessionMode m) {
  switch (m) {
    case SessionMode::source: return "source";
    case SessionMode::tta1: return "tta1";
    case SessionMode::tta2: return "tta2";
    case SessionMode::tta1_2: return "tta1+2";
  }
  return "?";
}

SessionMode parse_session_mode(const std::string& s) {
  if (s == "source") return SessionMode::source;
  if (s == "tta1") return SessionMode::tta1;
  if (s == "tta2") return SessionMode::tta2;
  if (s == "tta1+2") return SessionMode::tta1_2;
  throw ConfigError("unknown session mode: " + s);
}

SessionResult summarize(std::vector<TrialRecord> records, const TrialBatch& stream) {
  SessionResult r;
  for (const auto& rec : records) {
    r.predictions.push_back(static_cast<int>(rec.label));
    r.scores.push_back(rec.scores);
  }
  r.auc = std::numeric_limits<double>::quiet_NaN();
  if (stream.labeled() && !records.empty()) {
    r.truth = *stream.labels;
    r.accuracy = accuracy(r.predictions, r.truth);
    r.balanced_accuracy = balanced_accuracy(r.predictions, r.truth);
    const bool binary = std::all_of(r.truth.begin(), r.truth.end(), [](int y) { return y == 0 || y == 1; }) &&
                        !r.scores.empty() && r.scores.front().size() == 2;
    const bool both = std::count(r.truth.begin(), r.truth.end(), 1) > 0 &&
                      std::count(r.truth.begin(), r.truth.end(), 0) > 0;
    if (binary && both) {
      std::vector<double> pos(r.scores.size());
      for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = r.scores[i][1] - r.scores[i][0];
      r.auc = auc(pos, r.truth);
    }
  }
  if (!records.empty()) {
    for (const auto& rec : records) {
      r.timing.mean_pre_ms += rec.pre_inference_ms;
      r.timing.mean_post_ms += rec.post_inference_ms;
      r.timing.worst_pre_ms = std::max(r.timing.worst_pre_ms, rec.pre_inference_ms);
      r.timing.worst_post_ms = std::max(r.timing.worst_post_ms, rec.post_inference_ms);
    }
    r.timing.mean_pre_ms /= static_cast<double>(records.size());
    r.timing.mean_post_ms /= static_cast<double>(records.size());
  }
  r.records = std::move(records);
  return r;
}

SessionResult run_session(Engine engine, const TrialBatch& stream, SessionMode mode,
                          const TrialBatch* prior_session) {
  const bool needs_prior = mode == SessionMode::tta1 || mode == SessionMode::tta1_2;
  if (needs_prior && (prior_session == nullptr || prior_session->empty()))
    throw ConfigError("session mode " + to_string(mode) + " needs a prior session");
  stream.validate();

  const bool adapt_requested = engine.config().adapt;
  if (needs_prior) {
    engine.reset_session();
    for (const auto& x : prior_session->trials) engine.process_trial(x);
  }
  engine.reset_session();
  engine.config().adapt = adapt_requested && (mode == SessionMode::tta2 || mode == SessionMode::tta1_2);

  std::vector<TrialRecord> records;
  records.reserve(stream.size());
  for (const auto& x : stream.trials) records.push_back(engine.process_trial(x));
  return summarize(std::move(records), stream);
}

}  // namespace ttime
