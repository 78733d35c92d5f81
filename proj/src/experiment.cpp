#include "ttime/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "ttime/errors.hpp"

namespace ttime {

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(v.size());
}

// Sample standard deviation; 0 for a single value.
double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

ExperimentRow to_row(const std::string& subject, std::size_t repeat, const std::string& mode,
                     const SessionResult& r, bool timing) {
  ExperimentRow row;
  row.subject = subject;
  row.repeat = std::to_string(repeat);
  row.mode = mode;
  row.accuracy = r.accuracy;
  row.balanced_accuracy = r.balanced_accuracy;
  row.auc = r.auc;
  if (timing) row.timing = r.timing;
  return row;
}

}  // namespace

std::vector<TrialBatch> source_pool(const SynthDataset& data, std::size_t target, std::size_t session) {
  const std::string& target_id = data.subjects.at(target).id;
  std::vector<TrialBatch> pool;
  for (std::size_t s = 0; s < data.subjects.size(); ++s) {
    if (s == target) continue;
    pool.push_back(data.subjects[s].sessions.at(session));
  }
  for (const auto& b : pool)
    if (b.subject_id == target_id) throw StateError("source pool leaks target subject " + target_id);
  return pool;
}

ResultTable loso_run(const SynthDataset& data, const std::vector<Variant>& variants, const LosoOptions& opts) {
  if (data.subjects.size() < 2) throw ConfigError("LOSO needs at least 2 subjects");
  if (variants.empty()) throw ConfigError("LOSO needs at least one variant");

  std::size_t max_m = 0;
  const Variant* reference = nullptr;
  for (const auto& v : variants) {
    if (v.not_applicable) continue;
    v.config.validate();
    if (v.config.M > max_m) {
      max_m = v.config.M;
      reference = &v;
    }
  }

  ResultTable table;
  for (std::size_t r = 0; r < opts.repeats; ++r) {
    for (std::size_t t = 0; t < data.subjects.size(); ++t) {
      const SynthSubject& target = data.subjects[t];
      std::vector<Model> members;
      if (reference) {
        TtaConfig train_cfg = reference->config;
        train_cfg.M = max_m;
        train_cfg.seed = opts.seed + r;
        members = train_source_ensemble(source_pool(data, t, opts.source_session), train_cfg);
      }
      const TrialBatch& stream =
          opts.imbalanced_target ? target.target_session(opts.target_session) : target.sessions.at(opts.target_session);
      const TrialBatch& prior = opts.imbalanced_target ? target.target_session(opts.prior_session)
                                                       : target.sessions.at(opts.prior_session);
      for (const auto& v : variants) {
        if (v.not_applicable) {
          ExperimentRow row;
          row.subject = target.id;
          row.repeat = std::to_string(r);
          row.mode = v.label;
          row.not_applicable = true;
          table.runs.push_back(row);
          continue;
        }
        TtaConfig cfg = v.config;
        cfg.seed = opts.seed + r;
        Engine engine(std::vector<Model>(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(cfg.M)), cfg);
        const bool needs_prior = v.mode == SessionMode::tta1 || v.mode == SessionMode::tta1_2;
        const SessionResult res = run_session(std::move(engine), stream, v.mode, needs_prior ? &prior : nullptr);
        table.runs.push_back(to_row(target.id, r, v.label.empty() ? to_string(v.mode) : v.label, res,
                                    opts.record_timing));
      }
    }
  }
  table.aggregates = aggregate(table.runs);
  return table;
}

ResultTable loso_drive(const SynthDataset& data, const TtaConfig& config, SessionMode mode,
                       const LosoOptions& opts, const std::string& label) {
  return loso_run(data, {Variant{label.empty() ? to_string(mode) : label, config, mode, false}}, opts);
}

std::vector<ExperimentRow> aggregate(const std::vector<ExperimentRow>& runs) {
  // Preserve first-seen order of modes and subjects.
  std::vector<std::string> modes, subjects;
  for (const auto& r : runs) {
    if (std::find(modes.begin(), modes.end(), r.mode) == modes.end()) modes.push_back(r.mode);
    if (std::find(subjects.begin(), subjects.end(), r.subject) == subjects.end()) subjects.push_back(r.subject);
  }
  std::vector<ExperimentRow> out;
  for (const auto& mode : modes) {
    std::map<std::string, std::vector<const ExperimentRow*>> by_repeat;
    bool na = false;
    for (const auto& subject : subjects) {
      std::vector<double> acc, bal, auc, pre, wpre, post, wpost;
      for (const auto& r : runs) {
        if (r.mode != mode || r.subject != subject) continue;
        na = na || r.not_applicable;
        acc.push_back(r.accuracy);
        bal.push_back(r.balanced_accuracy);
        auc.push_back(r.auc);
        pre.push_back(r.timing.mean_pre_ms);
        wpre.push_back(r.timing.worst_pre_ms);
        post.push_back(r.timing.mean_post_ms);
        wpost.push_back(r.timing.worst_post_ms);
        by_repeat[r.repeat].push_back(&r);
      }
      if (acc.empty()) continue;
      ExperimentRow m{subject, "mean", mode, mean_of(acc), mean_of(bal), mean_of(auc),
                      {mean_of(pre), *std::max_element(wpre.begin(), wpre.end()), mean_of(post),
                       *std::max_element(wpost.begin(), wpost.end())},
                      na};
      ExperimentRow s{subject, "std", mode, std_of(acc), std_of(bal), std_of(auc), {}, na};
      out.push_back(m);
      out.push_back(s);
    }
    std::vector<double> acc, bal, auc;
    TimingSummary t;
    std::size_t n = 0;
    for (const auto& [rep, rows] : by_repeat) {
      std::vector<double> a, b, c;
      for (const auto* r : rows) {
        a.push_back(r->accuracy);
        b.push_back(r->balanced_accuracy);
        c.push_back(r->auc);
        t.mean_pre_ms += r->timing.mean_pre_ms;
        t.mean_post_ms += r->timing.mean_post_ms;
        t.worst_pre_ms = std::max(t.worst_pre_ms, r->timing.worst_pre_ms);
        t.worst_post_ms = std::max(t.worst_post_ms, r->timing.worst_post_ms);
        ++n;
      }
      acc.push_back(mean_of(a));
      bal.push_back(mean_of(b));
      auc.push_back(mean_of(c));
    }
    if (n > 0) {
      t.mean_pre_ms /= static_cast<double>(n);
      t.mean_post_ms /= static_cast<double>(n);
    }
    out.push_back(ExperimentRow{"avg", "mean", mode, mean_of(acc), mean_of(bal), mean_of(auc), t, na});
    out.push_back(ExperimentRow{"avg", "std", mode, std_of(acc), std_of(bal), std_of(auc), {}, na});
  }
  return out;
}

double ResultTable::mean(const std::string& label, double ExperimentRow::*metric) const {
  std::vector<double> v;
  for (const auto& r : runs)
    if (r.mode == label && !r.not_applicable) v.push_back(r.*metric);
  return mean_of(v);
}

std::vector<ExperimentRow> ResultTable::all_rows() const {
  std::vector<ExperimentRow> rows = runs;
  rows.insert(rows.end(), aggregates.begin(), aggregates.end());
  return rows;
}

std::vector<Variant> ablation_variants(const TtaConfig& base) {
  std::vector<Variant> out;
  for (int mask = 0; mask < 8; ++mask) {
    const bool cem = mask & 1, mdr = mask & 2, tr = mask & 4;
    TtaConfig cfg = base;
    cfg.use_cem = cem;
    cfg.use_mdr = mdr;
    cfg.use_temperature = tr;
    cfg.adapt = cem || mdr;
    std::string label;
    if (cem) label += "CEM";
    if (mdr) label += label.empty() ? "MDR" : "+MDR";
    if (tr) label += label.empty() ? "TR" : "+TR";
    if (label.empty()) label = "none";
    // TR alone rescales losses that are switched off: nothing to run.
    out.push_back(Variant{label, cfg, SessionMode::tta2, tr && !cem && !mdr});
  }
  return out;
}

ResultTable ablate(const SynthDataset& data, const TtaConfig& base, const LosoOptions& opts) {
  return loso_run(data, ablation_variants(base), opts);
}

SweepParam parse_sweep_param(const std::string& s) {
  if (s == "T" || s == "temperature") return SweepParam::temperature;
  if (s == "tau") return SweepParam::tau;
  throw ConfigError("unknown sweep parameter: " + s);
}

ResultTable sweep(const SynthDataset& data, const TtaConfig& base, SweepParam param,
                  const std::vector<double>& grid, const LosoOptions& opts) {
  std::vector<Variant> variants;
  for (double g : grid) {
    TtaConfig cfg = base;
    char buf[64];
    if (param == SweepParam::temperature) {
      cfg.temperature = g;
      std::snprintf(buf, sizeof buf, "T=%g", g);
    } else {
      cfg.tau = g;
      std::snprintf(buf, sizeof buf, "tau=%g", g);
    }
    variants.push_back(Variant{buf, cfg, SessionMode::tta2, false});
  }
  return loso_run(data, variants, opts);
}

ResultTable ensemble_compare(const SynthDataset& data, const TtaConfig& base,
                             const std::vector<EnsembleMode>& modes, const std::vector<std::size_t>& m_grid,
                             const LosoOptions& opts) {
  std::vector<Variant> variants;
  for (std::size_t m : m_grid) {
    for (EnsembleMode mode : modes) {
      TtaConfig cfg = base;
      cfg.M = m;
      cfg.ensemble_mode = mode;
      variants.push_back(Variant{to_string(mode) + ":M" + std::to_string(m), cfg, SessionMode::tta2, false});
    }
  }
  return loso_run(data, variants, opts);
}

std::vector<StageTiming> timing_report(const std::vector<TrialRecord>& records) {
  struct Acc {
    const char* name;
    double TrialRecord::*field;
  };
  const Acc stages[] = {{"align", &TrialRecord::align_ms},
                        {"score", &TrialRecord::score_ms},
                        {"ensemble", &TrialRecord::ensemble_ms},
                        {"pre_inference", &TrialRecord::pre_inference_ms},
                        {"post_inference", &TrialRecord::post_inference_ms}};
  std::vector<StageTiming> out;
  for (const auto& s : stages) {
    StageTiming st{s.name, 0.0, 0.0};
    for (const auto& r : records) {
      st.mean_ms += r.*(s.field);
      st.worst_ms = std::max(st.worst_ms, r.*(s.field));
    }
    if (!records.empty()) st.mean_ms /= static_cast<double>(records.size());
    out.push_back(st);
  }
  return out;
}

}  // namespace ttime
