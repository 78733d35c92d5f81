#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ttime/engine.hpp"
#include "ttime/synth.hpp"

namespace ttime {

/// One configuration evaluated inside a LOSO run. Variants of one run share
/// the source ensemble: each uses the first config.M members of a single
/// ensemble trained at the largest M, so they differ only in what happens at
/// test time. `not_applicable` rows are carried through to the table but
/// never run.
struct Variant {
  std::string label;
  TtaConfig config;
  SessionMode mode = SessionMode::tta2;
  bool not_applicable = false;
};

struct LosoOptions {
  std::size_t repeats = 1;
  std::uint64_t seed = 0;          // repeat r trains with seed + r
  std::size_t source_session = 0;  // session used to build the source pool
  std::size_t target_session = 0;  // session streamed for evaluation
  std::size_t prior_session = 0;   // adapted over first in tta1 / tta1+2
  bool imbalanced_target = false;  // stream the imbalanced draw if present
  bool record_timing = false;      // otherwise timing columns are written as 0
};

struct ExperimentRow {
  std::string subject;
  std::string repeat;  // index, "mean" or "std"
  std::string mode;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double auc = 0.0;
  TimingSummary timing;
  bool not_applicable = false;
};

struct ResultTable {
  std::vector<ExperimentRow> runs;        // one per (variant, subject, repeat)
  std::vector<ExperimentRow> aggregates;  // per-subject and "avg" mean/std rows

  /// Mean over subjects and repeats of the given metric for a variant label.
  double mean(const std::string& label, double ExperimentRow::*metric = &ExperimentRow::accuracy) const;
  std::vector<ExperimentRow> all_rows() const;
};

/// Source subjects for a held-out target: every other subject's
/// source_session batch. Throws StateError if any batch carries the target id.
std::vector<TrialBatch> source_pool(const SynthDataset& data, std::size_t target, std::size_t session);

/// Leave-one-subject-out driver over a set of variants.
ResultTable loso_run(const SynthDataset& data, const std::vector<Variant>& variants, const LosoOptions& opts);

/// Single-variant convenience wrapper.
ResultTable loso_drive(const SynthDataset& data, const TtaConfig& config, SessionMode mode,
                       const LosoOptions& opts, const std::string& label = "");

/// Mean/std aggregation mirroring the per-subject table layout: for each
/// (variant, subject) the mean and std over repeats, then "avg" rows whose
/// std is taken across repeats of the subject-averaged metric.
std::vector<ExperimentRow> aggregate(const std::vector<ExperimentRow>& runs);

/// The eight CEM x MDR x TR toggle combinations, TR-only marked N/A.
std::vector<Variant> ablation_variants(const TtaConfig& base);
ResultTable ablate(const SynthDataset& data, const TtaConfig& base, const LosoOptions& opts);

enum class SweepParam { temperature, tau };
SweepParam parse_sweep_param(const std::string& s);
ResultTable sweep(const SynthDataset& data, const TtaConfig& base, SweepParam param,
                  const std::vector<double>& grid, const LosoOptions& opts);

ResultTable ensemble_compare(const SynthDataset& data, const TtaConfig& base,
                             const std::vector<EnsembleMode>& modes, const std::vector<std::size_t>& m_grid,
                             const LosoOptions& opts);

struct StageTiming {
  std::string stage;
  double mean_ms = 0.0;
  double worst_ms = 0.0;
};

/// Mean and worst-case per stage: align, score, ensemble, pre-inference
/// total, post-inference update.
std::vector<StageTiming> timing_report(const std::vector<TrialRecord>& records);

}  // namespace ttime
