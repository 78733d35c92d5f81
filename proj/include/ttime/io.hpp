#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ttime/alignment.hpp"
#include "ttime/engine.hpp"
#include "ttime/experiment.hpp"
#include "ttime/synth.hpp"

namespace ttime {

// Trial file: "TTRL", u16 version = 1, u32 n_trials, u32 ch, u32 ts,
// u8 has_labels, f32 samples (trial-major, channel-major, time-minor), then
// n_trials i32 labels when has_labels is set. All little-endian.
void write_trials(std::ostream& out, const TrialBatch& batch);
TrialBatch read_trials(std::istream& in, const std::string& subject_id = "");
void save_trials(const std::string& path, const TrialBatch& batch);
/// Subject id defaults to the file stem.
TrialBatch load_trials(const std::string& path);

inline constexpr const char* kResultsHeader =
    "subject,repeat,mode,accuracy,balanced_accuracy,auc,mean_pre_ms,worst_pre_ms,mean_post_ms,worst_post_ms";

/// Results CSV with the fixed header. Metrics use %.6f, timings %.3f,
/// undefined values "nan", not-applicable rows "N/A".
void write_results_csv(std::ostream& out, const std::vector<ExperimentRow>& rows);

/// Per-trial trace: a,label,truth,score_0..score_{K-1},pre_ms,post_ms.
void write_trace_csv(std::ostream& out, const SessionResult& result, bool with_timing);

/// Flat key=value text; '#' starts a comment; blank lines ignored.
/// Throws ConfigError on malformed lines or duplicate keys.
std::map<std::string, std::string> parse_key_values(std::istream& in);

/// Applies known keys to the two bundles. Unknown keys throw ConfigError.
void apply_config(const std::map<std::string, std::string>& kv, TtaConfig& tta, SynthSpec& synth);
void load_config_file(const std::string& path, TtaConfig& tta, SynthSpec& synth);

/// Keys accepted by apply_config, for documentation and tests.
std::vector<std::string> config_keys();

}  // namespace ttime
