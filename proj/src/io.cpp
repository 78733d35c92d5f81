#include "ttime/io.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>

#include "ttime/binio.hpp"
#include "ttime/errors.hpp"

namespace ttime {

namespace {
constexpr char kTrialMagic[5] = "TTRL";
constexpr std::uint16_t kTrialVersion = 1;
}  // namespace

void write_trials(std::ostream& out, const TrialBatch& batch) {
  batch.validate();
  const std::uint32_t ch = batch.empty() ? 0 : static_cast<std::uint32_t>(batch.trials.front().channels());
  const std::uint32_t ts = batch.empty() ? 0 : static_cast<std::uint32_t>(batch.trials.front().samples());
  binio::put_magic(out, kTrialMagic);
  binio::put<std::uint16_t>(out, kTrialVersion);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(batch.size()));
  binio::put<std::uint32_t>(out, ch);
  binio::put<std::uint32_t>(out, ts);
  binio::put<std::uint8_t>(out, batch.labeled() ? 1 : 0);
  for (const auto& t : batch.trials)
    for (double v : t.data()) binio::put<float>(out, static_cast<float>(v));
  if (batch.labeled())
    for (int y : *batch.labels) binio::put<std::int32_t>(out, y);
  if (!out) throw FormatError("write_trials: stream failure");
}

TrialBatch read_trials(std::istream& in, const std::string& subject_id) {
  binio::expect_magic(in, kTrialMagic);
  if (binio::get<std::uint16_t>(in) != kTrialVersion) throw FormatError("trial file: unsupported version");
  const auto n = binio::get<std::uint32_t>(in);
  const auto ch = binio::get<std::uint32_t>(in);
  const auto ts = binio::get<std::uint32_t>(in);
  const auto has_labels = binio::get<std::uint8_t>(in);
  if (has_labels > 1) throw FormatError("trial file: bad label flag");
  if (n > 0 && (ch < 1 || ts < 2)) throw FormatError("trial file: bad dimensions");
  TrialBatch batch;
  batch.subject_id = subject_id;
  batch.trials.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::vector<double> data(static_cast<std::size_t>(ch) * ts);
    for (double& v : data) v = binio::get<float>(in);
    batch.trials.emplace_back(ch, ts, std::move(data));
  }
  if (has_labels) {
    std::vector<int> labels(n);
    for (int& y : labels) y = binio::get<std::int32_t>(in);
    batch.labels = std::move(labels);
  }
  return batch;
}

void save_trials(const std::string& path, const TrialBatch& batch) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path);
  write_trials(out, batch);
}

TrialBatch load_trials(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return read_trials(in, std::filesystem::path(path).stem().string());
}

namespace {

std::string fmt(double v, const char* spec) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

void write_results_csv(std::ostream& out, const std::vector<ExperimentRow>& rows) {
  out << kResultsHeader << '\n';
  for (const auto& r : rows) {
    out << r.subject << ',' << r.repeat << ',' << r.mode << ',';
    if (r.not_applicable) {
      out << "N/A,N/A,N/A,N/A,N/A,N/A,N/A\n";
      continue;
    }
    out << fmt(r.accuracy, "%.6f") << ',' << fmt(r.balanced_accuracy, "%.6f") << ',' << fmt(r.auc, "%.6f") << ','
        << fmt(r.timing.mean_pre_ms, "%.3f") << ',' << fmt(r.timing.worst_pre_ms, "%.3f") << ','
        << fmt(r.timing.mean_post_ms, "%.3f") << ',' << fmt(r.timing.worst_post_ms, "%.3f") << '\n';
  }
}

void write_trace_csv(std::ostream& out, const SessionResult& result, bool with_timing) {
  const std::size_t k = result.scores.empty() ? 0 : result.scores.front().size();
  out << "a,label,truth";
  for (std::size_t c = 0; c < k; ++c) out << ",score_" << c;
  out << ",pre_ms,post_ms\n";
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    const auto& rec = result.records[i];
    out << rec.a << ',' << rec.label << ',';
    if (i < result.truth.size()) out << result.truth[i];
    for (double s : rec.scores) out << ',' << fmt(s, "%.6f");
    out << ',' << fmt(with_timing ? rec.pre_inference_ms : 0.0, "%.3f") << ','
        << fmt(with_timing ? rec.post_inference_ms : 0.0, "%.3f") << '\n';
  }
}

std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string{};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second) throw ConfigError("config: duplicate key " + key);
  }
  return kv;
}

namespace {

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw ConfigError("");
    return d;
  } catch (...) {
    throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  }
}

std::size_t to_count(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d < 0 || d != std::floor(d)) throw ConfigError("config: " + key + " expects a non-negative integer");
  return static_cast<std::size_t>(d);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ConfigError("config: " + key + " expects a boolean");
}

using Setter = std::function<void(const std::string&, const std::string&, TtaConfig&, SynthSpec&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"M", [](auto& k, auto& v, TtaConfig& t, SynthSpec&) { t.M = to_count(k, v); }},
      {"B", [](auto& k, auto& v, TtaConfig& t, SynthSpec&) { t.B = to_count(k, v); }},
      {"temperature", [](auto& k, auto& v, TtaConfig& t, SynthSpec&) { t.temperature = to_double(k, v); }},
      {"tau", [](auto& k, auto& v, TtaConfig& t, SynthSpec&) { t.tau = to_double(k, v); }},
      {"c", [](auto& k, auto& v, TtaConfig& t, SynthSpec&) { t.c = static_cast<int>(to_count(k, v)); }},
      {"lr", [](auto& k, auto& v, TtaConfig& t, SynthSpec&) { t.lr = to_double(k, v); }},
      {"ensemble", [](auto&, auto& v, TtaConfig& t, SynthSpec&) { t.ensemble_mode = parse_ensemble_mode(v); }},
      {"sml_recompute_interval",
       [](auto& k, auto& v, TtaConfig& t, SynthSpec&) { t.sml_recompute_interval = to_count(k, v); }},
      {"exact_sml", [](auto& k, auto& v, TtaConfig& t, SynthSpec&) { t.exact_sml = to_bool(k, v); }},
      {"adapt", [](auto& k, auto& v, TtaConfig& t, SynthSpec&) { t.adapt = to_bool(k, v); }},
      {"use_cem", [](auto& k, auto& v, TtaConfig& t, SynthSpec&) { t.use_cem = to_bool(k, v); }},
      {"use_mdr", [](auto& k, auto& v, TtaConfig& t, SynthSpec&) { t.use_mdr = to_bool(k, v); }},
      {"use_temperature", [](auto& k, auto& v, TtaConfig& t, SynthSpec&) { t.use_temperature = to_bool(k, v); }},
      {"recalibrate", [](auto& k, auto& v, TtaConfig& t, SynthSpec&) { t.recalibrate = to_bool(k, v); }},
      {"seed", [](auto& k, auto& v, TtaConfig& t, SynthSpec&) { t.seed = to_count(k, v); }},
      {"featurizer", [](auto&, auto& v, TtaConfig& t, SynthSpec&) { t.featurizer = parse_featurizer(v); }},
      {"arch", [](auto&, auto& v, TtaConfig& t, SynthSpec&) { t.arch = parse_arch(v); }},
      {"hidden_dim", [](auto& k, auto& v, TtaConfig& t, SynthSpec&) { t.hidden_dim = to_count(k, v); }},
      {"source_epochs",
       [](auto& k, auto& v, TtaConfig& t, SynthSpec&) { t.source_epochs = static_cast<int>(to_count(k, v)); }},
      {"source_batch_size", [](auto& k, auto& v, TtaConfig& t, SynthSpec&) { t.source_batch_size = to_count(k, v); }},
      {"source_lr", [](auto& k, auto& v, TtaConfig& t, SynthSpec&) { t.source_lr = to_double(k, v); }},
      {"n_subjects", [](auto& k, auto& v, TtaConfig&, SynthSpec& s) { s.n_subjects = to_count(k, v); }},
      {"trials_per_subject",
       [](auto& k, auto& v, TtaConfig&, SynthSpec& s) { s.trials_per_subject = to_count(k, v); }},
      {"n_sessions", [](auto& k, auto& v, TtaConfig&, SynthSpec& s) { s.n_sessions = to_count(k, v); }},
      {"ch", [](auto& k, auto& v, TtaConfig&, SynthSpec& s) { s.ch = to_count(k, v); }},
      {"ts", [](auto& k, auto& v, TtaConfig&, SynthSpec& s) { s.ts = to_count(k, v); }},
      {"K", [](auto& k, auto& v, TtaConfig&, SynthSpec& s) { s.K = to_count(k, v); }},
      {"class_effect", [](auto& k, auto& v, TtaConfig&, SynthSpec& s) { s.class_effect = to_double(k, v); }},
      {"effect_spread", [](auto& k, auto& v, TtaConfig&, SynthSpec& s) { s.effect_spread = to_double(k, v); }},
      {"subject_shift", [](auto& k, auto& v, TtaConfig&, SynthSpec& s) { s.subject_shift = to_double(k, v); }},
      {"profile_spread", [](auto& k, auto& v, TtaConfig&, SynthSpec& s) { s.profile_spread = to_double(k, v); }},
      {"gain_spread", [](auto& k, auto& v, TtaConfig&, SynthSpec& s) { s.gain_spread = to_double(k, v); }},
      {"trial_jitter", [](auto& k, auto& v, TtaConfig&, SynthSpec& s) { s.trial_jitter = to_double(k, v); }},
      {"noise", [](auto& k, auto& v, TtaConfig&, SynthSpec& s) { s.noise = to_double(k, v); }},
      {"session_drift", [](auto& k, auto& v, TtaConfig&, SynthSpec& s) { s.session_drift = to_double(k, v); }},
      {"imbalance_ratio", [](auto& k, auto& v, TtaConfig&, SynthSpec& s) { s.imbalance_ratio = to_double(k, v); }},
      {"synth_seed", [](auto& k, auto& v, TtaConfig&, SynthSpec& s) { s.seed = to_count(k, v); }},
  };
  return table;
}

}  // namespace

void apply_config(const std::map<std::string, std::string>& kv, TtaConfig& tta, SynthSpec& synth) {
  const auto& table = setters();
  for (const auto& [key, value] : kv) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second(key, value, tta, synth);
  }
}

void load_config_file(const std::string& path, TtaConfig& tta, SynthSpec& synth) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  apply_config(parse_key_values(in), tta, synth);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, v] : setters()) keys.push_back(k);
  return keys;
}

}  // namespace ttime
