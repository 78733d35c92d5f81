// Command-line front end: synthetic data, source training, streaming
// adaptation, and the LOSO experiment drivers. Every subcommand writes CSV to
// --out or standard output.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "ttime/errors.hpp"
#include "ttime/experiment.hpp"
#include "ttime/io.hpp"
#include "ttime/metrics.hpp"

#if defined(TTIME_HAVE_OPENMP)
#include <omp.h>
#endif

namespace fs = std::filesystem;
using namespace ttime;

namespace {

struct Common {
  std::string config_path;
  std::string out_path;
  bool timing = false;
  bool serial = false;
  int threads = 0;
};

struct DataFlags {
  std::size_t subjects = 0, trials = 0, ch = 0, ts = 0, sessions = 0;
  double imbalance = 0.0, drift = -1.0, shift = -1.0, effect_spread = -1.0;
  long long synth_seed = -1;
};

struct TtaFlags {
  std::string mode = "tta2";
  std::string ensemble;
  std::size_t M = 0, B = 0;
  double temp = 0.0, tau = 0.0, lr = 0.0;
  int c = 0;
  long long seed = -1;
  bool exact_sml = false;
  std::string featurizer, arch;
  int epochs = -1;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "key=value config file");
  app->add_option("--out", c.out_path, "output CSV path (default: stdout)");
  app->add_flag("--timing", c.timing, "record wall-clock timing columns");
  app->add_flag("--serial", c.serial, "disable the parallel member loops");
  app->add_option("--threads", c.threads, "OpenMP thread count");
}

void add_data(CLI::App* app, DataFlags& d) {
  app->add_option("--subjects", d.subjects, "number of synthetic subjects");
  app->add_option("--trials", d.trials, "trials per subject and session");
  app->add_option("--ch", d.ch, "channels");
  app->add_option("--ts", d.ts, "time samples per trial");
  app->add_option("--sessions", d.sessions, "sessions per subject");
  app->add_option("--imbalance", d.imbalance, "class-0 : class-k ratio of the target draw");
  app->add_option("--drift", d.drift, "mixing drift between sessions");
  app->add_option("--shift", d.shift, "per-subject mixing spread");
  app->add_option("--effect-spread", d.effect_spread, "per-subject class effect spread");
  app->add_option("--synth-seed", d.synth_seed, "dataset seed");
}

void add_tta(CLI::App* app, TtaFlags& t) {
  app->add_option("--mode", t.mode, "source|tta1|tta2|tta1+2");
  app->add_option("--ensemble", t.ensemble, "sml-soft|sml-hard|average|vote");
  app->add_option("--M", t.M, "ensemble size");
  app->add_option("--B", t.B, "sliding window size");
  app->add_option("--temp", t.temp, "temperature T");
  app->add_option("--tau", t.tau, "pseudo-label threshold");
  app->add_option("--c", t.c, "recalibration constant");
  app->add_option("--lr", t.lr, "adaptation learning rate");
  app->add_option("--seed", t.seed, "run seed");
  app->add_flag("--exact-sml", t.exact_sml, "recompute SML statistics from the full history");
  app->add_option("--featurizer", t.featurizer, "log-variance|covariance-flatten");
  app->add_option("--arch", t.arch, "linear|mlp");
  app->add_option("--epochs", t.epochs, "source training epochs");
}

struct Setup {
  TtaConfig tta;
  SynthSpec synth;
  SessionMode mode = SessionMode::tta2;
};

Setup resolve(const Common& c, const DataFlags& d, const TtaFlags& t) {
  Setup s;
  if (!c.config_path.empty()) load_config_file(c.config_path, s.tta, s.synth);
  if (d.subjects) s.synth.n_subjects = d.subjects;
  if (d.trials) s.synth.trials_per_subject = d.trials;
  if (d.ch) s.synth.ch = d.ch;
  if (d.ts) s.synth.ts = d.ts;
  if (d.sessions) s.synth.n_sessions = d.sessions;
  if (d.imbalance > 0.0) s.synth.imbalance_ratio = d.imbalance;
  if (d.drift >= 0.0) s.synth.session_drift = d.drift;
  if (d.shift >= 0.0) s.synth.subject_shift = d.shift;
  if (d.effect_spread >= 0.0) s.synth.effect_spread = d.effect_spread;
  if (d.synth_seed >= 0) s.synth.seed = static_cast<std::uint64_t>(d.synth_seed);

  if (!t.ensemble.empty()) s.tta.ensemble_mode = parse_ensemble_mode(t.ensemble);
  if (t.M) s.tta.M = t.M;
  if (t.B) s.tta.B = t.B;
  if (t.temp > 0.0) s.tta.temperature = t.temp;
  if (t.tau > 0.0) s.tta.tau = t.tau;
  if (t.lr > 0.0) s.tta.lr = t.lr;
  if (t.c > 0) s.tta.c = t.c;
  if (t.seed >= 0) s.tta.seed = static_cast<std::uint64_t>(t.seed);
  if (t.exact_sml) s.tta.exact_sml = true;
  if (!t.featurizer.empty()) s.tta.featurizer = parse_featurizer(t.featurizer);
  if (!t.arch.empty()) s.tta.arch = parse_arch(t.arch);
  if (t.epochs >= 0) s.tta.source_epochs = t.epochs;
  s.tta.exec = c.serial ? Exec::serial : Exec::parallel;
  s.mode = parse_session_mode(t.mode);
  s.tta.validate();
  return s;
}

void apply_threads(const Common& c) {
#if defined(TTIME_HAVE_OPENMP)
  if (c.threads > 0) omp_set_num_threads(c.threads);
#else
  (void)c;
#endif
}

// Writes to the --out file, or stdout when none was given.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw FormatError("cannot open " + path);
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

LosoOptions loso_options(const Setup& s, const Common& c, std::size_t repeats) {
  LosoOptions o;
  o.repeats = repeats;
  o.seed = s.tta.seed;
  o.record_timing = c.timing;
  o.imbalanced_target = s.synth.imbalance_ratio > 1.0;
  if (s.synth.n_sessions > 1) {
    // Two-session layout: adapt over the first session, evaluate on the second.
    o.prior_session = 0;
    o.target_session = 1;
  }
  return o;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      grid.push_back(std::stod(item));
    } catch (...) {
      throw ConfigError("bad grid value '" + item + "'");
    }
  }
  if (grid.empty()) throw ConfigError("empty grid");
  return grid;
}

std::vector<TrialBatch> load_all(const std::vector<std::string>& paths) {
  std::vector<TrialBatch> out;
  for (const auto& p : paths) out.push_back(load_trials(p));
  return out;
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming test-time adaptation for multi-channel trial classification"};
  app.require_subcommand(1);

  Common common;
  DataFlags data;
  TtaFlags tta;

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset as trial files");
  std::string synth_dir = "synth_data";
  add_common(synth, common);
  add_data(synth, data);
  synth->add_option("--dir", synth_dir, "directory for the .ttrl files");

  // train-source
  auto* train = app.add_subcommand("train-source", "train ensemble members on source trial files");
  std::vector<std::string> train_sources;
  std::string model_dir = "models";
  add_common(train, common);
  add_tta(train, tta);
  train->add_option("--source", train_sources, "labeled source subject files")->required();
  train->add_option("--dir", model_dir, "directory for the checkpoints");

  // run-tta
  auto* run = app.add_subcommand("run-tta", "stream one target session through the engine");
  std::vector<std::string> run_sources, run_models;
  std::string stream_path, prior_path, trace_path;
  add_common(run, common);
  add_tta(run, tta);
  run->add_option("--source", run_sources, "source subject files (trains in-process)");
  run->add_option("--models", run_models, "member checkpoints (skip training)");
  run->add_option("--stream", stream_path, "target session file")->required();
  run->add_option("--prior", prior_path, "prior session file for tta1 / tta1+2");
  run->add_option("--trace", trace_path, "per-trial CSV path");

  // loso, ablate, sweep, ensembles
  std::size_t repeats = 1;
  auto* loso = app.add_subcommand("loso", "leave-one-subject-out run on synthetic data");
  add_common(loso, common);
  add_data(loso, data);
  add_tta(loso, tta);
  loso->add_option("--repeats", repeats, "repeats per held-out subject");

  auto* abl = app.add_subcommand("ablate", "CEM x MDR x TR ablation matrix");
  add_common(abl, common);
  add_data(abl, data);
  add_tta(abl, tta);
  abl->add_option("--repeats", repeats, "repeats per held-out subject");

  auto* swp = app.add_subcommand("sweep", "sensitivity sweep over T or tau");
  std::string sweep_param = "T", sweep_grid = "1,2,3,4,5";
  add_common(swp, common);
  add_data(swp, data);
  add_tta(swp, tta);
  swp->add_option("--repeats", repeats, "repeats per held-out subject");
  swp->add_option("--param", sweep_param, "T or tau");
  swp->add_option("--grid", sweep_grid, "comma-separated values");

  auto* ens = app.add_subcommand("ensembles", "ensemble strategy comparison across M");
  std::string ens_modes = "sml-soft,sml-hard,average,vote", ens_m = "1,3,5";
  add_common(ens, common);
  add_data(ens, data);
  add_tta(ens, tta);
  ens->add_option("--repeats", repeats, "repeats per held-out subject");
  ens->add_option("--modes", ens_modes, "comma-separated ensemble modes");
  ens->add_option("--M-grid", ens_m, "comma-separated ensemble sizes");

  // bench
  auto* bench = app.add_subcommand("bench", "per-stage latency over a synthetic stream (values need --timing)");
  std::size_t bench_trials = 200;
  add_common(bench, common);
  add_data(bench, data);
  add_tta(bench, tta);
  bench->add_option("--stream-trials", bench_trials, "length of the timed stream");

  CLI11_PARSE(app, argc, argv);
  apply_threads(common);

  try {
    if (synth->parsed()) {
      Setup s = resolve(common, data, tta);
      const SynthDataset d = synth_generate(s.synth);
      fs::create_directories(synth_dir);
      Output out(common.out_path);
      auto& os = out.stream();
      os << "subject,session,kind,path,n_trials";
      for (std::size_t k = 0; k < s.synth.K; ++k) os << ",n_class" << k;
      os << '\n';
      auto emit = [&](const SynthSubject& subj, std::size_t e, const char* kind, const TrialBatch& b) {
        const fs::path p = fs::path(synth_dir) / (subj.id + "_s" + std::to_string(e) +
                                                  (std::string(kind) == "balanced" ? "" : "_target") + ".ttrl");
        save_trials(p.string(), b);
        os << subj.id << ',' << e << ',' << kind << ',' << p.generic_string() << ',' << b.size();
        for (std::size_t k = 0; k < s.synth.K; ++k)
          os << ',' << std::count(b.labels->begin(), b.labels->end(), static_cast<int>(k));
        os << '\n';
      };
      for (const auto& subj : d.subjects)
        for (std::size_t e = 0; e < subj.sessions.size(); ++e) {
          emit(subj, e, "balanced", subj.sessions[e]);
          if (!subj.target_sessions.empty()) emit(subj, e, "imbalanced", subj.target_sessions[e]);
        }
      return 0;
    }

    if (train->parsed()) {
      Setup s = resolve(common, data, tta);
      const auto sources = load_all(train_sources);
      const auto models = train_source_ensemble(sources, s.tta);
      const TrialBatch pooled = pool_aligned(sources, s.tta.exec);
      const FeatureMatrix f = featurize_all(pooled.trials, s.tta.featurizer);
      fs::create_directories(model_dir);
      Output out(common.out_path);
      auto& os = out.stream();
      os << "member,seed,path,train_accuracy\n";
      for (std::size_t m = 0; m < models.size(); ++m) {
        const fs::path p = fs::path(model_dir) / ("member" + std::to_string(m) + ".ttmd");
        save_checkpoint(p.string(), models[m]);
        std::vector<int> pred(f.rows);
        for (std::size_t i = 0; i < f.rows; ++i) pred[i] = static_cast<int>(argmax(forward(models[m], f.row(i))));
        os << m << ',' << member_seed(s.tta.seed, m) << ',' << p.generic_string() << ','
           << fmt6(accuracy(pred, *pooled.labels)) << '\n';
      }
      return 0;
    }

    if (run->parsed()) {
      Setup s = resolve(common, data, tta);
      std::vector<Model> models;
      if (!run_models.empty()) {
        for (const auto& p : run_models) models.push_back(load_checkpoint(p));
      } else if (!run_sources.empty()) {
        models = train_source_ensemble(load_all(run_sources), s.tta);
      } else {
        throw ConfigError("run-tta needs --source or --models");
      }
      const TrialBatch stream = load_trials(stream_path);
      std::unique_ptr<TrialBatch> prior;
      if (!prior_path.empty()) prior = std::make_unique<TrialBatch>(load_trials(prior_path));
      const SessionResult r = run_session(Engine(std::move(models), s.tta), stream, s.mode, prior.get());
      ExperimentRow row;
      row.subject = stream.subject_id;
      row.repeat = "0";
      row.mode = to_string(s.mode);
      row.accuracy = r.accuracy;
      row.balanced_accuracy = r.balanced_accuracy;
      row.auc = r.auc;
      if (common.timing) row.timing = r.timing;
      Output out(common.out_path);
      write_results_csv(out.stream(), {row});
      if (!trace_path.empty()) {
        std::ofstream tf(trace_path);
        if (!tf) throw FormatError("cannot open " + trace_path);
        write_trace_csv(tf, r, common.timing);
      }
      return 0;
    }

    if (loso->parsed() || abl->parsed() || swp->parsed() || ens->parsed()) {
      Setup s = resolve(common, data, tta);
      const SynthDataset d = synth_generate(s.synth);
      const LosoOptions o = loso_options(s, common, repeats);
      ResultTable t;
      if (loso->parsed()) {
        t = loso_drive(d, s.tta, s.mode, o);
      } else if (abl->parsed()) {
        t = ablate(d, s.tta, o);
      } else if (swp->parsed()) {
        t = sweep(d, s.tta, parse_sweep_param(sweep_param), parse_grid(sweep_grid), o);
      } else {
        std::vector<EnsembleMode> modes;
        std::stringstream ss(ens_modes);
        std::string item;
        while (std::getline(ss, item, ',')) modes.push_back(parse_ensemble_mode(item));
        std::vector<std::size_t> ms;
        for (double v : parse_grid(ens_m)) {
          if (v < 1 || v != static_cast<double>(static_cast<std::size_t>(v))) throw ConfigError("bad M in grid");
          ms.push_back(static_cast<std::size_t>(v));
        }
        t = ensemble_compare(d, s.tta, modes, ms, o);
      }
      Output out(common.out_path);
      write_results_csv(out.stream(), t.all_rows());
      return 0;
    }

    if (bench->parsed()) {
      if (!data.ch) data.ch = 22;
      if (!data.ts) data.ts = 1000;
      if (!data.subjects) data.subjects = 3;
      if (!data.trials) data.trials = 40;
      Setup s = resolve(common, data, tta);
      // Two source subjects for training; the stream is drawn for the third.
      SynthSpec stream_spec = s.synth;
      stream_spec.trials_per_subject = bench_trials;
      const SynthDataset d = synth_generate(s.synth);
      const SynthDataset target = synth_generate(stream_spec);
      std::vector<TrialBatch> src;
      for (std::size_t i = 1; i < d.subjects.size(); ++i) src.push_back(d.subjects[i].sessions[0]);
      Engine engine = Engine::init(src, s.tta);
      const TrialBatch& stream = target.subjects[0].sessions[0];
      std::vector<TrialRecord> records;
      for (const auto& x : stream.trials) records.push_back(engine.process_trial(x));
      const SessionResult r = summarize(records, stream);
      Output out(common.out_path);
      auto& os = out.stream();
      os << "stage,ch,ts,M,B,trials,accuracy,mean_ms,worst_ms\n";
      for (const auto& st : timing_report(r.records)) {
        os << st.stage << ',' << s.synth.ch << ',' << s.synth.ts << ',' << s.tta.M << ',' << s.tta.B << ','
           << records.size() << ',' << fmt6(r.accuracy) << ',';
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3f,%.3f", common.timing ? st.mean_ms : 0.0,
                      common.timing ? st.worst_ms : 0.0);
        os << buf << '\n';
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
