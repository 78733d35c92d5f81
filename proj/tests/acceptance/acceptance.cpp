// Acceptance runner: one PASS/FAIL line per criterion.
// Usage: acceptance <path to ttime CLI> <scratch directory>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "smlsim.hpp"
#include "support.hpp"
#include "ttime/alignment.hpp"
#include "ttime/engine.hpp"
#include "ttime/experiment.hpp"
#include "ttime/matcore.hpp"
#include "ttime/synth.hpp"
#include "ttime/ttaloss.hpp"

using namespace ttime;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

constexpr int kSeeds = 10;

// Standard benchmark: the generator defaults (8 subjects, ch 8, K 2, 150
// trials per subject) with the seed varied.
SynthSpec standard_spec(int seed) {
  SynthSpec s;
  s.seed = static_cast<std::uint64_t>(seed);
  return s;
}

LosoOptions seeded(int seed) {
  LosoOptions o;
  o.seed = static_cast<std::uint64_t>(seed);
  return o;
}

// 1. Whitening and incremental equivalence.
Outcome alignment_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  double worst_gap = 0.0, worst_prefix = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t ch = 1 + trial % 22;
    const std::size_t n = 1 + (trial * 7) % 144;
    const std::size_t ts = std::max<std::size_t>(2, ch + 2 - std::min<std::size_t>(n, ch));
    const TrialBatch b = support::random_batch(n, ch, ts, rng);
    const SymMatrix cov = mean_covariance(align_offline(b));
    worst_gap = std::max(worst_gap, oracle::frob_diff(support::to_mat(cov), oracle::identity(ch)));

    RunningCovariance rc;
    TrialBatch prefix;
    for (std::size_t a = 0; a < n; ++a) {
      rc.update(b.trials[a]);
      prefix.trials.push_back(b.trials[a]);
      const TrialBatch offline = align_offline(prefix);
      const Trial online = rc.transform(b.trials[a]);
      worst_prefix = std::max(worst_prefix, max_abs_diff(online.data(), offline.trials[a].data()));
    }
  }
  const double secs = seconds_since(t0);
  return {worst_gap <= 1e-6 && worst_prefix <= 1e-10 && secs < 5.0,
          fmt("max |mean cov - I|_F = %.3g (<= 1e-6), max prefix diff = %.3g (<= 1e-10), %.2f s (< 5 s)",
              worst_gap, worst_prefix, secs)};
}

// 2. inv_sqrt identity and principal eigenvector.
Outcome numerics_suite() {
  std::mt19937_64 rng(202);
  double worst_identity = 0.0, worst_vec = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto r = oracle::random_spd(2 + trial % 21, rng);
    const auto s = support::to_mat(inv_sqrt(support::to_sym(r), 1e-12));
    worst_identity = std::max(worst_identity, oracle::frob_diff(oracle::mul(oracle::mul(s, r), s), oracle::identity(r.size())));
  }
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + trial % 11;
    const SymMatrix q = support::to_sym(oracle::random_symmetric(n, rng));
    const auto v = principal_eigenvector(q);
    const EigPair e = sym_eig(q);
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += v[i] * e.vector(0)[i];
    const double sign = dot >= 0.0 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < n; ++i) worst_vec = std::max(worst_vec, std::abs(v[i] - sign * e.vector(0)[i]));
  }
  return {worst_identity <= 1e-8 && worst_vec <= 1e-6,
          fmt("max |S R S - I|_F = %.3g (<= 1e-8), max eigenvector diff = %.3g (<= 1e-6)", worst_identity, worst_vec)};
}

// 3. Analytic gradients against central differences.
Outcome gradient_suite() {
  const Featurizer fzs[] = {Featurizer::log_variance, Featurizer::covariance_flatten};
  const Arch archs[] = {Arch::linear, Arch::mlp};
  int checked = 0, skipped = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1000; checked < 100; ++seed) {
    const std::size_t combo = static_cast<std::size_t>(checked) % 4;
    gradcheck::Draw d = gradcheck::make_draw(seed, fzs[combo % 2], archs[combo / 2]);
    d.opts.recalibrate = seed % 3 != 0;
    if (gradcheck::near_kink(d)) {
      ++skipped;
      continue;
    }
    for (LossKind kind : {LossKind::cem, LossKind::mdr, LossKind::cem_mdr})
      worst = std::max(worst, gradcheck::max_rel_error(d, kind, 1e-5));
    ++checked;
  }
  return {worst <= 1e-4, fmt("100 draws (25 per featurizer x arch, %d redrawn at kinks), max rel err = %.3g (<= 1e-4)",
                             skipped, worst)};
}

// 4. Closed-form loss values.
Outcome loss_oracle() {
  const auto passthrough = [] {
    Model m = make_model({Featurizer::log_variance, Arch::linear, 2, 0, 2}, 1);
    std::fill(m.theta.begin(), m.theta.end(), 0.0);
    m.theta[0] = m.theta[3] = 1.0;
    return m;
  }();
  const auto rows = [](std::vector<std::vector<double>> r, bool log) {
    FeatureMatrix f(r.size(), 2);
    for (std::size_t i = 0; i < r.size(); ++i)
      for (std::size_t j = 0; j < 2; ++j) f(i, j) = log ? std::log(r[i][j]) : r[i][j];
    return f;
  };
  const std::vector<int> z0{0, 0}, z6{6, 0};
  struct Case {
    const char* name;
    double got, want;
  };
  const Case cases[] = {
      {"cem uniform", cem_loss(passthrough, rows({{0, 0}, {0, 0}}, false), 1.0), 0.693147},
      {"cem one-hot", cem_loss(passthrough, rows({{1000, 0}, {0, 1000}}, false), 1.0), 0.0},
      {"cem (0.75,0.25)", cem_loss(passthrough, rows({{0.75, 0.25}, {0.75, 0.25}}, true), 1.0), 0.562335},
      {"mdr uniform", mdr_loss(passthrough, rows({{0, 0}, {0, 0}}, false), z0, 4, 1.0), -0.693147},
      {"mdr (0.8,0.2) z=0", mdr_loss(passthrough, rows({{0.8, 0.2}, {0.8, 0.2}}, true), z0, 4, 1.0), -0.500402},
      {"mdr (0.8,0.2) z=(6,0)", mdr_loss(passthrough, rows({{0.8, 0.2}, {0.8, 0.2}}, true), z6, 4, 1.0), -0.66498},
  };
  bool pass = true;
  std::string detail;
  for (const auto& c : cases) {
    const bool ok = std::abs(c.got - c.want) <= 5e-7;
    pass = pass && ok;
    detail += fmt("%s%s = %.6f (want %.6f)%s", detail.empty() ? "" : "; ", c.name, c.got, c.want, ok ? "" : " MISMATCH");
  }
  return {pass, detail};
}

// 5. SML Monte-Carlo protocol.
Outcome sml_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  int ranked = 0, beat_median = 0;
  for (std::uint64_t d = 0; d < 20; ++d) {
    const auto o = smlsim::standard_draw(d);
    if (o.weights.size() != 10) continue;
    ranked += oracle::spearman(o.weights, o.accuracies) >= 0.9;
    beat_median += o.sml_accuracy >= smlsim::median(o.expert_accuracy);
  }
  const double secs = seconds_since(t0);
  return {ranked >= 18 && beat_median == 20 && secs < 30.0,
          fmt("Spearman >= 0.9 in %d/20 (>= 18), sml-soft >= median expert in %d/20 (20), %.2f s (< 30 s)", ranked,
              beat_median, secs)};
}

// 6. T-TIME(5) >= T-TIME(1) >= frozen source, T-TIME(1) - frozen >= 3 points.
Outcome directional_benchmark() {
  const auto t0 = std::chrono::steady_clock::now();
  TtaConfig base;
  TtaConfig frozen = base, t1 = base, t5 = base;
  frozen.M = 1;
  frozen.adapt = false;
  t1.M = 1;
  t5.M = 5;
  const std::vector<Variant> v{{"frozen", frozen, SessionMode::source, false},
                               {"T1", t1, SessionMode::tta2, false},
                               {"T5", t5, SessionMode::tta2, false}};
  double f = 0.0, a1 = 0.0, a5 = 0.0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const ResultTable t = loso_run(synth_generate(standard_spec(seed)), v, seeded(seed));
    f += t.mean("frozen") / kSeeds;
    a1 += t.mean("T1") / kSeeds;
    a5 += t.mean("T5") / kSeeds;
  }
  const double secs = seconds_since(t0);
  return {a5 >= a1 && a1 >= f && a1 - f >= 0.03 && secs < 300.0,
          fmt("T-TIME(5) %.4f >= T-TIME(1) %.4f >= frozen %.4f, gain %.2f points (>= 3), %.1f s (< 300 s)", a5, a1, f,
              100.0 * (a1 - f), secs)};
}

// 7. Recalibrated MDR vs plain diversity under 2:1 imbalance (AUC).
Outcome imbalance_benchmark() {
  TtaConfig recal;
  TtaConfig plain = recal;
  plain.recalibrate = false;
  const std::vector<Variant> v{{"recal", recal, SessionMode::tta2, false}, {"z0", plain, SessionMode::tta2, false}};
  double a = 0.0, b = 0.0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    SynthSpec s = standard_spec(seed);
    s.imbalance_ratio = 2.0;
    LosoOptions o = seeded(seed);
    o.imbalanced_target = true;
    const ResultTable t = loso_run(synth_generate(s), v, o);
    a += t.mean("recal", &ExperimentRow::auc) / kSeeds;
    b += t.mean("z0", &ExperimentRow::auc) / kSeeds;
  }
  return {a >= b, fmt("AUC recalibrated %.4f >= z forced to 0 %.4f", a, b)};
}

// 8. Ablation ordering full >= CEM-only >= all off; TR-only N/A.
Outcome ablation_benchmark() {
  double full = 0.0, cem = 0.0, none = 0.0;
  bool tr_na = true;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const ResultTable t = ablate(synth_generate(standard_spec(seed)), TtaConfig{}, seeded(seed));
    full += t.mean("CEM+MDR+TR") / kSeeds;
    cem += t.mean("CEM") / kSeeds;
    none += t.mean("none") / kSeeds;
    for (const auto& r : t.runs)
      if (r.mode == "TR") tr_na = tr_na && r.not_applicable;
  }
  return {full >= cem && cem >= none && tr_na,
          fmt("full %.4f >= CEM-only %.4f >= all-off %.4f, TR-only N/A: %s", full, cem, none, tr_na ? "yes" : "no")};
}

// 9. Continual ordering on two sessions.
Outcome continual_benchmark() {
  TtaConfig base;
  const std::vector<Variant> v{{"source", base, SessionMode::source, false},
                               {"tta1", base, SessionMode::tta1, false},
                               {"tta2", base, SessionMode::tta2, false},
                               {"tta1+2", base, SessionMode::tta1_2, false}};
  double src = 0.0, t1 = 0.0, t2 = 0.0, t12 = 0.0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    SynthSpec s = standard_spec(seed);
    s.n_sessions = 2;
    s.session_drift = 0.5;
    LosoOptions o = seeded(seed);
    o.prior_session = 0;
    o.target_session = 1;
    const ResultTable t = loso_run(synth_generate(s), v, o);
    src += t.mean("source") / kSeeds;
    t1 += t.mean("tta1") / kSeeds;
    t2 += t.mean("tta2") / kSeeds;
    t12 += t.mean("tta1+2") / kSeeds;
  }
  return {t1 >= src && t2 >= src,
          fmt("tta1 %.4f >= source %.4f, tta2 %.4f >= source (tta1+2 %.4f)", t1, src, t2, t12)};
}

// 10. Per-trial latency at ch 22, ts 1000, M 5, B 8 over 200 trials.
Outcome latency_budget() {
  SynthSpec s;
  s.n_subjects = 3;
  s.trials_per_subject = 200;
  s.ch = 22;
  s.ts = 1000;
  const SynthDataset d = synth_generate(s);
  TtaConfig c;
  c.M = 5;
  c.B = 8;
  const Engine engine = Engine::init({d.subjects[1].sessions[0], d.subjects[2].sessions[0]}, c);
  const SessionResult r = run_session(engine, d.subjects[0].sessions[0], SessionMode::tta2);
  const TimingSummary& t = r.timing;
  return {r.records.size() == 200 && t.worst_pre_ms <= 50.0 && t.worst_post_ms <= 200.0,
          fmt("%zu trials, pre mean %.3f / worst %.3f ms (<= 50), post mean %.3f / worst %.3f ms (<= 200)",
              r.records.size(), t.mean_pre_ms, t.worst_pre_ms, t.mean_post_ms, t.worst_post_ms)};
}

// 11. Byte-identical CSV output across two runs of every subcommand.
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> snapshot(const std::vector<fs::path>& outputs) {
  std::map<std::string, std::string> files;
  for (const auto& p : outputs) {
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p)) files[e.path().string()] = slurp(e.path());
    } else {
      files[p.string()] = slurp(p);
    }
  }
  return files;
}

Outcome determinism(const std::string& cli, const fs::path& work) {
  if (cli.empty()) return {false, "no CLI path given"};
  fs::remove_all(work);
  fs::create_directories(work);
  const auto w = [&](const char* name) { return (work / name).string(); };
  const std::string small = " --subjects 3 --trials 30 --repeats 2 --epochs 20 --M 3";
  struct Case {
    const char* name;
    std::string args;
    std::vector<fs::path> outputs;
  };
  const std::vector<Case> cases{
      {"synth", "synth --subjects 3 --trials 24 --imbalance 2 --dir " + w("synth") + " --out " + w("synth.csv"),
       {w("synth.csv"), w("synth")}},
      {"train-source",
       "train-source --source " + w("synth/S00_s0.ttrl") + " " + w("synth/S01_s0.ttrl") +
           " --M 3 --epochs 20 --dir " + w("models") + " --out " + w("train.csv"),
       {w("train.csv"), w("models")}},
      {"run-tta",
       "run-tta --models " + w("models/member0.ttmd") + " " + w("models/member1.ttmd") + " " +
           w("models/member2.ttmd") + " --M 3 --stream " + w("synth/S02_s0.ttrl") + " --trace " + w("trace.csv") +
           " --out " + w("run.csv"),
       {w("run.csv"), w("trace.csv")}},
      {"loso", "loso" + small + " --out " + w("loso.csv"), {w("loso.csv")}},
      {"ablate", "ablate" + small + " --out " + w("ablate.csv"), {w("ablate.csv")}},
      {"sweep", "sweep" + small + " --param tau --grid 0.6,0.8 --out " + w("sweep.csv"), {w("sweep.csv")}},
      {"ensembles", "ensembles" + small + " --modes sml-soft,average --M-grid 1,3 --out " + w("ens.csv"),
       {w("ens.csv")}},
      {"bench", "bench --ch 8 --ts 128 --trials 20 --stream-trials 30 --M 3 --epochs 20 --out " + w("bench.csv"),
       {w("bench.csv")}},
  };
  bool pass = true;
  std::string detail;
  for (const auto& c : cases) {
    std::map<std::string, std::string> runs[2];
    bool ran = true;
    for (auto& snap : runs) {
      for (const auto& p : c.outputs) fs::remove_all(p);
      ran = ran && std::system(("\"" + cli + "\" " + c.args + " > /dev/null").c_str()) == 0;
      snap = snapshot(c.outputs);
    }
    const bool same = ran && !runs[0].empty() && runs[0] == runs[1];
    pass = pass && same;
    detail += fmt("%s%s %s", detail.empty() ? "" : ", ", c.name, !ran ? "error" : same ? "identical" : "DIFFERS");
  }
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  const fs::path work = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "ttime_acceptance";
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"alignment suite", alignment_suite},
      {"numerics suite", numerics_suite},
      {"gradient suite", gradient_suite},
      {"loss-value oracle", loss_oracle},
      {"SML oracle", sml_oracle},
      {"directional benchmark", directional_benchmark},
      {"imbalance benchmark", imbalance_benchmark},
      {"ablation ordering", ablation_benchmark},
      {"continual ordering", continual_benchmark},
      {"latency budget", latency_budget},
      {"determinism", [&] { return determinism(cli, work); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2zu %-22s %s  %s  [%.1f s]\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
