#include "doctest.h"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "support.hpp"
#include "ttime/classifier.hpp"
#include "ttime/errors.hpp"

using namespace ttime;

namespace {

Model random_model(Featurizer f, Arch a, std::size_t d, std::size_t k, std::uint64_t seed) {
  ModelSpec spec{f, a, d, 5, k};
  Model m = make_model(spec, seed);
  std::mt19937_64 rng(seed + 100);
  std::normal_distribution<double> g(0.0, 0.3);
  for (double& v : m.theta) v = g(rng);
  for (std::size_t j = 0; j < d; ++j) {
    m.shift[j] = g(rng);
    m.scale[j] = 1.0 + std::abs(g(rng));
  }
  return m;
}

bool relu_kink_near(const Model& m, const FeatureMatrix& f) {
  if (m.spec.arch != Arch::mlp) return false;
  const std::size_t d = m.spec.input_dim, h = m.spec.hidden_dim;
  for (std::size_t i = 0; i < f.rows; ++i)
    for (std::size_t r = 0; r < h; ++r) {
      double z = m.theta[h * d + r];
      for (std::size_t c = 0; c < d; ++c) z += m.theta[r * d + c] * (f(i, c) - m.shift[c]) * m.scale[c];
      if (std::abs(z) < 1e-3) return true;
    }
  return false;
}

}  // namespace

TEST_CASE("featurizer names round-trip") {
  CHECK(parse_featurizer(to_string(Featurizer::covariance_flatten)) == Featurizer::covariance_flatten);
  CHECK(parse_arch(to_string(Arch::linear)) == Arch::linear);
  CHECK_THROWS_AS(parse_arch("cnn"), ConfigError);
}

TEST_CASE("log-variance examples") {
  Trial unit(1, 4, {1, -1, 1, -1});
  CHECK(featurize(unit, Featurizer::log_variance)[0] == doctest::Approx(std::log(1.0 + 1e-8)).epsilon(1e-15));
  Trial zero(2, 4);
  for (double v : featurize(zero, Featurizer::log_variance)) CHECK(v == doctest::Approx(std::log(1e-8)));
}

TEST_CASE("log-variance matches direct variance") {
  std::mt19937_64 rng(1);
  const Trial t = support::random_trial(6, 50, rng, 2.5);
  const auto f = featurize(t, Featurizer::log_variance);
  for (std::size_t c = 0; c < 6; ++c) {
    const double v = oracle::direct_variance(t.channel(c).data(), 50);
    CHECK(std::abs(f[c] - std::log(v + 1e-8)) <= 1e-10);
  }
}

TEST_CASE("covariance-flatten preserves the Frobenius norm") {
  std::mt19937_64 rng(2);
  const Trial t = support::random_trial(5, 30, rng);
  const auto f = featurize(t, Featurizer::covariance_flatten);
  CHECK(f.size() == feature_dim(Featurizer::covariance_flatten, 5));
  const auto x = support::to_mat(t);
  auto c = oracle::mul(x, oracle::transpose(x));
  double fro = 0.0;
  for (auto& r : c)
    for (double& v : r) fro += (v / 30.0) * (v / 30.0);
  const double norm = std::inner_product(f.begin(), f.end(), f.begin(), 0.0);
  CHECK(norm == doctest::Approx(fro).epsilon(1e-12));
  CHECK(f[0] == doctest::Approx(c[0][0] / 30.0));
}

TEST_CASE("forward examples") {
  Model zero = make_model({Featurizer::log_variance, Arch::mlp, 3, 4, 2}, 1);
  std::fill(zero.theta.begin(), zero.theta.end(), 0.0);
  for (double l : forward(zero, std::vector<double>{1, 2, 3})) CHECK(l == 0.0);

  Model lin = make_model({Featurizer::log_variance, Arch::linear, 2, 0, 2}, 1);
  lin.theta = {1, 0, 0, 1, 0, 0};
  const auto l = forward(lin, std::vector<double>{2, -1});
  CHECK(l[0] == 2.0);
  CHECK(l[1] == -1.0);
  CHECK_THROWS_AS(forward(lin, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST_CASE("mlp forward matches a hand-rolled network") {
  Model m = make_model({Featurizer::log_variance, Arch::mlp, 3, 4, 2}, 7);
  const oracle::Mat w1{{0.2, -0.1, 0.4}, {0.5, 0.3, -0.2}, {-0.3, 0.1, 0.1}, {0.0, -0.4, 0.2}};
  const oracle::Vec b1{0.1, -0.2, 0.05, 0.3};
  const oracle::Mat w2{{0.7, -0.5, 0.2, 0.1}, {-0.3, 0.4, 0.6, -0.2}};
  const oracle::Vec b2{0.01, -0.02};
  m.theta.clear();
  for (const auto& r : w1) m.theta.insert(m.theta.end(), r.begin(), r.end());
  m.theta.insert(m.theta.end(), b1.begin(), b1.end());
  for (const auto& r : w2) m.theta.insert(m.theta.end(), r.begin(), r.end());
  m.theta.insert(m.theta.end(), b2.begin(), b2.end());
  const oracle::Vec x{1.5, -0.7, 0.9};
  const auto got = forward(m, x);
  const auto want = oracle::naive_mlp(w1, b1, w2, b2, x);
  for (std::size_t k = 0; k < 2; ++k) CHECK(got[k] == doctest::Approx(want[k]).epsilon(1e-14));
}

TEST_CASE("make_model uses Glorot bounds and zero biases") {
  const Model m = make_model({Featurizer::log_variance, Arch::mlp, 8, 32, 2}, 3);
  CHECK(m.theta.size() == m.spec.parameter_count());
  const double bound1 = std::sqrt(6.0 / 40.0);
  for (std::size_t i = 0; i < 32 * 8; ++i) CHECK(std::abs(m.theta[i]) <= bound1);
  for (std::size_t i = 32 * 8; i < 32 * 8 + 32; ++i) CHECK(m.theta[i] == 0.0);
  CHECK(make_model(m.spec, 3) == m);
  CHECK_FALSE(make_model(m.spec, 4) == m);
}

TEST_CASE("softmax_t examples") {
  const auto a = softmax_t(std::vector<double>{0, 0}, 3.0);
  CHECK(a[0] == doctest::Approx(0.5));
  const auto b = softmax_t(std::vector<double>{std::log(3.0), 0}, 1.0);
  CHECK(b[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(b[1] == doctest::Approx(0.25).epsilon(1e-14));
  const auto c = softmax_t(std::vector<double>{2, 0}, 2.0);
  CHECK(c[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-14));
  CHECK(c[0] == doctest::Approx(0.73106).epsilon(1e-5));
}

TEST_CASE("softmax_t is stable and normalized for extreme logits") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1e4, 1e4);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> l(5);
    for (double& v : l) v = u(rng);
    const auto p = softmax_t(l, 1.0);
    double s = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-9);
    const auto lp = log_softmax_t(l, 1.0);
    for (double v : lp) CHECK(std::isfinite(v));
  }
}

TEST_CASE("higher temperature lowers the top probability") {
  const std::vector<double> l{1.0, 3.0, -0.5};
  double prev = 1.0;
  for (double t : {0.5, 1.0, 2.0, 4.0, 8.0}) {
    const auto p = softmax_t(l, t);
    CHECK(argmax(p) == 1);
    CHECK(p[1] < prev);
    prev = p[1];
  }
}

TEST_CASE("argmax breaks ties to the lowest index") {
  CHECK(argmax(std::vector<double>{0.5, 0.5}) == 0);
  CHECK(argmax(std::vector<double>{0.1, 0.4, 0.4}) == 1);
}

TEST_CASE("cross-entropy gradient matches finite differences") {
  std::mt19937_64 rng(5);
  int checked = 0;
  for (int draw = 0; draw < 40; ++draw) {
    const Featurizer fz = draw % 2 ? Featurizer::covariance_flatten : Featurizer::log_variance;
    const Arch arch = (draw / 2) % 2 ? Arch::mlp : Arch::linear;
    const std::size_t d = feature_dim(fz, 3), k = 2 + draw % 2;
    Model m = random_model(fz, arch, d, k, 1000 + draw);
    const FeatureMatrix f = support::random_features(6, d, rng);
    if (relu_kink_near(m, f)) continue;
    std::vector<int> y(6);
    for (std::size_t i = 0; i < 6; ++i) y[i] = static_cast<int>(i % k);
    std::vector<double> grad;
    cross_entropy_and_grad(m, f, y, &grad);
    const auto fd = oracle::central_diff(
        [&](const oracle::Vec& th) {
          Model c = m;
          c.theta = th;
          return cross_entropy_and_grad(c, f, y, nullptr);
        },
        m.theta);
    for (std::size_t i = 0; i < grad.size(); ++i) CHECK(oracle::rel_err(grad[i], fd[i]) <= 1e-4);
    ++checked;
  }
  CHECK(checked >= 30);
}

TEST_CASE("symmetric batch gives zero bias gradient at zero weights") {
  Model m = make_model({Featurizer::log_variance, Arch::linear, 2, 0, 2}, 1);
  std::fill(m.theta.begin(), m.theta.end(), 0.0);
  FeatureMatrix f(2, 2);
  f.data = {1, -1, -1, 1};
  const std::vector<int> y{0, 1};
  std::vector<double> grad;
  cross_entropy_and_grad(m, f, y, &grad);
  CHECK(grad[4] == 0.0);
  CHECK(grad[5] == 0.0);
}

TEST_CASE("adam zero gradient leaves params and decays moments") {
  std::vector<double> p{1.0, -2.0};
  AdamState s(2, 0.1);
  s.m = {0.5, -0.5};
  s.v = {0.2, 0.3};
  adam_step(p, s, std::vector<double>{0.0, 0.0});
  CHECK(s.step == 1);
  CHECK(s.m[0] == doctest::Approx(0.45));
  CHECK(s.v[1] == doctest::Approx(0.3 * 0.999));
  // Non-zero moments move params; only the zero-moment case is a no-op.
  std::vector<double> q{1.0, -2.0};
  AdamState z(2, 0.1);
  adam_step(q, z, std::vector<double>{0.0, 0.0});
  CHECK(q == std::vector<double>{1.0, -2.0});
}

TEST_CASE("adam first step is lr times sign") {
  std::vector<double> p{0.0, 0.0, 0.0};
  AdamState s(3, 1e-3);
  adam_step(p, s, std::vector<double>{3.0, -0.02, 1e-3});
  CHECK(p[0] == doctest::Approx(-1e-3).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(1e-3).epsilon(1e-5));
  CHECK(p[2] == doctest::Approx(-1e-3).epsilon(1e-4));
  CHECK_THROWS_AS(adam_step(p, s, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("adam trajectories are deterministic") {
  auto run = [] {
    std::vector<double> p{0.3, -0.1};
    AdamState s(2, 0.01);
    for (int i = 0; i < 50; ++i) adam_step(p, s, std::vector<double>{p[0] - 1.0, 2.0 * p[1]});
    return std::pair{p, s};
  };
  CHECK(run() == run());
}

TEST_CASE("linear model separates Gaussian blobs") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 0.5);
  FeatureMatrix f(200, 2);
  std::vector<int> y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    y[i] = static_cast<int>(i % 2);
    const double c = y[i] ? 2.0 : -2.0;
    f(i, 0) = c + g(rng);
    f(i, 1) = -c + g(rng);
  }
  Model m = make_model({Featurizer::log_variance, Arch::linear, 2, 0, 2}, 9);
  TrainOptions opts;
  opts.seed = 3;
  train_source(m, f, y, opts);
  int right = 0;
  for (std::size_t i = 0; i < 200; ++i) right += static_cast<int>(argmax(forward(m, f.row(i)))) == y[i];
  CHECK(right >= 198);
}

TEST_CASE("training loss decreases epoch over epoch on separable data") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 0.5);
  FeatureMatrix f(64, 2);
  std::vector<int> y(64);
  for (std::size_t i = 0; i < 64; ++i) {
    y[i] = static_cast<int>(i % 2);
    f(i, 0) = (y[i] ? 1.5 : -1.5) + g(rng);
    f(i, 1) = g(rng);
  }
  Model m = make_model({Featurizer::log_variance, Arch::linear, 2, 0, 2}, 1);
  fit_standardization(m, f);
  double prev = cross_entropy_and_grad(m, f, y, nullptr);
  for (int e = 0; e < 20; ++e) {
    TrainOptions opts;
    opts.epochs = 1;
    opts.batch_size = 64;  // full batch: one deterministic descent step per epoch
    opts.lr = 0.01;
    Model next = m;
    train_source(next, f, y, opts);
    const double loss = cross_entropy_and_grad(next, f, y, nullptr);
    CHECK(loss <= prev + 1e-12);
    prev = loss;
    m = next;
  }
}

TEST_CASE("single example is memorized") {
  FeatureMatrix f(1, 3);
  f.data = {0.3, -1.2, 0.8};
  const std::vector<int> y{1};
  Model m = make_model({Featurizer::log_variance, Arch::mlp, 3, 32, 2}, 2);
  TrainOptions opts;
  opts.epochs = 2000;
  opts.lr = 0.01;
  train_source(m, f, y, opts);
  CHECK(softmax_t(forward(m, f.row(0)))[1] >= 0.99);
}

TEST_CASE("training is seed-deterministic") {
  std::mt19937_64 rng(8);
  const FeatureMatrix f = support::random_features(50, 4, rng);
  std::vector<int> y(50);
  for (std::size_t i = 0; i < 50; ++i) y[i] = f(i, 0) > 0;
  auto train = [&](std::uint64_t seed) {
    Model m = make_model({Featurizer::log_variance, Arch::mlp, 4, 8, 2}, 5);
    TrainOptions opts;
    opts.epochs = 5;
    opts.seed = seed;
    train_source(m, f, y, opts);
    return m;
  };
  CHECK(train(1) == train(1));
  CHECK_FALSE(train(1) == train(2));
}

TEST_CASE("train_source rejects bad labels") {
  TrialBatch b;
  b.trials.emplace_back(2, 4, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 9});
  Model m = make_model({Featurizer::log_variance, Arch::linear, 2, 0, 2}, 1);
  CHECK_THROWS_AS(train_source(m, b, {}), LabelError);
  b.labels = std::vector<int>{2};
  CHECK_THROWS_AS(train_source(m, b, {}), LabelError);
}

TEST_CASE("checkpoint round-trip and corruption") {
  for (Arch a : {Arch::linear, Arch::mlp}) {
    const Model m = random_model(Featurizer::covariance_flatten, a, 6, 3, 11);
    std::stringstream ss;
    write_checkpoint(ss, m);
    CHECK(read_checkpoint(ss) == m);
  }
  std::stringstream bad("TTMX....");
  CHECK_THROWS_AS(read_checkpoint(bad), FormatError);
  const Model m = random_model(Featurizer::log_variance, Arch::linear, 2, 2, 1);
  std::stringstream ss;
  write_checkpoint(ss, m);
  std::string s = ss.str();
  s.resize(s.size() - 3);
  std::stringstream cut(s);
  CHECK_THROWS_AS(read_checkpoint(cut), FormatError);
}

TEST_CASE("checkpoint header layout") {
  const Model m = make_model({Featurizer::log_variance, Arch::linear, 2, 0, 2}, 1);
  std::stringstream ss;
  write_checkpoint(ss, m);
  const std::string s = ss.str();
  CHECK(s.substr(0, 4) == "TTMD");
  CHECK(static_cast<unsigned char>(s[4]) == 1);
  CHECK(static_cast<unsigned char>(s[5]) == 0);
  CHECK(static_cast<unsigned char>(s[6]) == 0);  // log-variance
  CHECK(static_cast<unsigned char>(s[7]) == 0);  // linear
  CHECK(static_cast<unsigned char>(s[8]) == 2);  // K
  // header (4+2+1+1+4+4) + shift, scale, theta as f64
  CHECK(s.size() == 16 + 8 * (2 + 2 + 6));
}
