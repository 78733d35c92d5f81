#include "ttime/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "ttime/binio.hpp"
#include "ttime/errors.hpp"

namespace ttime {

std::string to_string(Featurizer f) {
  return f == Featurizer::log_variance ? "log-variance" : "covariance-flatten";
}

std::string to_string(Arch a) { return a == Arch::linear ? "linear" : "mlp"; }

Featurizer parse_featurizer(const std::string& s) {
  if (s == "log-variance") return Featurizer::log_variance;
  if (s == "covariance-flatten") return Featurizer::covariance_flatten;
  throw ConfigError("unknown featurizer: " + s);
}

Arch parse_arch(const std::string& s) {
  if (s == "linear") return Arch::linear;
  if (s == "mlp") return Arch::mlp;
  throw ConfigError("unknown arch: " + s);
}

std::size_t feature_dim(Featurizer kind, std::size_t channels) {
  return kind == Featurizer::log_variance ? channels : channels * (channels + 1) / 2;
}

std::vector<double> featurize(const Trial& x, Featurizer kind) {
  const std::size_t ch = x.channels();
  const double ts = static_cast<double>(x.samples());
  std::vector<double> out;
  out.reserve(feature_dim(kind, ch));
  if (kind == Featurizer::log_variance) {
    for (std::size_t c = 0; c < ch; ++c) {
      const auto row = x.channel(c);
      const double mean = std::accumulate(row.begin(), row.end(), 0.0) / ts;
      double ss = 0.0;
      for (double v : row) ss += (v - mean) * (v - mean);
      out.push_back(std::log(ss / ts + 1e-8));
    }
  } else {
    const SymMatrix r = x.outer();
    for (std::size_t i = 0; i < ch; ++i) {
      out.push_back(r(i, i) / ts);
      for (std::size_t j = i + 1; j < ch; ++j) out.push_back(std::sqrt(2.0) * r(i, j) / ts);
    }
  }
  return out;
}

FeatureMatrix featurize_all(std::span<const Trial> trials, Featurizer kind) {
  if (trials.empty()) return {};
  FeatureMatrix f(trials.size(), feature_dim(kind, trials.front().channels()));
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto v = featurize(trials[i], kind);
    if (v.size() != f.cols) throw ShapeError("featurize_all: trials with differing channel counts");
    std::copy(v.begin(), v.end(), f.row(i).begin());
  }
  return f;
}

std::size_t ModelSpec::parameter_count() const {
  if (arch == Arch::linear) return classes * input_dim + classes;
  return hidden_dim * input_dim + hidden_dim + classes * hidden_dim + classes;
}

namespace {

struct Layout {
  std::size_t d, h, k;
  std::size_t w1, b1, w2, b2;  // offsets; w2/b2 unused for linear
};

Layout layout_of(const ModelSpec& s) {
  Layout l{};
  l.d = s.input_dim;
  l.k = s.classes;
  if (s.arch == Arch::linear) {
    l.h = 0;
    l.w1 = 0;
    l.b1 = s.classes * s.input_dim;
  } else {
    l.h = s.hidden_dim;
    l.w1 = 0;
    l.b1 = l.h * l.d;
    l.w2 = l.b1 + l.h;
    l.b2 = l.w2 + l.k * l.h;
  }
  return l;
}

void check_features(const Model& model, std::size_t cols) {
  if (cols != model.spec.input_dim) throw ShapeError("feature dimension does not match model");
}

void standardize(const Model& model, std::span<const double> f, std::vector<double>& u) {
  u.resize(f.size());
  for (std::size_t j = 0; j < f.size(); ++j) u[j] = (f[j] - model.shift[j]) * model.scale[j];
}

// Dense layer y = W x + b with W (rows x cols) at theta[w], b at theta[b].
void dense(std::span<const double> theta, std::size_t w, std::size_t b, std::size_t rows,
           std::size_t cols, std::span<const double> x, std::span<double> y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = theta.data() + w + r * cols;
    double s = theta[b + r];
    for (std::size_t c = 0; c < cols; ++c) s += wr[c] * x[c];
    y[r] = s;
  }
}

}  // namespace

Model make_model(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.input_dim == 0 || spec.classes < 2) throw ShapeError("make_model: need input_dim >= 1 and K >= 2");
  if (spec.arch == Arch::mlp && spec.hidden_dim == 0) throw ShapeError("make_model: mlp needs hidden_dim >= 1");
  Model m;
  m.spec = spec;
  if (spec.arch == Arch::linear) m.spec.hidden_dim = 0;
  m.shift.assign(spec.input_dim, 0.0);
  m.scale.assign(spec.input_dim, 1.0);
  m.theta.assign(spec.parameter_count(), 0.0);

  std::mt19937_64 rng(seed);
  auto glorot = [&](std::size_t offset, std::size_t fan_out, std::size_t fan_in) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (std::size_t i = 0; i < fan_out * fan_in; ++i) m.theta[offset + i] = dist(rng);
  };
  const Layout l = layout_of(spec);
  if (spec.arch == Arch::linear) {
    glorot(l.w1, l.k, l.d);
  } else {
    glorot(l.w1, l.h, l.d);
    glorot(l.w2, l.k, l.h);
  }
  return m;
}

void fit_standardization(Model& model, const FeatureMatrix& features) {
  check_features(model, features.cols);
  if (features.rows == 0) throw EmptyInputError("fit_standardization: no rows");
  const double n = static_cast<double>(features.rows);
  for (std::size_t j = 0; j < features.cols; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < features.rows; ++i) mean += features.data[i * features.cols + j];
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < features.rows; ++i) {
      const double d = features.data[i * features.cols + j] - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / n);
    model.shift[j] = mean;
    model.scale[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
}

std::vector<double> forward(const Model& model, std::span<const double> features) {
  check_features(model, features.size());
  const Layout l = layout_of(model.spec);
  std::vector<double> u;
  standardize(model, features, u);
  std::vector<double> logits(l.k);
  if (model.spec.arch == Arch::linear) {
    dense(model.theta, l.w1, l.b1, l.k, l.d, u, logits);
  } else {
    std::vector<double> h(l.h);
    dense(model.theta, l.w1, l.b1, l.h, l.d, u, h);
    for (double& v : h) v = std::max(v, 0.0);
    dense(model.theta, l.w2, l.b2, l.k, l.h, h, logits);
  }
  return logits;
}

FeatureMatrix forward_batch(const Model& model, const FeatureMatrix& features) {
  check_features(model, features.cols);
  FeatureMatrix out(features.rows, model.spec.classes);
  for (std::size_t i = 0; i < features.rows; ++i) {
    const auto logits = forward(model, features.row(i));
    std::copy(logits.begin(), logits.end(), out.row(i).begin());
  }
  return out;
}

std::vector<double> backprop(const Model& model, const FeatureMatrix& features,
                             const FeatureMatrix& dlogits) {
  check_features(model, features.cols);
  const Layout l = layout_of(model.spec);
  if (dlogits.rows != features.rows || dlogits.cols != l.k)
    throw ShapeError("backprop: dlogits shape does not match batch");
  std::vector<double> grad(model.theta.size(), 0.0);
  std::vector<double> u, z(l.h), dz(l.h);
  for (std::size_t i = 0; i < features.rows; ++i) {
    standardize(model, features.row(i), u);
    const auto g = dlogits.row(i);
    if (model.spec.arch == Arch::linear) {
      for (std::size_t k = 0; k < l.k; ++k) {
        double* gw = grad.data() + l.w1 + k * l.d;
        for (std::size_t j = 0; j < l.d; ++j) gw[j] += g[k] * u[j];
        grad[l.b1 + k] += g[k];
      }
      continue;
    }
    dense(model.theta, l.w1, l.b1, l.h, l.d, u, z);
    for (std::size_t k = 0; k < l.k; ++k) {
      double* gw = grad.data() + l.w2 + k * l.h;
      for (std::size_t j = 0; j < l.h; ++j) gw[j] += g[k] * std::max(z[j], 0.0);
      grad[l.b2 + k] += g[k];
    }
    for (std::size_t j = 0; j < l.h; ++j) {
      if (z[j] <= 0.0) {
        dz[j] = 0.0;
        continue;
      }
      double s = 0.0;
      for (std::size_t k = 0; k < l.k; ++k) s += model.theta[l.w2 + k * l.h + j] * g[k];
      dz[j] = s;
    }
    for (std::size_t j = 0; j < l.h; ++j) {
      if (dz[j] == 0.0) continue;
      double* gw = grad.data() + l.w1 + j * l.d;
      for (std::size_t c = 0; c < l.d; ++c) gw[c] += dz[j] * u[c];
      grad[l.b1 + j] += dz[j];
    }
  }
  return grad;
}

std::vector<double> softmax_t(std::span<const double> logits, double temperature) {
  auto out = log_softmax_t(logits, temperature);
  for (double& v : out) v = std::exp(v);
  return out;
}

std::vector<double> log_softmax_t(std::span<const double> logits, double temperature) {
  const double mx = *std::max_element(logits.begin(), logits.end()) / temperature;
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l / temperature - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] / temperature - lse;
  return out;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

void adam_step(std::span<double> params, AdamState& s, std::span<const double> grads) {
  if (params.size() != grads.size() || s.m.size() != params.size() || s.v.size() != params.size())
    throw ShapeError("adam_step: parameter/gradient/moment sizes differ");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
    params[i] -= s.lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + s.eps);
  }
}

double cross_entropy_and_grad(const Model& model, const FeatureMatrix& features,
                              std::span<const int> labels, std::vector<double>* grad) {
  if (labels.size() != features.rows) throw LabelError("cross_entropy: label count != rows");
  const FeatureMatrix logits = forward_batch(model, features);
  const std::size_t k = model.spec.classes;
  const double inv_n = 1.0 / static_cast<double>(features.rows);
  FeatureMatrix dlogits(features.rows, k);
  double loss = 0.0;
  for (std::size_t i = 0; i < features.rows; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw LabelError("cross_entropy: label out of range");
    const auto logp = log_softmax_t(logits.row(i), 1.0);
    loss -= logp[static_cast<std::size_t>(y)];
    for (std::size_t c = 0; c < k; ++c)
      dlogits.row(i)[c] = (std::exp(logp[c]) - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0)) * inv_n;
  }
  if (grad) *grad = backprop(model, features, dlogits);
  return loss * inv_n;
}

void train_source(Model& model, const FeatureMatrix& features, std::span<const int> labels,
                  const TrainOptions& opts) {
  if (labels.size() != features.rows) throw LabelError("train_source: label count != rows");
  if (features.rows == 0) throw EmptyInputError("train_source: no training rows");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= model.spec.classes)
      throw LabelError("train_source: label out of range");
  fit_standardization(model, features);

  std::mt19937_64 rng(opts.seed);
  AdamState adam(model.theta.size(), opts.lr);
  std::vector<std::size_t> order(features.rows);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = std::max<std::size_t>(1, opts.batch_size);
  std::vector<double> grad;
  std::vector<int> batch_labels;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      FeatureMatrix batch(end - start, features.cols);
      batch_labels.resize(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const auto src = features.row(order[i]);
        std::copy(src.begin(), src.end(), batch.row(i - start).begin());
        batch_labels[i - start] = labels[order[i]];
      }
      cross_entropy_and_grad(model, batch, batch_labels, &grad);
      adam_step(model.theta, adam, grad);
    }
  }
}

void train_source(Model& model, const TrialBatch& batch, const TrainOptions& opts) {
  if (!batch.labeled()) throw LabelError("train_source: batch has no labels");
  batch.validate();
  const FeatureMatrix f = featurize_all(batch.trials, model.spec.featurizer);
  train_source(model, f, *batch.labels, opts);
}

namespace {
constexpr char kModelMagic[5] = "TTMD";
constexpr std::uint16_t kModelVersion = 1;
}  // namespace

void write_checkpoint(std::ostream& out, const Model& model) {
  binio::put_magic(out, kModelMagic);
  binio::put<std::uint16_t>(out, kModelVersion);
  binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(model.spec.featurizer));
  binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(model.spec.arch));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(model.spec.classes));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(model.spec.input_dim));
  if (model.spec.arch == Arch::mlp)
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(model.spec.hidden_dim));
  for (double v : model.shift) binio::put<double>(out, v);
  for (double v : model.scale) binio::put<double>(out, v);
  for (double v : model.theta) binio::put<double>(out, v);
  if (!out) throw FormatError("write_checkpoint: stream failure");
}

Model read_checkpoint(std::istream& in) {
  binio::expect_magic(in, kModelMagic);
  if (binio::get<std::uint16_t>(in) != kModelVersion) throw FormatError("checkpoint: unsupported version");
  ModelSpec spec;
  const auto f = binio::get<std::uint8_t>(in);
  const auto a = binio::get<std::uint8_t>(in);
  if (f > 1 || a > 1) throw FormatError("checkpoint: unknown featurizer or arch id");
  spec.featurizer = static_cast<Featurizer>(f);
  spec.arch = static_cast<Arch>(a);
  spec.classes = binio::get<std::uint32_t>(in);
  spec.input_dim = binio::get<std::uint32_t>(in);
  spec.hidden_dim = spec.arch == Arch::mlp ? binio::get<std::uint32_t>(in) : 0;
  if (spec.classes < 2 || spec.input_dim == 0) throw FormatError("checkpoint: bad dimensions");
  Model m;
  m.spec = spec;
  m.shift.resize(spec.input_dim);
  m.scale.resize(spec.input_dim);
  m.theta.resize(spec.parameter_count());
  for (double& v : m.shift) v = binio::get<double>(in);
  for (double& v : m.scale) v = binio::get<double>(in);
  for (double& v : m.theta) v = binio::get<double>(in);
  return m;
}

void save_checkpoint(const std::string& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path);
  write_checkpoint(out, model);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace ttime
