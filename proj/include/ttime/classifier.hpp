#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ttime/alignment.hpp"

namespace ttime {

enum class Featurizer : std::uint8_t { log_variance = 0, covariance_flatten = 1 };
enum class Arch : std::uint8_t { linear = 0, mlp = 1 };

std::string to_string(Featurizer f);
std::string to_string(Arch a);
Featurizer parse_featurizer(const std::string& s);
Arch parse_arch(const std::string& s);

std::size_t feature_dim(Featurizer kind, std::size_t channels);

/// log-variance: ln(var(x_c) + 1e-8) per channel (population variance).
/// covariance-flatten: upper triangle of (1/ts) X X^T, row by row, with the
/// off-diagonal entries scaled by sqrt(2) so the Euclidean norm matches the
/// Frobenius norm of the full matrix.
std::vector<double> featurize(const Trial& x, Featurizer kind);

/// Row-major n x d block of feature vectors.
using FeatureMatrix = Matrix;

FeatureMatrix featurize_all(std::span<const Trial> trials, Featurizer kind);

struct ModelSpec {
  Featurizer featurizer = Featurizer::log_variance;
  Arch arch = Arch::mlp;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 32;
  std::size_t classes = 2;

  std::size_t parameter_count() const;
  bool operator==(const ModelSpec&) const = default;
};

/// One ensemble member. The feature standardization (shift, scale) is fitted
/// once on the source features and stays frozen; every entry of theta is
/// trainable.
///
/// theta layout, in declaration order:
///   linear: W (K x d), b (K)
///   mlp:    W1 (H x d), b1 (H), W2 (K x H), b2 (K)
struct Model {
  ModelSpec spec;
  std::vector<double> shift;
  std::vector<double> scale;
  std::vector<double> theta;

  bool operator==(const Model&) const = default;
};

/// Glorot-uniform weights (+-sqrt(6 / (fan_in + fan_out))), zero biases,
/// identity standardization.
Model make_model(const ModelSpec& spec, std::uint64_t seed);

/// Fits shift = mean, scale = 1/std per feature column (scale 1 for
/// constant columns).
void fit_standardization(Model& model, const FeatureMatrix& features);

/// Logits for one feature vector. Throws ShapeError on dim mismatch.
std::vector<double> forward(const Model& model, std::span<const double> features);

/// Logits for every row, n x K.
FeatureMatrix forward_batch(const Model& model, const FeatureMatrix& features);

/// Reverse pass: given dL/dlogits (n x K) for the rows of `features`,
/// returns dL/dtheta.
std::vector<double> backprop(const Model& model, const FeatureMatrix& features,
                             const FeatureMatrix& dlogits);

/// Temperature-scaled softmax, max-subtracted.
std::vector<double> softmax_t(std::span<const double> logits, double temperature = 1.0);
/// ln of softmax_t, via log-sum-exp.
std::vector<double> log_softmax_t(std::span<const double> logits, double temperature = 1.0);

std::size_t argmax(std::span<const double> v);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double learning_rate) : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}
  bool operator==(const AdamState&) const = default;
};

/// Bias-corrected Adam update of params in place. Throws ShapeError.
void adam_step(std::span<double> params, AdamState& state, std::span<const double> grads);

/// Mean cross-entropy of the rows against labels, and its theta gradient.
double cross_entropy_and_grad(const Model& model, const FeatureMatrix& features,
                              std::span<const int> labels, std::vector<double>* grad);

struct TrainOptions {
  int epochs = 100;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

/// Fits standardization, then minibatch Adam on cross-entropy. Shuffling is
/// driven only by opts.seed. Throws LabelError for an unlabeled batch or a
/// label outside [0, K).
void train_source(Model& model, const FeatureMatrix& features, std::span<const int> labels,
                  const TrainOptions& opts);
void train_source(Model& model, const TrialBatch& batch, const TrainOptions& opts);

/// "TTMD" checkpoint, little-endian. Throws FormatError on a bad stream.
void write_checkpoint(std::ostream& out, const Model& model);
Model read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

}  // namespace ttime
