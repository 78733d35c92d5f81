#include "ttime/ttaloss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ttime/errors.hpp"

namespace ttime {

void TtaLossOptions::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (!(tau >= 0.5 && tau < 1.0)) throw ConfigError("tau must lie in [0.5, 1)");
  if (c < 1) throw ConfigError("c must be >= 1");
}

double neg_entropy(std::span<const double> p) {
  double s = 0.0;
  for (double v : p)
    if (v > 0.0) s += v * std::log(v);
  return s;
}

double cem_from_logits(const FeatureMatrix& logits, double temperature, FeatureMatrix* dlogits) {
  const std::size_t b = logits.rows, k = logits.cols;
  if (b == 0) throw EmptyInputError("cem: empty window");
  if (dlogits) *dlogits = FeatureMatrix(b, k);
  const double inv_b = 1.0 / static_cast<double>(b);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto lp = log_softmax_t(logits.row(i), temperature);
    double h = 0.0;
    for (double v : lp) h -= std::exp(v) * v;
    total += h;
    if (dlogits) {
      // dH/dl_k = -(1/T) p_k (ln p_k + H)
      for (std::size_t c = 0; c < k; ++c)
        dlogits->row(i)[c] = -inv_b / temperature * std::exp(lp[c]) * (lp[c] + h);
    }
  }
  return total * inv_b;
}

std::vector<int> class_frequency_from_logits(const FeatureMatrix& logits, double tau) {
  if (!(tau >= 0.5 && tau < 1.0)) throw ConfigError("class_frequency: tau must lie in [0.5, 1)");
  std::vector<int> z(logits.cols, 0);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const auto p = softmax_t(logits.row(i), 1.0);
    const std::size_t top = argmax(p);
    if (p[top] >= tau) ++z[top];
  }
  return z;
}

double mdr_from_logits(const FeatureMatrix& logits, std::span<const int> z, int c, double temperature,
                       FeatureMatrix* dlogits, BatchStats* stats) {
  const std::size_t b = logits.rows, k = logits.cols;
  if (b == 0) throw EmptyInputError("mdr: empty window");
  if (z.size() != k) throw ShapeError("mdr: z length != K");
  const double inv_b = 1.0 / static_cast<double>(b);

  std::vector<std::vector<double>> probs(b);
  std::vector<double> p_bar(k, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    probs[i] = softmax_t(logits.row(i), temperature);
    for (std::size_t j = 0; j < k; ++j) p_bar[j] += probs[i][j];
  }
  for (double& v : p_bar) v *= inv_b;

  std::vector<double> w(k), q(k), q_hat(k);
  double sum_q = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    w[j] = 1.0 / (static_cast<double>(c) + static_cast<double>(z[j]));
    q[j] = p_bar[j] * w[j];
    sum_q += q[j];
  }
  for (std::size_t j = 0; j < k; ++j) q_hat[j] = q[j] / sum_q;
  const double loss = neg_entropy(q_hat);

  if (dlogits) {
    // G_j = dL/dpbar_j = w_j (ln qhat_j - L) / sum_q
    std::vector<double> g(k);
    for (std::size_t j = 0; j < k; ++j) {
      const double lq = std::log(std::max(q_hat[j], std::numeric_limits<double>::min()));
      g[j] = w[j] * (lq - loss) / sum_q;
    }
    *dlogits = FeatureMatrix(b, k);
    for (std::size_t i = 0; i < b; ++i) {
      double mean_g = 0.0;
      for (std::size_t j = 0; j < k; ++j) mean_g += probs[i][j] * g[j];
      for (std::size_t j = 0; j < k; ++j)
        dlogits->row(i)[j] = inv_b / temperature * probs[i][j] * (g[j] - mean_g);
    }
  }
  if (stats) {
    stats->p_bar = p_bar;
    stats->z.assign(z.begin(), z.end());
    stats->q = q;
    stats->q_hat = q_hat;
  }
  return loss;
}

double cem_loss(const Model& model, const FeatureMatrix& window, double temperature) {
  return cem_from_logits(forward_batch(model, window), temperature);
}

std::vector<int> class_frequency(const Model& model, const FeatureMatrix& window, double tau) {
  return class_frequency_from_logits(forward_batch(model, window), tau);
}

double mdr_loss(const Model& model, const FeatureMatrix& window, std::span<const int> z, int c,
                double temperature) {
  return mdr_from_logits(forward_batch(model, window), z, c, temperature);
}

namespace {

double tta_terms(const FeatureMatrix& logits, bool cem, bool mdr, const TtaLossOptions& opts,
                 FeatureMatrix* dlogits, BatchStats* stats) {
  const double t = opts.effective_temperature();
  double loss = 0.0;
  if (dlogits) *dlogits = FeatureMatrix(logits.rows, logits.cols);
  FeatureMatrix part;
  if (cem) {
    loss += cem_from_logits(logits, t, dlogits ? &part : nullptr);
    if (dlogits)
      for (std::size_t i = 0; i < part.data.size(); ++i) dlogits->data[i] += part.data[i];
  }
  std::vector<int> z(logits.cols, 0);
  if (opts.recalibrate) z = class_frequency_from_logits(logits, opts.tau);
  if (mdr) {
    loss += mdr_from_logits(logits, z, opts.c, t, dlogits ? &part : nullptr, stats);
    if (dlogits)
      for (std::size_t i = 0; i < part.data.size(); ++i) dlogits->data[i] += part.data[i];
  } else if (stats) {
    mdr_from_logits(logits, z, opts.c, t, nullptr, stats);
  }
  return loss;
}

}  // namespace

double loss_and_grad(const Model& model, LossKind kind, const FeatureMatrix& features,
                     std::span<const int> labels, const TtaLossOptions& opts, std::vector<double>* grad) {
  if (kind == LossKind::cross_entropy) return cross_entropy_and_grad(model, features, labels, grad);
  const FeatureMatrix logits = forward_batch(model, features);
  const bool cem = kind == LossKind::cem || kind == LossKind::cem_mdr;
  const bool mdr = kind == LossKind::mdr || kind == LossKind::cem_mdr;
  FeatureMatrix dlogits;
  const double loss = tta_terms(logits, cem, mdr, opts, grad ? &dlogits : nullptr, nullptr);
  if (grad) *grad = backprop(model, features, dlogits);
  return loss;
}

UpdateResult ttime_update_step(Model& model, AdamState& adam, const FeatureMatrix& window,
                               const TtaLossOptions& opts) {
  opts.validate();
  UpdateResult result;
  const FeatureMatrix logits = forward_batch(model, window);
  FeatureMatrix dlogits;
  result.loss = tta_terms(logits, opts.use_cem, opts.use_mdr, opts, &dlogits, &result.stats);
  if (!opts.use_cem && !opts.use_mdr) return result;
  if (!std::isfinite(result.loss)) return result;
  const auto grad = backprop(model, window, dlogits);
  if (!std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); })) return result;

  std::vector<double> trial_theta = model.theta;
  AdamState trial_adam = adam;
  adam_step(trial_theta, trial_adam, grad);
  if (!std::all_of(trial_theta.begin(), trial_theta.end(), [](double v) { return std::isfinite(v); }))
    return result;
  model.theta = std::move(trial_theta);
  adam = std::move(trial_adam);
  result.applied = true;
  return result;
}

}  // namespace ttime
