#include "ttime/alignment.hpp"

#include <algorithm>
#include <cmath>

#include "ttime/errors.hpp"

namespace ttime {

Trial::Trial(std::size_t ch, std::size_t ts) : ch_(ch), ts_(ts), data_(ch * ts, 0.0) {
  if (ch < 1 || ts < 2) throw ShapeError("Trial: need ch >= 1 and ts >= 2");
}

Trial::Trial(std::size_t ch, std::size_t ts, std::vector<double> data)
    : ch_(ch), ts_(ts), data_(std::move(data)) {
  if (ch < 1 || ts < 2) throw ShapeError("Trial: need ch >= 1 and ts >= 2");
  if (data_.size() != ch * ts) throw ShapeError("Trial: data size != ch * ts");
  if (!std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); }))
    throw NumericalError("Trial: non-finite sample");
}

SymMatrix Trial::outer() const {
  SymMatrix r(ch_);
  for (std::size_t i = 0; i < ch_; ++i) {
    const double* xi = data_.data() + i * ts_;
    for (std::size_t j = i; j < ch_; ++j) {
      const double* xj = data_.data() + j * ts_;
      double s = 0.0;
      for (std::size_t t = 0; t < ts_; ++t) s += xi[t] * xj[t];
      r.set(i, j, s);
    }
  }
  return r;
}

Trial& Trial::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

void TrialBatch::validate() const {
  if (labels && labels->size() != trials.size())
    throw ShapeError("TrialBatch: label count != trial count");
  for (const auto& t : trials) {
    if (t.channels() != trials.front().channels() || t.samples() != trials.front().samples())
      throw ShapeError("TrialBatch: trials with differing (ch, ts)");
  }
}

Trial apply_whitener(const SymMatrix& w, const Trial& x) {
  if (w.dim() != x.channels()) throw ShapeError("apply_whitener: whitener dim != channels");
  Trial out(x.channels(), x.samples());
  matmul(w.entries(), x.data(), out.data(), x.channels(), x.channels(), x.samples());
  return out;
}

namespace {

SymMatrix divided(SymMatrix sum, std::size_t n) {
  const double inv = 1.0 / static_cast<double>(n);
  sum *= inv;
  return sum;
}

}  // namespace

SymMatrix mean_covariance(const TrialBatch& batch) {
  if (batch.empty()) throw EmptyInputError("mean_covariance: empty batch");
  batch.validate();
  SymMatrix sum = batch.trials.front().outer();
  for (std::size_t i = 1; i < batch.size(); ++i) sum += batch.trials[i].outer();
  return divided(std::move(sum), batch.size());
}

TrialBatch align_offline(const TrialBatch& batch, double floor, Exec exec) {
  const SymMatrix r = mean_covariance(batch);
  const SymMatrix w = inv_sqrt(r, floor > 0.0 ? floor : relative_floor(r));

  TrialBatch out;
  out.labels = batch.labels;
  out.subject_id = batch.subject_id;
  out.trials.reserve(batch.size());
  for (const auto& t : batch.trials) out.trials.emplace_back(t.channels(), t.samples());
  for_each_index(exec, batch.size(), [&](std::size_t i) {
    out.trials[i] = apply_whitener(w, batch.trials[i]);
  });
  return out;
}

void RunningCovariance::update(const Trial& x) {
  if (sum_) {
    if (x.channels() != sum_->dim() || x.samples() != samples_)
      throw ShapeError("RunningCovariance: trial dims differ from stream");
    *sum_ += x.outer();
  } else {
    sum_ = x.outer();
    samples_ = x.samples();
  }
  ++count_;
  whitener_.reset();
}

SymMatrix RunningCovariance::mean() const {
  if (count_ == 0) throw StateError("RunningCovariance: no trials seen");
  return divided(*sum_, count_);
}

const SymMatrix& RunningCovariance::whitener() const {
  if (count_ == 0) throw StateError("RunningCovariance: no trials seen");
  if (!whitener_) {
    const SymMatrix r = mean();
    whitener_ = inv_sqrt(r, floor_ > 0.0 ? floor_ : relative_floor(r));
  }
  return *whitener_;
}

Trial RunningCovariance::transform(const Trial& x) const {
  return apply_whitener(whitener(), x);
}

void RunningCovariance::reset() {
  sum_.reset();
  whitener_.reset();
  count_ = 0;
  samples_ = 0;
}

}  // namespace ttime
