#pragma once

// Univariate bandwidth predictors: history repeat, EWMA, harmonic mean and
// recursive least squares.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bwpredict/predictor.hpp"

namespace bwp {

inline constexpr double kHarmonicFloor = 1e-6;  // Mbps; traces contain zero-throughput seconds

inline double history_repeat(std::span<const double> history, std::size_t /*tau*/ = 1) {
  require(!history.empty(), ErrorKind::data, "history_repeat: empty history");
  return history.back();
}

inline double ewma_step(double prev, double observation, double alpha) {
  require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::config, "EWMA alpha must lie in [0,1]");
  return (1.0 - alpha) * prev + alpha * observation;
}

inline double harmonic_mean_predict(std::span<const double> history, std::size_t h) {
  require(h >= 1, ErrorKind::config, "harmonic mean order must be >= 1");
  require(h <= history.size(), ErrorKind::data,
          "harmonic mean order " + std::to_string(h) + " exceeds history length " + std::to_string(history.size()));
  double inv = 0;
  for (std::size_t k = history.size() - h; k < history.size(); ++k) inv += 1.0 / std::max(history[k], kHarmonicFloor);
  return static_cast<double>(h) / inv;
}

// ---------------------------------------------------------------------------
// RLS

struct RlsState {
  std::size_t order = 5;
  Vector weights;   // applied to the history, most recent first
  Matrix inverse;   // inverse correlation matrix P
  double lambda = 0.99;
  double delta = 0.01;

  static RlsState init(std::size_t order = 5, double lambda = 0.99, double delta = 0.01) {
    require(order >= 1, ErrorKind::config, "RLS order must be >= 1");
    require(lambda > 0.0 && lambda <= 1.0, ErrorKind::config, "RLS forgetting factor must lie in (0,1]");
    require(delta > 0.0, ErrorKind::config, "RLS regularization must be > 0");
    const auto n = static_cast<Eigen::Index>(order);
    return {order, Vector::Zero(n), Matrix::Identity(n, n) / delta, lambda, delta};
  }

  double predict(const Vector& regressor) const { return weights.dot(regressor); }

  // Standard exponentially weighted RLS step; P is re-symmetrized each call.
  void update(const Vector& regressor, double observation) {
    require(std::isfinite(observation), ErrorKind::data, "RLS: non-finite observation");
    require(regressor.size() == weights.size(), ErrorKind::shape, "RLS: regressor length mismatch");
    const Vector px = inverse * regressor;
    const double denom = lambda + regressor.dot(px);
    const Vector gain = px / denom;
    const double err = observation - weights.dot(regressor);
    weights += gain * err;
    inverse = (inverse - gain * px.transpose()) / lambda;
    inverse = 0.5 * (inverse + inverse.transpose()).eval();
  }
};

inline Vector most_recent_first(std::span<const double> history, std::size_t order) {
  require(history.size() >= order, ErrorKind::data,
          "RLS needs " + std::to_string(order) + " history values, got " + std::to_string(history.size()));
  Vector x(static_cast<Eigen::Index>(order));
  for (std::size_t k = 0; k < order; ++k) x(static_cast<Eigen::Index>(k)) = history[history.size() - 1 - k];
  return x;
}

// One-step prediction from `history` (oldest first, length h), followed by the
// update with the realized `observation`. The input state is left untouched.
inline std::pair<double, RlsState> rls_predict_update(const RlsState& state, std::span<const double> history,
                                                      double observation) {
  require(history.size() == state.order, ErrorKind::data, "RLS history length must equal the filter order");
  const Vector x = most_recent_first(history, state.order);
  const double prediction = state.predict(x);
  RlsState next = state;
  next.update(x, observation);
  return {prediction, std::move(next)};
}

// tau-step forecast by feeding one-step outputs back as history.
inline double rls_forecast(const RlsState& state, Vector regressor, std::size_t tau) {
  double y = 0;
  for (std::size_t s = 0; s < tau; ++s) {
    y = state.predict(regressor);
    for (Eigen::Index k = regressor.size() - 1; k > 0; --k) regressor(k) = regressor(k - 1);
    regressor(0) = y;
  }
  return y;
}

// ---------------------------------------------------------------------------
// Predictor adapters over the bandwidth column

namespace detail {
inline std::vector<double> column_of(const Matrix& window, std::size_t col) {
  require(static_cast<Eigen::Index>(col) < window.cols(), ErrorKind::shape, "window lacks the bandwidth column");
  std::vector<double> out(static_cast<std::size_t>(window.rows()));
  for (Eigen::Index r = 0; r < window.rows(); ++r) out[static_cast<std::size_t>(r)] = window(r, static_cast<Eigen::Index>(col));
  return out;
}
}  // namespace detail

class HistoryRepeatPredictor : public Predictor {
 public:
  HistoryRepeatPredictor(std::size_t bw_column, std::size_t horizon) : col_(bw_column), horizon_(horizon) {}
  std::string name() const override { return "history"; }
  std::size_t window() const override { return 1; }
  std::size_t horizon() const override { return horizon_; }
  double predict(const Matrix& window) override { return history_repeat(detail::column_of(window, col_), horizon_); }

 private:
  std::size_t col_, horizon_;
};

class EwmaPredictor : public Predictor {
 public:
  EwmaPredictor(double alpha, std::size_t bw_column, std::size_t horizon)
      : alpha_(alpha), col_(bw_column), horizon_(horizon) {
    require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::config, "EWMA alpha must lie in [0,1]");
  }
  std::string name() const override { return "ewma"; }
  std::size_t window() const override { return 1; }
  std::size_t horizon() const override { return horizon_; }
  double predict(const Matrix& window) override {
    const double obs = detail::column_of(window, col_).back();
    estimate_ = started_ ? ewma_step(estimate_, obs, alpha_) : obs;
    started_ = true;
    return estimate_;
  }
  void reset() override { started_ = false; }

 private:
  double alpha_;
  std::size_t col_, horizon_;
  double estimate_ = 0;
  bool started_ = false;
};

class HarmonicMeanPredictor : public Predictor {
 public:
  HarmonicMeanPredictor(std::size_t order, std::size_t bw_column, std::size_t horizon)
      : order_(order), col_(bw_column), horizon_(horizon) {}
  std::string name() const override { return "harmonic"; }
  std::size_t window() const override { return order_; }
  std::size_t horizon() const override { return horizon_; }
  double predict(const Matrix& window) override {
    return harmonic_mean_predict(detail::column_of(window, col_), order_);
  }

 private:
  std::size_t order_, col_, horizon_;
};

// Streaming RLS: each call first updates the filter with the newest sample
// (the outcome of the previous one-step regressor), then forecasts.
class RlsPredictor : public Predictor {
 public:
  RlsPredictor(std::size_t order, double lambda, double delta, std::size_t bw_column, std::size_t horizon)
      : initial_(RlsState::init(order, lambda, delta)), state_(initial_), col_(bw_column), horizon_(horizon) {}
  std::string name() const override { return "rls"; }
  std::size_t window() const override { return initial_.order + 1; }
  std::size_t horizon() const override { return horizon_; }

  double predict(const Matrix& window) override {
    const auto bw = detail::column_of(window, col_);
    require(bw.size() >= initial_.order + 1, ErrorKind::shape, "RLS window too short");
    const std::span<const double> all(bw);
    const Vector prev = most_recent_first(all.first(bw.size() - 1), initial_.order);
    state_.update(prev, bw.back());
    return rls_forecast(state_, most_recent_first(all, initial_.order), horizon_);
  }
  void reset() override { state_ = initial_; }
  const RlsState& state() const { return state_; }

 private:
  RlsState initial_;
  RlsState state_;
  std::size_t col_, horizon_;
};

}  // namespace bwp
