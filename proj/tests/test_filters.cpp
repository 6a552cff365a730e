#include <gtest/gtest.h>

#include <random>

#include <Eigen/Cholesky>

#include "bwpredict/filters.hpp"

using namespace bwp;

TEST(HistoryRepeat, ReturnsLastValue) {
  std::vector<double> h{3.0, 7.5};
  EXPECT_EQ(history_repeat(h, 1), 7.5);
  EXPECT_EQ(history_repeat(h, 3), 7.5);
  EXPECT_THROW(history_repeat(std::vector<double>{}, 1), Error);
}

TEST(Ewma, Arithmetic) {
  EXPECT_EQ(ewma_step(4, 8, 1), 8);
  EXPECT_EQ(ewma_step(4, 8, 0), 4);
  EXPECT_EQ(ewma_step(4, 8, 0.5), 6);
  try {
    ewma_step(4, 8, 1.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}

TEST(Ewma, AlphaOneAgreesWithHistoryRepeat) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 50);
  EwmaPredictor ewma(1.0, 0, 1);
  HistoryRepeatPredictor hist(0, 1);
  for (int i = 0; i < 100; ++i) {
    Matrix w(1, 1);
    w(0, 0) = u(rng);
    EXPECT_EQ(ewma.predict(w), hist.predict(w));
  }
}

TEST(Harmonic, Examples) {
  EXPECT_NEAR(harmonic_mean_predict(std::vector<double>{10, 10, 10}, 3), 10, 1e-12);
  EXPECT_NEAR(harmonic_mean_predict(std::vector<double>{5, 20}, 2), 8, 1e-12);
  EXPECT_LT(harmonic_mean_predict(std::vector<double>{0, 10}, 2), 0.01);
  EXPECT_THROW(harmonic_mean_predict(std::vector<double>{1, 2}, 3), Error);
}

TEST(Harmonic, BelowArithmeticMean) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.1, 40);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(5);
    for (double& x : v) x = u(rng);
    double mean = 0;
    for (double x : v) mean += x / 5;
    EXPECT_LE(harmonic_mean_predict(v, 5), mean + 1e-12);
  }
}

TEST(Rls, LearnsNoiselessRecursion) {
  // The recursion is exactly representable, so with a negligible prior the
  // filter recovers it; at delta = 0.01 the prior bias alone is ~1e-4 here.
  RlsState st = RlsState::init(5, 1.0, 1e-8);
  std::vector<double> seq{1.0, 3.0, -2.0, 4.0, 0.5};
  for (int i = 0; i < 205; ++i) seq.push_back(0.5 * seq[seq.size() - 1] + 0.5 * seq[seq.size() - 2]);
  double last_err = 0;
  for (std::size_t t = 5; t < seq.size(); ++t) {
    auto [pred, next] = rls_predict_update(st, std::span<const double>(seq.data() + t - 5, 5), seq[t]);
    last_err = std::abs(pred - seq[t]);
    st = std::move(next);
  }
  EXPECT_LT(last_err, 1e-6);
}

TEST(Rls, ConstantSequenceConverges) {
  // Default filter; the delta prior biases the constant fit by roughly
  // delta * lambda^n / (h * c * sum lambda^k), under 1e-6 for bandwidth-scale c.
  RlsState st = RlsState::init(5, 0.99, 0.01);
  std::vector<double> seq(200, 20.63);
  double pred = 0;
  for (std::size_t t = 5; t < 105; ++t) {
    auto r = rls_predict_update(st, std::span<const double>(seq.data() + t - 5, 5), seq[t]);
    pred = r.first;
    st = std::move(r.second);
  }
  EXPECT_NEAR(pred, 20.63, 1e-6);
}

namespace {
// Regularized batch least squares matching the RLS initialization.
Vector ols_oracle(const std::vector<double>& seq, std::size_t h, double delta) {
  Matrix A = Matrix::Identity(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(h)) * delta;
  Vector rhs = Vector::Zero(static_cast<Eigen::Index>(h));
  for (std::size_t t = h; t < seq.size(); ++t) {
    const Vector x = most_recent_first(std::span<const double>(seq.data() + t - h, h), h);
    A += x * x.transpose();
    rhs += x * seq[t];
  }
  return A.ldlt().solve(rhs);
}
}  // namespace

TEST(Rls, MatchesLeastSquaresOnEveryPrefix) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(10, 3);
  std::vector<double> seq(120);
  for (double& x : seq) x = g(rng);
  RlsState st = RlsState::init(5, 1.0, 1e-8);
  for (std::size_t t = 5; t < seq.size(); ++t) {
    st = rls_predict_update(st, std::span<const double>(seq.data() + t - 5, 5), seq[t]).second;
    if (t >= 30) {
      const Vector oracle = ols_oracle(std::vector<double>(seq.begin(), seq.begin() + static_cast<long>(t) + 1), 5, 1e-8);
      EXPECT_LT((st.weights - oracle).cwiseAbs().maxCoeff(), 1e-5) << "prefix " << t;
    }
  }
}

TEST(Rls, InverseStaysSymmetricPositiveDefinite) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(10, 3);
  RlsState st = RlsState::init();
  std::vector<double> seq(10005);
  for (double& x : seq) x = g(rng);
  for (std::size_t t = 5; t < seq.size(); ++t) st.update(most_recent_first(std::span<const double>(seq.data() + t - 5, 5), 5), seq[t]);
  EXPECT_LT((st.inverse - st.inverse.transpose()).cwiseAbs().maxCoeff(), 1e-10);
  Eigen::LLT<Matrix> llt(st.inverse);
  EXPECT_EQ(llt.info(), Eigen::Success);
}

TEST(Rls, NonFiniteObservationLeavesStateUnchanged) {
  RlsState st = RlsState::init();
  std::vector<double> h{1, 2, 3, 4, 5};
  st = rls_predict_update(st, h, 6).second;
  const RlsState before = st;
  EXPECT_THROW(st.update(most_recent_first(h, 5), std::nan("")), Error);
  EXPECT_EQ(st.weights, before.weights);
  EXPECT_EQ(st.inverse, before.inverse);
}

TEST(Rls, MultiStepIteratesOneStepFilter) {
  RlsState st = RlsState::init(2, 1.0, 0.01);
  st.weights = Vector(2);
  st.weights << 0.5, 0.25;
  Vector x(2);
  x << 4, 2;
  const double one = st.predict(x);
  Vector x2(2);
  x2 << one, 4;
  EXPECT_DOUBLE_EQ(rls_forecast(st, x, 2), st.predict(x2));
}

TEST(Predictors, WindowsAndNames) {
  RlsPredictor rls(5, 0.99, 0.01, 0, 1);
  EXPECT_EQ(rls.window(), 6u);
  HarmonicMeanPredictor hm(5, 0, 2);
  Matrix w = Matrix::Constant(5, 2, 4.0);
  EXPECT_NEAR(hm.predict(w), 4.0, 1e-12);
  EXPECT_EQ(hm.horizon(), 2u);
}
