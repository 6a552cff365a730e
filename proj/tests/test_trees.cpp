#include <gtest/gtest.h>

#include <random>

#include "bwpredict/metrics.hpp"
#include "bwpredict/trees.hpp"

using namespace bwp;

namespace {
Matrix random_matrix(Eigen::Index n, Eigen::Index f, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix X(n, f);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < f; ++j) X(i, j) = g(rng);
  return X;
}

std::size_t min_leaf_size(const Tree& t, const Matrix& X) {
  std::vector<std::size_t> counts(t.nodes.size(), 0);
  for (Eigen::Index i = 0; i < X.rows(); ++i) ++counts[t.leaf_index(X.row(i))];
  std::size_t m = X.rows();
  for (std::size_t k = 0; k < t.nodes.size(); ++k)
    if (t.nodes[k].feature < 0) m = std::min(m, counts[k]);
  return m;
}
}  // namespace

TEST(Cart, ConstantTargetIsSingleLeaf) {
  const Matrix X = random_matrix(30, 3, 1);
  const Vector y = Vector::Constant(30, 4.25);
  const Tree t = cart_fit(X, y);
  ASSERT_EQ(t.nodes.size(), 1u);
  EXPECT_DOUBLE_EQ(t.nodes[0].value, 4.25);
}

TEST(Cart, StepFunctionSplitsOnce) {
  Matrix X(6, 1);
  X << 0, 0, 0, 1, 1, 1;
  Vector y(6);
  y << 0, 0, 0, 1, 1, 1;
  const Tree t = cart_fit(X, y);
  EXPECT_EQ(t.depth(), 1u);
  EXPECT_GT(t.nodes[0].threshold, 0.0);
  EXPECT_LT(t.nodes[0].threshold, 1.0);
  for (Eigen::Index i = 0; i < 6; ++i) EXPECT_EQ(t.predict(X.row(i)), y(i));
}

TEST(Cart, MemorizesRandomData) {
  const Matrix X = random_matrix(50, 3, 2);
  const Vector y = random_matrix(50, 1, 3).col(0);
  const Tree t = cart_fit(X, y, CartSettings{kUnlimitedDepth, 2, 1, 0, 0});
  for (Eigen::Index i = 0; i < 50; ++i) EXPECT_DOUBLE_EQ(t.predict(X.row(i)), y(i));
}

TEST(Cart, TiesPreferLowestFeature) {
  Matrix X(4, 2);
  X << 0, 0, 0, 0, 1, 1, 1, 1;
  Vector y(4);
  y << 0, 0, 1, 1;
  const Tree t = cart_fit(X, y);
  EXPECT_EQ(t.nodes[0].feature, 0);
}

TEST(Cart, RespectsMinLeaf) {
  const Matrix X = random_matrix(200, 4, 5);
  const Vector y = random_matrix(200, 1, 6).col(0);
  for (std::size_t leaf : {1u, 3u, 7u}) {
    const Tree t = cart_fit(X, y, CartSettings{kUnlimitedDepth, 2, leaf, 0, 0});
    EXPECT_GE(min_leaf_size(t, X), leaf);
  }
}

TEST(Cart, EmptyInputThrows) {
  EXPECT_THROW(cart_fit(Matrix(0, 2), Vector(0)), Error);
  Matrix X = random_matrix(5, 2, 1);
  X(2, 1) = std::nan("");
  EXPECT_THROW(cart_fit(X, Vector::Zero(5)), Error);
}

TEST(Forest, ConstantTarget) {
  const Matrix X = random_matrix(40, 3, 7);
  ForestSettings s;
  s.trees = 20;
  const auto ens = rf_fit(X, Vector::Constant(40, 2.5), s);
  EXPECT_DOUBLE_EQ(rf_predict(ens, Vector::Constant(3, 10.0)), 2.5);
}

TEST(Forest, LinearTarget) {
  const Matrix X = random_matrix(1200, 3, 8);
  const Vector y = 3.0 * X.col(0);
  ForestSettings s;
  s.trees = 100;
  const auto ens = rf_fit(X.topRows(1000), y.head(1000), s);
  std::vector<double> pred, truth;
  for (Eigen::Index i = 1000; i < 1200; ++i) {
    pred.push_back(rf_predict(ens, X.row(i)));
    truth.push_back(y(i));
  }
  const double sd = std_of(std::vector<double>(y.data(), y.data() + y.size()));
  EXPECT_LT(regression_metrics(pred, truth).rmse, 0.2 * sd);
}

TEST(Forest, DeterministicAcrossThreadCounts) {
  const Matrix X = random_matrix(300, 5, 9);
  const Vector y = X.col(1) + 0.1 * X.col(3);
  ForestSettings s;
  s.trees = 40;
  s.threads = 1;
  const auto a = rf_fit(X, y, s);
  s.threads = 4;
  const auto b = rf_fit(X, y, s);
  EXPECT_EQ(ensemble_to_json(a).dump(), ensemble_to_json(b).dump());
}

TEST(Forest, TreeOrderDoesNotMatter) {
  const Matrix X = random_matrix(100, 3, 10);
  ForestSettings s;
  s.trees = 15;
  auto ens = rf_fit(X, X.col(0), s);
  const double before = rf_predict(ens, X.row(4));
  std::reverse(ens.trees.begin(), ens.trees.end());
  EXPECT_NEAR(rf_predict(ens, X.row(4)), before, 1e-12);
}

TEST(Forest, ImportancesSumToOne) {
  const Matrix X = random_matrix(400, 4, 11);
  ForestSettings s;
  s.trees = 50;
  const auto ens = rf_fit(X, 2.0 * X.col(2), s);
  double total = 0;
  for (double v : ens.importances) total += v;
  EXPECT_NEAR(total, 1.0, 1e-9);
  EXPECT_GT(ens.importances[2], 0.5);
}

TEST(Gbm, SeparableClassifier) {
  const Matrix X = random_matrix(200, 2, 12);
  Vector y(200);
  for (Eigen::Index i = 0; i < 200; ++i) y(i) = X(i, 0) + X(i, 1) > 0 ? 1 : 0;
  GbmSettings s;
  s.estimators = 100;
  s.learning_rate = 0.1;
  const auto ens = gbm_fit_classifier(X, y, s);
  for (Eigen::Index i = 0; i < 200; ++i) EXPECT_EQ(gbm_predict_proba(ens, X.row(i)) >= 0.5 ? 1 : 0, y(i));
}

TEST(Gbm, Xor) {
  Matrix X(4, 2);
  X << 0, 0, 0, 1, 1, 0, 1, 1;
  Vector y(4);
  y << 0, 1, 1, 0;
  GbmSettings s;
  s.estimators = 50;
  s.learning_rate = 0.5;
  s.max_depth = 2;
  const auto ens = gbm_fit_classifier(X, y, s);
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_EQ(gbm_predict_proba(ens, X.row(i)) >= 0.5 ? 1 : 0, y(i));
}

TEST(Gbm, SingleClassThrows) {
  EXPECT_THROW(gbm_fit_classifier(random_matrix(10, 2, 1), Vector::Ones(10)), Error);
}

TEST(Gbm, LossesNeverIncrease) {
  const Matrix X = random_matrix(300, 3, 13);
  Vector yc(300), yr(300);
  std::mt19937_64 rng(14);
  std::bernoulli_distribution flip(0.2);
  for (Eigen::Index i = 0; i < 300; ++i) {
    yc(i) = ((X(i, 0) > 0) != flip(rng)) ? 1 : 0;
    yr(i) = std::sin(X(i, 1)) + 0.3 * X(i, 2);
  }
  GbmSettings s;
  s.estimators = 100;
  s.learning_rate = 0.5;
  for (const auto& ens : {gbm_fit_classifier(X, yc, s), gbm_fit_regressor(X, yr, s)}) {
    ASSERT_EQ(ens.stage_loss.size(), 101u);
    for (std::size_t k = 1; k < ens.stage_loss.size(); ++k)
      EXPECT_LE(ens.stage_loss[k], ens.stage_loss[k - 1] * (1 + 1e-12));
  }
}

TEST(Gbm, RegressorFitsIdentity) {
  Matrix X(100, 1);
  Vector y(100);
  for (int i = 0; i < 100; ++i) X(i, 0) = y(i) = i / 10.0;
  GbmSettings s;
  s.learning_rate = 0.1;
  const auto ens = gbm_fit_regressor(X, y, s);
  std::vector<double> pred = predict_rows(ens, X);
  std::vector<double> truth(y.data(), y.data() + 100);
  EXPECT_LT(regression_metrics(pred, truth).rmse, 0.05 * std_of(truth));
}

TEST(Gbm, ZeroLearningRatePredictsInitialScore) {
  const Matrix X = random_matrix(50, 2, 15);
  GbmSettings s;
  s.estimators = 10;
  s.learning_rate = 0;
  const Vector y = X.col(0);
  const auto ens = gbm_fit_regressor(X, y, s);
  for (Eigen::Index i = 0; i < 50; ++i) EXPECT_DOUBLE_EQ(gbm_predict(ens, X.row(i)), y.mean());
}

TEST(Gbm, ConstantRegressionTarget) {
  const auto ens = gbm_fit_regressor(random_matrix(20, 2, 16), Vector::Constant(20, 0.75), GbmSettings{});
  EXPECT_DOUBLE_EQ(gbm_predict(ens, Vector::Zero(2)), 0.75);
}

TEST(Ensemble, JsonRoundTrip) {
  const Matrix X = random_matrix(80, 3, 17);
  Vector y(80);
  for (Eigen::Index i = 0; i < 80; ++i) y(i) = X(i, 0) > 0.2 ? 1 : 0;
  GbmSettings s;
  s.estimators = 20;
  const auto ens = gbm_fit_classifier(X, y, s);
  const auto back = ensemble_from_json(Json::parse(ensemble_to_json(ens).dump()));
  for (Eigen::Index i = 0; i < 80; ++i) EXPECT_EQ(gbm_predict_proba(back, X.row(i)), gbm_predict_proba(ens, X.row(i)));
  Json bad = ensemble_to_json(ens);
  bad["version"] = 99;
  try {
    ensemble_from_json(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::version);
  }
}
