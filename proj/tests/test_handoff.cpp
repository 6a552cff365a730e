#include <gtest/gtest.h>

#include "bwpredict/handoff.hpp"
#include "bwpredict/synth.hpp"

using namespace bwp;

namespace {
// 5G-schema trace with the given mode sequence and smooth filler values.
Trace mode_trace(const std::vector<int>& modes) {
  std::vector<Sample> samples;
  for (std::size_t t = 0; t < modes.size(); ++t) {
    Sample s;
    s.t = static_cast<std::int64_t>(t);
    const double x = static_cast<double>(t % 17);
    s.values = {10 + x, 2 + x, -90, -10, -100, -110, -12, 10 + x, 5, double(modes[t]), 0, 40, 0};
    s.mode = modes[t];
    samples.push_back(s);
  }
  return Trace(FeatureSchema::nr5g12(), std::move(samples), "modes", 1, {{"NetworkMode", {"LTE", "5G"}}, {"CellID", {"a"}}});
}

std::vector<int> periodic_modes(std::size_t n, std::size_t period) {
  std::vector<int> m(n);
  for (std::size_t t = 0; t < n; ++t) m[t] = static_cast<int>((t / period) % 2);
  return m;
}

GbmSettings quick_gbm() {
  GbmSettings s;
  s.estimators = 40;
  s.max_depth = 3;
  return s;
}
}  // namespace

TEST(HandoffLabels, LookaheadWindow) {
  const std::vector<int> m{0, 0, 0, 0, 1, 1, 1, 1};
  EXPECT_EQ(label_binary(m, 0), 0);
  EXPECT_EQ(label_binary(m, 1), 1);
  EXPECT_EQ(label_binary(m, 2), 1);
  EXPECT_EQ(label_binary(m, 3), 1);
  EXPECT_EQ(label_binary(m, 4), 0);
  EXPECT_THROW(label_binary(m, 5), Error);
}

TEST(HandoffLabels, ShiftedByConstantPrefix) {
  const auto m = periodic_modes(60, 7);
  std::vector<int> shifted(5, m.front());
  shifted.insert(shifted.end(), m.begin(), m.end());
  for (std::size_t t = 0; t + 3 < m.size(); ++t) EXPECT_EQ(label_binary(m, t), label_binary(shifted, t + 5));
}

TEST(HandoffLabels, RhoIsFractionOfFiveG) {
  const std::vector<int> m{1, 1, 0, 0, 1, 0, 0, 0, 1};
  EXPECT_DOUBLE_EQ(*rho(m, 0), 3.0 / 8.0);
  EXPECT_DOUBLE_EQ(*rho(m, 1), 3.0 / 8.0);
  EXPECT_DOUBLE_EQ(*rho(m, 0, 2), 1.0);
  EXPECT_FALSE(rho(m, 2).has_value());
}

TEST(HandoffFeatures, SetSizes) {
  EXPECT_EQ(handoff_columns().size(), 13u);
  EXPECT_EQ(window_feature_names(5, FeatureSet::all).size(), 65u);
  EXPECT_EQ(window_feature_names(5, FeatureSet::bw_only).size(), 10u);
  EXPECT_EQ(window_feature_names(5, FeatureSet::without_bw).size(), 55u);
  EXPECT_EQ(window_feature_names(10, FeatureSet::all).size(), 130u);
  EXPECT_EQ(window_feature_names(5, FeatureSet::all).front(), "DL@t-4");
}

TEST(HandoffFeatures, SwitchFlagAndCellId) {
  const Trace tr = generate(default_5g_profile());
  const Matrix f = per_second_features(tr);
  const auto modes = tr.modes();
  ASSERT_EQ(f.cols(), 13);
  for (std::size_t t = 1; t < modes.size(); ++t)
    EXPECT_EQ(f(static_cast<Eigen::Index>(t), 12), modes[t] != modes[t - 1] ? 1.0 : 0.0);
  EXPECT_EQ(f(95, 10), tr[95].values[tr.schema().index_of("CellID")]);
}

TEST(HandoffDataset, BalancedAndLabelled) {
  const Trace tr = generate(default_5g_profile());
  BinaryDatasetConfig cfg;
  const auto ds = build_binary_dataset(tr, cfg);
  EXPECT_EQ(ds.switches, 40u);
  EXPECT_EQ(ds.positives, 120u);
  EXPECT_EQ(ds.negatives, ds.positives);
  const auto modes = tr.modes();
  for (const auto& s : ds.samples) {
    EXPECT_EQ(s.label, label_binary(modes, s.t));
    EXPECT_EQ(s.mode, modes[s.t]);
    EXPECT_EQ(s.features.size(), 65u);
  }
  const auto again = build_binary_dataset(tr, cfg);
  ASSERT_EQ(again.samples.size(), ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) EXPECT_EQ(again.samples[i].t, ds.samples[i].t);
}

TEST(HandoffDataset, PositiveCap) {
  BinaryDatasetConfig cfg;
  cfg.positive_cap = 20;
  const auto ds = build_binary_dataset(generate(default_5g_profile()), cfg);
  EXPECT_EQ(ds.positives, 20u);
  EXPECT_EQ(ds.negatives, 20u);
}

TEST(HandoffDataset, TooFewNegatives) {
  try {
    build_binary_dataset(mode_trace(periodic_modes(80, 2)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
    EXPECT_NE(std::string(e.what()).find("negatives"), std::string::npos);
  }
}

TEST(HandoffDataset, DirectionsPartition) {
  const auto ds = build_binary_dataset(generate(default_5g_profile()));
  const auto d = split_by_direction(ds.samples);
  EXPECT_EQ(d.from_5g.size() + d.from_4g.size(), ds.samples.size());
  for (const auto& s : d.from_5g) EXPECT_EQ(s.mode, 1);
  for (const auto& s : d.from_4g) EXPECT_EQ(s.mode, 0);
}

TEST(HandoffTraining, RateSelectionPrefersSmallerOnTie) {
  const auto sel = select_learning_rate({0.5, 0.1, 0.25}, [](double r) {
    return KFoldResult{{r >= 0.25 ? 0.9 : 0.8}, r >= 0.25 ? 0.9 : 0.8};
  });
  EXPECT_DOUBLE_EQ(sel.learning_rate, 0.25);
  ASSERT_EQ(sel.table.size(), 3u);
  EXPECT_DOUBLE_EQ(sel.table.front().learning_rate, 0.1);
}

TEST(HandoffTraining, LearnsSyntheticSwitches) {
  const auto ds = build_binary_dataset(generate(default_5g_profile()));
  const auto split = shuffle_split(ds.samples, 0.7, 0);
  const auto res = train_binary(split.train, quick_gbm(), 3, {0.1, 0.5});
  const auto rep = evaluate_classifier(res.model, split.test);
  EXPECT_GT(rep.accuracy, 0.8);
  ASSERT_TRUE(rep.auc.has_value());
  EXPECT_GT(*rep.auc, 0.85);
}

TEST(HandoffTraining, SeparatedNeedsBothLabels) {
  auto ds = build_binary_dataset(generate(default_5g_profile()));
  std::vector<HandoffSample> only;
  for (const auto& s : ds.samples)
    if (s.mode == 0 || s.label == 0) only.push_back(s);
  try {
    train_separated(only, quick_gbm(), 3, {0.1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
    EXPECT_NE(std::string(e.what()).find("5G->4G"), std::string::npos);
  }
}

TEST(HandoffContinuous, TargetsAndClamping) {
  const auto ds = build_continuous_dataset(generate(default_5g_profile()));
  EXPECT_EQ(ds.samples.size(), 4800u - 9u - 8u);
  for (const auto& s : ds.samples) {
    EXPECT_DOUBLE_EQ(s.label * 8, std::round(s.label * 8));
    EXPECT_EQ(s.features.size(), 130u);
  }
  const auto split = contiguous_split(ds.samples, 0.7);
  EXPECT_LT(split.train.back().t, split.test.front().t);
  const auto model = train_continuous(split.train, quick_gbm());
  const auto ev = evaluate_continuous(model, split.test);
  for (double p : ev.predictions) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
  EXPECT_FALSE(ev.boxes.empty());
  EXPECT_LT(ev.report.rmse, 0.3);
}
