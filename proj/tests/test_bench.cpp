#include <gtest/gtest.h>

#include "bwpredict/bench.hpp"
#include "bwpredict/synth.hpp"

using namespace bwp;

namespace {
Trace short_lte(int trips = 2) {
  RouteProfile p = default_lte_profile();
  p.trip_count = trips;
  return generate(p);
}

BenchConfig tiny_config() {
  BenchConfig c;
  c.horizons = {1, 2};
  c.train.layers = 1;
  c.train.units = 4;
  c.train.filters = 3;
  c.train.max_epochs = 2;
  c.forest.trees = 10;
  c.forest.max_depth = 4;
  return c;
}
}  // namespace

TEST(Bench, RejectsEmptyPredictorList) {
  BenchConfig c = tiny_config();
  c.predictors.clear();
  try {
    run_bench({short_lte()}, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}

TEST(Bench, RejectsUnknownPredictor) {
  BenchConfig c = tiny_config();
  c.predictors = {"history", "oracle"};
  EXPECT_THROW(run_bench({short_lte()}, c), Error);
}

TEST(Bench, EveryCellPresent) {
  const auto table = run_bench({short_lte()}, tiny_config());
  EXPECT_EQ(table.cells.size(), bench_predictor_names().size() * 2);
  for (const auto& p : bench_predictor_names())
    for (std::size_t h : {1u, 2u}) {
      const auto& c = table.cell("synthetic-lte", p, h);
      ASSERT_TRUE(c.report.has_value()) << p << " " << c.error;
      EXPECT_EQ(c.extra, p == "ewma" || p == "harmonic");
      EXPECT_EQ(c.report->horizon, h);
    }
}

TEST(Bench, CommonTargetsAcrossPredictors) {
  const auto table = run_bench({short_lte()}, tiny_config());
  for (std::size_t h : {1u, 2u}) {
    const auto& ref = table.cell("synthetic-lte", "history", h).targets;
    for (const auto& p : bench_predictor_names()) EXPECT_EQ(table.cell("synthetic-lte", p, h).targets, ref);
  }
}

TEST(Bench, HistoryCellMatchesDirectComputation) {
  const Trace tr = short_lte();
  BenchConfig c = tiny_config();
  c.predictors = {"history"};
  const auto table = run_bench({tr}, c);
  const auto& cell = table.cell(tr.route_id(), "history", 2);
  std::vector<double> pred, truth;
  for (auto t : cell.targets) {
    pred.push_back(tr[t].values[0]);
    truth.push_back(tr[t + 2].values[0]);
  }
  EXPECT_DOUBLE_EQ(cell.report->rmse, regression_metrics(pred, truth).rmse);
  EXPECT_EQ(cell.targets.front(), table.traces[0].test_start + 4);
  EXPECT_EQ(cell.targets.back() + 2, tr.size() - 1);
}

TEST(Bench, TestSplitHeader) {
  const Trace tr = short_lte();
  BenchConfig c = tiny_config();
  c.predictors = {"history"};
  const auto table = run_bench({tr}, c);
  std::vector<double> test;
  for (std::size_t i = 840; i < tr.size(); ++i) test.push_back(tr[i].values[0]);
  EXPECT_EQ(table.traces[0].test_start, 840u);
  EXPECT_DOUBLE_EQ(table.traces[0].test_mean, mean_of(test));
  EXPECT_DOUBLE_EQ(table.traces[0].test_std, std_of(test));
}

TEST(Bench, FailedCellCarriesError) {
  RouteProfile p = default_lte_profile();
  p.route_length = 60;
  p.trip_count = 1;
  BenchConfig c = tiny_config();
  c.predictors = {"history"};
  c.horizons = {1, 20};
  const auto table = run_bench({generate(p)}, c);
  EXPECT_TRUE(table.cell(p.route_id, "history", 1).report.has_value());
  const auto& bad = table.cell(p.route_id, "history", 20);
  EXPECT_FALSE(bad.report.has_value());
  EXPECT_NE(bad.error.find("kind=empty_input"), std::string::npos);
  EXPECT_NE(to_csv(table).find("kind=empty_input"), std::string::npos);
}

TEST(Bench, BitReproducible) {
  const Trace tr = short_lte();
  BenchConfig c = tiny_config();
  c.threads = 3;
  const auto a = to_json(run_bench({tr}, c)).dump();
  c.threads = 1;
  const auto b = to_json(run_bench({tr}, c)).dump();
  EXPECT_EQ(a, b);
}

TEST(Bench, OutputsCarryHeader) {
  BenchConfig c = tiny_config();
  c.predictors = {"history", "rls"};
  const auto table = run_bench({short_lte()}, c);
  EXPECT_EQ(to_json(table)["format"], "bwpredict-report");
  EXPECT_EQ(to_csv(table).rfind("# format=bwpredict-report version=1", 0), 0u);
  EXPECT_NE(render_table(table).find("Mean:"), std::string::npos);
}
