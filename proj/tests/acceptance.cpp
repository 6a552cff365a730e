// Acceptance suite: prints one result line per criterion and exits nonzero on any failure.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bwpredict.hpp"

using namespace bwp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  enum class Status { pass, fail, skip } status = Status::fail;
  std::string detail;
};

Outcome pass(std::string d) { return {Outcome::Status::pass, std::move(d)}; }
Outcome fail_with(std::string d) { return {Outcome::Status::fail, std::move(d)}; }
Outcome skip(std::string d) { return {Outcome::Status::skip, std::move(d)}; }
Outcome verdict(bool ok, std::string d) { return ok ? pass(std::move(d)) : fail_with(std::move(d)); }

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------
// 1. Confusion-count metrics

Outcome confusion_oracle() {
  const auto r = metrics_from_confusion({166, 67, 53, 164});
  const bool ok = std::abs(r.accuracy - 0.733) <= 0.001 && std::abs(r.precision - 0.712) <= 0.001 &&
                  std::abs(r.recall - 0.758) <= 0.001 && std::abs(r.f1 - 0.735) <= 0.001;
  return verdict(ok, "accuracy " + fmt(r.accuracy) + " precision " + fmt(r.precision) + " recall " + fmt(r.recall) +
                         " f1 " + fmt(r.f1));
}

// ---------------------------------------------------------------------------
// 2. RLS against batch least squares

Vector batch_least_squares(const std::vector<double>& seq, std::size_t h) {
  const auto rows = static_cast<Eigen::Index>(seq.size() - h);
  Matrix A(rows, static_cast<Eigen::Index>(h));
  Vector b(rows);
  for (std::size_t t = h; t < seq.size(); ++t) {
    A.row(static_cast<Eigen::Index>(t - h)) = most_recent_first(std::span<const double>(seq.data() + t - h, h), h);
    b(static_cast<Eigen::Index>(t - h)) = seq[t];
  }
  return A.colPivHouseholderQr().solve(b);
}

Outcome rls_equivalence() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g;
  double worst = 0;
  for (int s = 0; s < 50; ++s) {
    std::vector<double> seq(300);
    for (double& x : seq) x = 10.0 + 3.0 * g(rng);
    RlsState st = RlsState::init(5, 1.0, 1e-8);
    for (std::size_t t = 5; t < seq.size(); ++t)
      st = rls_predict_update(st, std::span<const double>(seq.data() + t - 5, 5), seq[t]).second;
    worst = std::max(worst, (st.weights - batch_least_squares(seq, 5)).cwiseAbs().maxCoeff());
  }
  return verdict(worst <= 1e-5, "max |w_rls - w_ols| " + [&] {
    std::ostringstream s;
    s << std::scientific << std::setprecision(2) << worst;
    return s.str();
  }());
}

// ---------------------------------------------------------------------------
// 3. Gradient checks

Outcome gradient_checks() {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  std::normal_distribution<double> g;
  auto window = [&](std::size_t w, std::size_t n) {
    Matrix m(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
  };
  double worst = 0;
  std::string where;
  std::size_t checked = 0;
  struct Shape {
    nn::ModelKind kind;
    std::size_t inputs, window, layers, units, filters;
  };
  for (const Shape& sh : {Shape{nn::ModelKind::lstm, 3, 3, 2, 3, 1}, Shape{nn::ModelKind::tpa, 3, 4, 2, 4, 3}}) {
    auto model = nn::RecurrentModel::create(sh.kind, sh.inputs, sh.window, sh.layers, sh.units, sh.filters, 0.0, rng);
    for (int point = 0; point < 100; ++point) {
      for (auto* p : model.parameters())
        for (double& v : p->values) v = u(rng);
      const std::vector<Matrix> windows{window(sh.window, sh.inputs), window(sh.window, sh.inputs)};
      const auto res = nn::gradient_check(model, windows, {g(rng), g(rng)});
      checked += res.checked;
      if (res.max_relative_error > worst) {
        worst = res.max_relative_error;
        where = nn::to_string(sh.kind) + ":" + res.worst_parameter;
      }
    }
  }
  std::ostringstream s;
  s << checked << " partials, max relative error " << std::scientific << std::setprecision(2) << worst << " ("
    << where << ")";
  return verdict(worst < 1e-4, s.str());
}

// ---------------------------------------------------------------------------
// 4. AUC implementations

Outcome auc_equivalence() {
  std::mt19937_64 rng(44);
  double worst = 0;
  for (int set = 0; set < 100; ++set) {
    const std::size_t n = 20 + rng() % 200;
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    std::uniform_int_distribution<int> coarse(0, 9);
    std::uniform_real_distribution<double> fine(0, 1);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = set % 2 ? coarse(rng) / 10.0 : fine(rng);  // odd sets have many ties
      labels[i] = static_cast<int>(rng() % 2);
    }
    labels[0] = 0;
    labels[1] = 1;
    worst = std::max(worst, std::abs(auc_trapezoid(roc_curve(scores, labels)) - auc_rank(scores, labels)));
  }
  const std::vector<double> separated{0.1, 0.2, 0.3, 0.7, 0.8, 0.9};
  const std::vector<double> constant(6, 0.4);
  const std::vector<int> y{0, 0, 0, 1, 1, 1};
  const bool exact = auc_trapezoid(roc_curve(separated, y)) == 1.0 && auc_rank(separated, y) == 1.0 &&
                     auc_trapezoid(roc_curve(constant, y)) == 0.5 && auc_rank(constant, y) == 0.5;
  std::ostringstream s;
  s << "max |trapezoid - rank| " << std::scientific << std::setprecision(2) << worst
    << (exact ? ", separated 1.0 / constant 0.5 exact" : ", degenerate cases wrong");
  return verdict(worst <= 1e-12 && exact, s.str());
}

// ---------------------------------------------------------------------------
// 5. Boosting loss monotonicity

Outcome gbm_monotone() {
  std::mt19937_64 rng(55);
  std::normal_distribution<double> g;
  std::bernoulli_distribution flip(0.15);
  Matrix X(400, 4);
  Vector yc(400), yr(400);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = g(rng);
    yc(i) = ((X(i, 0) + 0.5 * X(i, 1) > 0) != flip(rng)) ? 1 : 0;
    yr(i) = std::sin(X(i, 2)) + 0.5 * X(i, 3) + 0.2 * g(rng);
  }
  const GbmSettings s;  // 500 stages
  const auto clf = gbm_fit_classifier(X, yc, s);
  const auto reg = gbm_fit_regressor(X, yr, s);
  auto increases = [](const std::vector<double>& loss) {
    std::size_t n = 0;
    for (std::size_t k = 1; k < loss.size(); ++k) n += loss[k] > loss[k - 1];
    return n;
  };
  const auto up_c = increases(clf.stage_loss), up_r = increases(reg.stage_loss);

  Matrix Xx(4, 2);
  Xx << 0, 0, 0, 1, 1, 0, 1, 1;
  Vector yx(4);
  yx << 0, 1, 1, 0;
  const auto xor_model = gbm_fit_classifier(Xx, yx, s);
  int correct = 0;
  for (Eigen::Index i = 0; i < 4; ++i) correct += (gbm_predict_proba(xor_model, Xx.row(i)) >= 0.5 ? 1 : 0) == yx(i);

  const bool ok = clf.stage_loss.size() == 501 && reg.stage_loss.size() == 501 && up_c == 0 && up_r == 0 && correct == 4;
  return verdict(ok, "log-loss " + fmt(clf.stage_loss.front()) + "->" + fmt(clf.stage_loss.back()) + ", mse " +
                         fmt(reg.stage_loss.front()) + "->" + fmt(reg.stage_loss.back()) + ", increases " +
                         std::to_string(up_c) + "/" + std::to_string(up_r) + ", xor accuracy " +
                         fmt(correct / 4.0, 2));
}

// ---------------------------------------------------------------------------
// 6. Predictor ordering on the default synthetic route

BenchTable ordering_bench(std::uint64_t seed) {
  auto profile = default_lte_profile();
  profile.seed = seed;
  BenchConfig cfg;
  cfg.predictors = {"history", "rls", "rf", "lstm", "tpa"};
  cfg.horizons = {1};
  cfg.seed = seed;
  return run_bench({generate(profile)}, cfg);
}

Outcome ordering(const fs::path& report) {
  const auto table = ordering_bench(0);
  write_json_file(report.string(), to_json(table));
  const std::string id = table.traces.front().trace;
  std::map<std::string, double> rmse;
  for (const auto& p : table.config.predictors) {
    const auto& c = table.cell(id, p, 1);
    if (!c.report) return fail_with(p + " failed: " + c.error);
    rmse[p] = c.report->rmse;
  }
  const double hist = rmse["history"];
  bool ok = rmse["tpa"] <= rmse["lstm"] && rmse["lstm"] < rmse["rls"] && rmse["rls"] < hist;
  for (const char* m : {"rf", "lstm", "tpa"}) ok = ok && rmse[m] <= 0.9 * hist;
  std::string d;
  for (const char* m : {"tpa", "lstm", "rf", "rls", "history"}) d += std::string(d.empty() ? "" : ", ") + m + " " + fmt(rmse[m]);
  return verdict(ok, "rmse " + d);
}

// ---------------------------------------------------------------------------
// 7. Handoff pipeline

struct HandoffRun {
  Json report;
  ClassificationReport unified;
  ClassificationReport separated_5g, unified_5g, separated_4g, unified_4g;
  ContinuousEvaluation continuous;
  std::size_t switches = 0;
};

HandoffRun handoff_pipeline(std::uint64_t seed) {
  auto profile = default_5g_profile();
  profile.seed = seed;
  const Trace trace = generate(profile);
  HandoffRun run;

  BinaryDatasetConfig dc;
  dc.seed = seed;
  const auto ds = build_binary_dataset(trace, dc);
  run.switches = ds.switches;
  const auto parts = shuffle_split(ds.samples, 0.7, seed);
  GbmSettings base;
  base.seed = seed;
  const auto uni = train_binary(parts.train, base, 5, default_learning_rates(), seed);
  run.unified = evaluate_classifier(uni.model, parts.test);

  const auto sep = train_separated(parts.train, base, 5, default_learning_rates(), seed);
  const auto dir = split_by_direction(parts.test);
  run.separated_5g = evaluate_classifier(sep.from_5g.model, dir.from_5g);
  run.unified_5g = evaluate_classifier(uni.model, dir.from_5g);
  run.separated_4g = evaluate_classifier(sep.from_4g.model, dir.from_4g);
  run.unified_4g = evaluate_classifier(uni.model, dir.from_4g);

  const auto cds = build_continuous_dataset(trace);
  const auto cparts = contiguous_split(cds.samples, 0.7);
  run.continuous = evaluate_continuous(train_continuous(cparts.train, base), cparts.test);

  Json j = header("bwpredict-report");
  j["report"] = "handoff-acceptance";
  j["seed"] = seed;
  j["dataset"] = {{"samples", ds.samples.size()}, {"positives", ds.positives}, {"negatives", ds.negatives},
                  {"switches", ds.switches}, {"train", parts.train.size()}, {"test", parts.test.size()}};
  j["unified"] = {{"learning_rate", uni.selection.learning_rate}, {"test", to_json(run.unified)}};
  j["separated"] = {{"from_5g", {{"learning_rate", sep.from_5g.selection.learning_rate},
                                 {"separated", to_json(run.separated_5g)},
                                 {"unified", to_json(run.unified_5g)}}},
                    {"from_4g", {{"learning_rate", sep.from_4g.selection.learning_rate},
                                 {"separated", to_json(run.separated_4g)},
                                 {"unified", to_json(run.unified_4g)}}}};
  j["continuous"] = {{"metrics", to_json(run.continuous.report)}, {"boxplot", to_json(run.continuous.boxes)}};
  run.report = j;
  return run;
}

Outcome handoff(const fs::path& report) {
  const auto r = handoff_pipeline(0);
  write_json_file(report.string(), r.report);
  const double auc = r.unified.auc.value_or(0.0);
  const bool ok = r.switches == 40 && auc >= 0.95 && r.unified.accuracy >= 0.90 &&
                  r.separated_5g.accuracy >= r.unified_5g.accuracy &&
                  r.separated_4g.accuracy >= r.unified_4g.accuracy && r.continuous.report.rmse <= 0.15;
  return verdict(ok, std::to_string(r.switches) + " switches; unified auc " + fmt(auc) + " acc " +
                         fmt(r.unified.accuracy) + "; 5G->4G sep/uni " + fmt(r.separated_5g.accuracy) + "/" +
                         fmt(r.unified_5g.accuracy) + "; 4G->5G sep/uni " + fmt(r.separated_4g.accuracy) + "/" +
                         fmt(r.unified_4g.accuracy) + "; rho rmse " + fmt(r.continuous.report.rmse));
}

// ---------------------------------------------------------------------------
// 8. Determinism of the report files

Outcome determinism(const fs::path& dir) {
  const auto bench_again = dir / "ordering_rerun.json";
  const auto handoff_again = dir / "handoff_rerun.json";
  write_json_file(bench_again.string(), to_json(ordering_bench(0)));
  write_json_file(handoff_again.string(), handoff_pipeline(0).report);
  const auto a1 = slurp(dir / "ordering.json"), a2 = slurp(bench_again);
  const auto b1 = slurp(dir / "handoff.json"), b2 = slurp(handoff_again);
  const bool ok = !a1.empty() && !b1.empty() && a1 == a2 && b1 == b2;
  return verdict(ok, std::string("ordering report ") + (a1 == a2 ? "identical" : "differs") + ", handoff report " +
                         (b1 == b2 ? "identical" : "differs"));
}

// ---------------------------------------------------------------------------
// 9. Measured driving trace (optional)

Outcome measured_trace() {
  const char* path = std::getenv("BWP_MEASURED_TRACE");
  if (path == nullptr || *path == '\0') return skip("BWP_MEASURED_TRACE not set");
  const std::string p = path;
  const Trace trace = fs::path(p).extension() == ".csv" ? ingest_csv(p, FeatureSchema::nr5g12()) : load_trace(p);

  const auto ds = build_binary_dataset(trace);
  const auto parts = shuffle_split(ds.samples, 0.7, 0);
  const auto uni = train_binary(parts.train, GbmSettings{});
  const double acc = evaluate_classifier(uni.model, parts.test).accuracy;

  BenchConfig cfg;
  cfg.predictors = {"tpa"};
  cfg.horizons = {1};
  const auto table = run_bench({trace}, cfg);
  const auto& cell = table.cell(trace.route_id(), "tpa", 1);
  const double tpa = cell.report ? cell.report->rmse : std::numeric_limits<double>::quiet_NaN();

  const auto cds = build_continuous_dataset(trace);
  const auto cparts = contiguous_split(cds.samples, 0.7);
  const double rho_rmse = evaluate_continuous(train_continuous(cparts.train, GbmSettings{}), cparts.test).report.rmse;

  const bool ok = std::abs(static_cast<double>(ds.positives) - 750.0) <= 75.0 && std::abs(acc - 0.733) <= 0.05 &&
                  std::abs(tpa - 24.8120) <= 0.15 * 24.8120 && std::abs(rho_rmse - 0.109) <= 0.03;
  return verdict(ok, std::to_string(ds.positives) + " positives; accuracy " + fmt(acc) + "; tpa rmse " + fmt(tpa) +
                         "; rho rmse " + fmt(rho_rmse));
}

}  // namespace

int main(int argc, char** argv) {
  fs::path reports = "acceptance_reports";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--reports" && i + 1 < argc) {
      reports = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--reports DIR]\n";
      return 2;
    }
  }
  fs::create_directories(reports);

  struct Criterion {
    int id;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, 1, confusion_oracle},
      {2, 10, rls_equivalence},
      {3, 60, gradient_checks},
      {4, 5, auc_equivalence},
      {5, 30, gbm_monotone},
      {6, 900, [&] { return ordering(reports / "ordering.json"); }},
      {7, 300, [&] { return handoff(reports / "handoff.json"); }},
      {8, 0, [&] { return determinism(reports); }},
      {9, 0, measured_trace},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail_with(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_s > 0 && secs >= c.budget_s && o.status == Outcome::Status::pass)
      o = fail_with(o.detail + "; over the " + fmt(c.budget_s, 0) + " s budget");
    const char* tag = o.status == Outcome::Status::pass ? "PASS" : o.status == Outcome::Status::skip ? "SKIP" : "FAIL";
    failures += o.status == Outcome::Status::fail;
    std::cout << "criterion " << c.id << ": " << tag << "  " << o.detail << "  [" << fmt(secs, 2) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
