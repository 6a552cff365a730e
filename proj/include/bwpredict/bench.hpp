#pragma once

// Per-trace, per-predictor, per-horizon comparison on the test split.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <thread>

#include "bwpredict/filters.hpp"
#include "bwpredict/metrics.hpp"
#include "bwpredict/training.hpp"
#include "bwpredict/trees.hpp"

namespace bwp {

inline const std::vector<std::string>& bench_predictor_names() {
  static const std::vector<std::string> names{"history", "ewma", "harmonic", "rls", "rf", "lstm", "tpa"};
  return names;
}

// Filters defined alongside the others but absent from the published tables.
inline bool is_extra_predictor(std::string_view name) { return name == "ewma" || name == "harmonic"; }

struct BenchConfig {
  std::vector<std::string> predictors = bench_predictor_names();
  std::vector<std::size_t> horizons{1, 2, 3};
  std::size_t window = 5;  // rls order and recurrent window; the forest uses W = horizon
  SplitSpec split;
  double ewma_alpha = 0.5;
  std::size_t harmonic_order = 5;
  double rls_lambda = 0.99;
  double rls_delta = 0.01;
  TrainConfig train;
  ForestSettings forest;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // concurrent cells; 0 = hardware concurrency

  void validate() const {
    require(!predictors.empty(), ErrorKind::config, "bench needs at least one predictor");
    for (const auto& p : predictors)
      require(std::find(bench_predictor_names().begin(), bench_predictor_names().end(), p) !=
                  bench_predictor_names().end(),
              ErrorKind::config, "unknown predictor '" + p + "'");
    require(!horizons.empty(), ErrorKind::config, "bench needs at least one horizon");
    for (auto h : horizons) require(h >= 1, ErrorKind::config, "horizons must be positive");
    require(window >= 1 && harmonic_order >= 1, ErrorKind::config, "windows must be >= 1");
    train.validate();
    forest.validate();
  }
};

inline Json to_json(const BenchConfig& c) {
  return Json{{"predictors", c.predictors},
              {"horizons", c.horizons},
              {"window", c.window},
              {"split", {{"train", c.split.train}, {"validation", c.split.validation}, {"test", c.split.test}}},
              {"ewma_alpha", c.ewma_alpha},
              {"harmonic_order", c.harmonic_order},
              {"rls_lambda", c.rls_lambda},
              {"rls_delta", c.rls_delta},
              {"train", to_json(c.train)},
              {"forest", to_json(c.forest)},
              {"seed", c.seed}};
}

struct BenchCell {
  std::string trace;
  std::string predictor;
  std::size_t horizon = 0;
  bool extra = false;
  std::optional<RegressionReport> report;
  std::string error;                 // "kind=<kind> message=<text>" when the cell failed
  std::vector<std::size_t> targets;  // indices of the forecast samples
  std::vector<double> predictions;
  std::vector<double> truth;
};

struct TraceSummary {
  std::string trace;
  std::size_t length = 0;
  std::size_t test_start = 0;
  double test_mean = 0;
  double test_std = 0;
};

struct BenchTable {
  BenchConfig config;
  std::vector<TraceSummary> traces;
  std::vector<BenchCell> cells;  // trace order, then predictor order, then horizon order

  const BenchCell& cell(std::string_view trace, std::string_view predictor, std::size_t horizon) const {
    for (const auto& c : cells)
      if (c.trace == trace && c.predictor == predictor && c.horizon == horizon) return c;
    fail(ErrorKind::config, "no bench cell for " + std::string(predictor) + " at horizon " + std::to_string(horizon));
  }
};

namespace detail {

struct CellJob {
  const Trace* trace = nullptr;
  std::size_t test_start = 0;
  std::size_t train_end = 0;
  std::size_t val_end = 0;
};

// Window ends t whose target b(t + horizon) lies in the test split, with
// every predictor's window inside the test split too.
inline std::vector<std::size_t> bench_targets(const CellJob& job, std::size_t horizon, std::size_t window) {
  const std::size_t first = job.test_start + std::max(window, horizon) - 1;
  std::vector<std::size_t> out;
  for (std::size_t t = first; t + horizon < job.trace->size(); ++t) out.push_back(t);
  require(!out.empty(), ErrorKind::empty_input, "test split too short for horizon " + std::to_string(horizon));
  return out;
}

// Runs a predictor over the whole trace so stateful filters warm up on the
// training data, and records forecasts at the target indices.
inline std::vector<double> stream_predictions(Predictor& p, const Trace& trace, const std::vector<std::size_t>& targets) {
  std::vector<double> out;
  out.reserve(targets.size());
  std::size_t next = 0;
  p.reset();
  for (std::size_t t = p.window() - 1; next < targets.size(); ++t) {
    const double y = p.predict(raw_window(trace, t, p.window()));
    if (t == targets[next]) {
      out.push_back(y);
      ++next;
    }
  }
  return out;
}

inline std::vector<double> flat_window(const Trace& trace, std::size_t end, std::size_t w) {
  const Matrix m = raw_window(trace, end, w);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

inline std::vector<double> forest_predictions(const CellJob& job, std::size_t horizon, const BenchConfig& cfg,
                                              const std::vector<std::size_t>& targets) {
  const Trace& trace = *job.trace;
  const std::size_t w = horizon;
  const std::size_t target_col = trace.schema().target_index();
  require(job.train_end >= w + horizon, ErrorKind::empty_input, "training split too short for the forest");
  const std::size_t count = job.train_end - w - horizon + 1;
  const auto F = static_cast<Eigen::Index>(w * trace.schema().width());
  Matrix X(static_cast<Eigen::Index>(count), F);
  Vector y(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t end = i + w - 1;
    const auto row = flat_window(trace, end, w);
    for (Eigen::Index f = 0; f < F; ++f) X(static_cast<Eigen::Index>(i), f) = row[static_cast<std::size_t>(f)];
    y(static_cast<Eigen::Index>(i)) = trace[end + horizon].values[target_col];
  }
  ForestSettings fs = cfg.forest;
  fs.seed = cfg.seed;
  const auto ens = rf_fit(X, y, fs);
  std::vector<double> out;
  for (auto t : targets) {
    const auto row = flat_window(trace, t, w);
    out.push_back(std::max(0.0, rf_predict(ens, Eigen::Map<const Vector>(row.data(), F))));
  }
  return out;
}

inline std::vector<double> neural_predictions(const CellJob& job, nn::ModelKind kind, std::size_t horizon,
                                              const BenchConfig& cfg, const std::vector<std::size_t>& targets) {
  const Trace& trace = *job.trace;
  const Trace train_part = trace.slice(0, job.train_end, "/train");
  const Trace val_part = trace.slice(job.train_end, job.val_end, "/val");
  const auto train_set = make_windows(train_part, cfg.window, horizon);
  const auto val_set = make_windows(val_part, cfg.window, horizon, train_set.stats);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  auto res = train(kind, train_set, val_set, tc);
  std::vector<double> out;
  for (auto t : targets) out.push_back(res.predictor.predict(raw_window(trace, t, cfg.window)));
  return out;
}

inline void run_cell(const CellJob& job, BenchCell& cell, const BenchConfig& cfg) {
  const Trace& trace = *job.trace;
  const std::size_t bw = trace.schema().target_index();
  const std::size_t tau = cell.horizon;
  try {
    cell.targets = bench_targets(job, tau, cfg.window);
    std::unique_ptr<Predictor> filter;
    if (cell.predictor == "history") filter = std::make_unique<HistoryRepeatPredictor>(bw, tau);
    if (cell.predictor == "ewma") filter = std::make_unique<EwmaPredictor>(cfg.ewma_alpha, bw, tau);
    if (cell.predictor == "harmonic") filter = std::make_unique<HarmonicMeanPredictor>(cfg.harmonic_order, bw, tau);
    if (cell.predictor == "rls")
      filter = std::make_unique<RlsPredictor>(cfg.window, cfg.rls_lambda, cfg.rls_delta, bw, tau);
    if (filter)
      cell.predictions = stream_predictions(*filter, trace, cell.targets);
    else if (cell.predictor == "rf")
      cell.predictions = forest_predictions(job, tau, cfg, cell.targets);
    else
      cell.predictions = neural_predictions(job, nn::model_kind_from_string(cell.predictor), tau, cfg, cell.targets);
    for (auto t : cell.targets) cell.truth.push_back(trace[t + tau].values[bw]);
    cell.report = regression_metrics(cell.predictions, cell.truth, tau, "test");
  } catch (const Error& e) {
    cell.report.reset();
    cell.error = "kind=" + std::string(to_string(e.kind())) + " message=" + e.what();
  }
}

}  // namespace detail

inline BenchTable run_bench(const std::vector<Trace>& traces, const BenchConfig& cfg) {
  cfg.validate();
  require(!traces.empty(), ErrorKind::config, "bench needs at least one trace");
  BenchTable table;
  table.config = cfg;
  std::vector<detail::CellJob> jobs;
  std::vector<std::size_t> cell_job;
  for (const auto& trace : traces) {
    require(trace.size() >= 10, ErrorKind::data, "trace '" + trace.route_id() + "' is too short to split");
    const auto sz = split_sizes(trace.size(), cfg.split);
    detail::CellJob job{&trace, sz.train + sz.validation, sz.train, sz.train + sz.validation};
    std::vector<double> test_bw;
    for (std::size_t i = job.test_start; i < trace.size(); ++i) test_bw.push_back(trace[i].values[trace.schema().target_index()]);
    require(!test_bw.empty(), ErrorKind::empty_input, "trace '" + trace.route_id() + "' has an empty test split");
    table.traces.push_back({trace.route_id(), trace.size(), job.test_start, mean_of(test_bw), std_of(test_bw)});
    jobs.push_back(job);
    for (const auto& p : cfg.predictors)
      for (auto h : cfg.horizons) {
        BenchCell c;
        c.trace = trace.route_id();
        c.predictor = p;
        c.horizon = h;
        c.extra = is_extra_predictor(p);
        table.cells.push_back(std::move(c));
        cell_job.push_back(jobs.size() - 1);
      }
  }

  std::size_t workers = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, table.cells.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < table.cells.size(); i = next++) detail::run_cell(jobs[cell_job[i]], table.cells[i], cfg);
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  return table;
}

// ---------------------------------------------------------------------------
// Output

inline Json to_json(const BenchTable& t) {
  Json j = header("bwpredict-report");
  j["report"] = "bench";
  j["config"] = to_json(t.config);
  Json traces = Json::array();
  for (const auto& s : t.traces)
    traces.push_back({{"trace", s.trace}, {"length", s.length}, {"test_start", s.test_start},
                      {"test_mean", s.test_mean}, {"test_std", s.test_std}});
  j["traces"] = traces;
  Json cells = Json::array();
  for (const auto& c : t.cells) {
    Json e{{"trace", c.trace}, {"predictor", c.predictor}, {"horizon", c.horizon}, {"extra", c.extra}};
    if (c.report)
      e["metrics"] = to_json(*c.report);
    else
      e["error"] = c.error;
    cells.push_back(e);
  }
  j["cells"] = cells;
  return j;
}

inline std::string to_csv(const BenchTable& t) {
  std::ostringstream out;
  out << "# format=bwpredict-report version=" << kFormatVersion << " report=bench\n";
  for (const auto& s : t.traces)
    out << "# trace=" << s.trace << " test_mean=" << detail::format_double(s.test_mean) << " test_std=" << detail::format_double(s.test_std)
        << "\n";
  out << "trace,predictor,horizon,rmse,mae,corr,count,extra,error\n";
  for (const auto& c : t.cells) {
    out << c.trace << ',' << c.predictor << ',' << c.horizon << ',';
    if (c.report)
      out << detail::format_double(c.report->rmse) << ',' << detail::format_double(c.report->mae) << ','
          << (c.report->corr ? detail::format_double(*c.report->corr) : "undefined") << ',' << c.report->count << ',';
    else
      out << ",,,,";
    out << (c.extra ? "extra" : "") << ',';
    if (!c.report) out << '"' << c.error << '"';
    out << '\n';
  }
  return out.str();
}

// Table shaped like "Mean/Std" header plus one row per predictor and one
// RMSE/MAE/CORR column group per horizon.
inline std::string render_table(const BenchTable& t) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  for (const auto& s : t.traces) {
    out << "Trace " << s.trace << "  Mean: " << s.test_mean << "  Std: " << s.test_std << "\n";
    out << std::left << std::setw(12) << "Model";
    for (auto h : t.config.horizons)
      out << std::setw(10) << ("RMSE@" + std::to_string(h)) << std::setw(10) << ("MAE@" + std::to_string(h))
          << std::setw(10) << ("CORR@" + std::to_string(h));
    out << "\n";
    for (const auto& p : t.config.predictors) {
      out << std::left << std::setw(12) << (is_extra_predictor(p) ? p + "*" : p);
      for (auto h : t.config.horizons) {
        const auto& c = t.cell(s.trace, p, h);
        if (!c.report) {
          out << std::setw(30) << "error";
          continue;
        }
        out << std::setw(10) << c.report->rmse << std::setw(10) << c.report->mae << std::setw(10);
        if (c.report->corr)
          out << *c.report->corr;
        else
          out << "n/a";
      }
      out << "\n";
    }
    for (const auto& c : t.cells)
      if (c.trace == s.trace && !c.report) out << "error " << c.predictor << "@" << c.horizon << ": " << c.error << "\n";
  }
  out << "* filters not part of the published comparison\n";
  return out.str();
}

// One CSV per cell (t, truth, prediction) plus a trace series file.
inline std::vector<std::string> write_plotdata(const BenchTable& t, const std::vector<Trace>& traces,
                                               const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> written;
  auto safe = [](std::string s) {
    for (auto& ch : s)
      if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
    return s;
  };
  auto open = [&](const std::string& name) {
    const auto path = (std::filesystem::path(dir) / name).string();
    std::ofstream f(path);
    require(static_cast<bool>(f), ErrorKind::io, "cannot write '" + path + "'");
    written.push_back(path);
    return f;
  };
  for (const auto& trace : traces) {
    auto f = open(safe(trace.route_id()) + "_series.csv");
    f << "# format=bwpredict-plotdata version=" << kFormatVersion << "\n";
    write_csv(f, trace);
  }
  for (const auto& c : t.cells) {
    if (!c.report) continue;
    auto f = open(safe(c.trace) + "_" + c.predictor + "_h" + std::to_string(c.horizon) + ".csv");
    f << "# format=bwpredict-plotdata version=" << kFormatVersion << "\n";
    f << "t,truth,prediction\n";
    for (std::size_t i = 0; i < c.targets.size(); ++i)
      f << c.targets[i] + c.horizon << ',' << detail::format_double(c.truth[i]) << ',' << detail::format_double(c.predictions[i]) << '\n';
  }
  return written;
}

}  // namespace bwp
