#pragma once

// Feature screening by correlation with bandwidth and forest importance ranking.

#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bwpredict/metrics.hpp"
#include "bwpredict/trees.hpp"

namespace bwp {

struct ScreenResult {
  std::vector<std::string> selected;
  std::vector<std::pair<std::string, std::optional<double>>> correlations;  // schema order
  std::vector<std::string> warnings;
};

// Lag-0 Pearson correlation of every model column with b(t).
inline ScreenResult cross_correlation_screen(const Trace& trace, double threshold) {
  require(trace.size() >= 30, ErrorKind::data,
          "correlation screen needs at least 30 samples, got " + std::to_string(trace.size()));
  const auto bw = trace.bandwidth();
  ScreenResult res;
  for (const auto& col : trace.schema().columns) {
    const auto values = trace.column(col.name);
    const auto r = pearson(values, bw);
    res.correlations.emplace_back(col.name, r);
    if (!r) {
      res.warnings.push_back("feature '" + col.name + "' is constant; correlation undefined");
      continue;
    }
    if (std::abs(*r) >= threshold) res.selected.push_back(col.name);
  }
  return res;
}

struct ImportanceReport {
  std::vector<std::pair<std::string, double>> weights;  // schema order
  ForestSettings settings;
  std::string trace_id;
  std::vector<std::string> warnings;

  double weight(std::string_view feature) const {
    for (const auto& [name, w] : weights)
      if (name == feature) return w;
    fail(ErrorKind::schema, std::string(feature));
  }
};

// Forest mapping X(t-1) -> b(t); importances are normalized impurity decrease.
inline ImportanceReport rf_importance(const Trace& trace, const ForestSettings& settings = {}) {
  settings.validate();
  require(trace.size() >= 100, ErrorKind::data,
          "importance ranking needs at least 100 samples, got " + std::to_string(trace.size()));
  const auto& schema = trace.schema();
  const auto n = static_cast<Eigen::Index>(trace.size() - 1);
  const auto F = static_cast<Eigen::Index>(schema.width());
  Matrix X(n, F);
  Vector y(n);
  const std::size_t target = schema.target_index();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& prev = trace[static_cast<std::size_t>(i)].values;
    for (Eigen::Index f = 0; f < F; ++f) X(i, f) = prev[static_cast<std::size_t>(f)];
    y(i) = trace[static_cast<std::size_t>(i) + 1].values[target];
  }

  ImportanceReport rep;
  rep.settings = settings;
  rep.trace_id = trace.route_id();
  std::vector<double> w(static_cast<std::size_t>(F), 1.0 / static_cast<double>(F));
  if ((y.array() == y(0)).all()) {
    rep.warnings.push_back("target is constant; importances are uniform");
  } else {
    const auto ens = rf_fit(X, y, settings);
    const double total = std::accumulate(ens.importances.begin(), ens.importances.end(), 0.0);
    if (total > 0)
      w = ens.importances;
    else
      rep.warnings.push_back("no split reduced impurity; importances are uniform");
  }
  for (std::size_t f = 0; f < schema.width(); ++f) rep.weights.emplace_back(schema.columns[f].name, w[f]);
  return rep;
}

inline Json to_json(const ImportanceReport& r) {
  Json j = header("bwpredict-report");
  j["report"] = "feature-importance";
  j["trace"] = r.trace_id;
  j["settings"] = to_json(r.settings);
  Json w = Json::object();
  for (const auto& [name, v] : r.weights) w[name] = v;
  j["importance"] = w;
  j["warnings"] = r.warnings;
  return j;
}

// Two-column table: feature, importance (percent).
inline std::string importance_table(const ImportanceReport& r) {
  std::ostringstream out;
  out << "Feature Importance (" << r.trace_id << ")\n";
  out << std::left << std::setw(16) << "Feature" << "Importance\n";
  out << std::fixed << std::setprecision(2);
  for (const auto& [name, v] : r.weights) out << std::left << std::setw(16) << name << 100.0 * v << "%\n";
  return out.str();
}

}  // namespace bwp
