#pragma once

// 4G/5G access-mode handoff prediction: dataset construction, boosted
// classifiers (unified and per direction) and the continuous 5G-share target.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "bwpredict/metrics.hpp"
#include "bwpredict/trees.hpp"

namespace bwp {

enum class FeatureSet { all, bw_only, without_bw };

inline std::string to_string(FeatureSet f) {
  switch (f) {
    case FeatureSet::all: return "all";
    case FeatureSet::bw_only: return "bw";
    case FeatureSet::without_bw: return "nobw";
  }
  return "?";
}

inline FeatureSet feature_set_from_string(std::string_view s) {
  if (s == "all") return FeatureSet::all;
  if (s == "bw") return FeatureSet::bw_only;
  if (s == "nobw") return FeatureSet::without_bw;
  fail(ErrorKind::config, "unknown feature set '" + std::string(s) + "' (expected all, bw or nobw)");
}

// Per-second handoff features: the 5G schema columns with CellID in place of
// the derived handoff flag, plus a flag for "mode differs from the previous second".
inline const std::vector<std::string>& handoff_columns() {
  static const std::vector<std::string> cols{"DL",     "UL",  "RSSI",        "RSRQ",   "RSRP",  "NRxSRP",      "NRxSRQ",
                                             "SNR",    "CQI", "NetworkMode", "CellID", "Speed", "ModeSwitched"};
  return cols;
}

inline std::vector<std::size_t> feature_set_columns(FeatureSet set) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < handoff_columns().size(); ++i) {
    const bool bw = handoff_columns()[i] == "DL" || handoff_columns()[i] == "UL";
    if (set == FeatureSet::all || (set == FeatureSet::bw_only) == bw) out.push_back(i);
  }
  return out;
}

// T x 13 matrix of per-second handoff features.
inline Matrix per_second_features(const Trace& trace) {
  const auto modes = trace.modes();
  const auto& cols = handoff_columns();
  std::vector<std::size_t> src;
  for (std::size_t c = 0; c + 1 < cols.size(); ++c) src.push_back(trace.schema().index_of(cols[c]));
  Matrix m(static_cast<Eigen::Index>(trace.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const auto r = static_cast<Eigen::Index>(t);
    for (std::size_t c = 0; c < src.size(); ++c) m(r, static_cast<Eigen::Index>(c)) = trace[t].values[src[c]];
    m(r, static_cast<Eigen::Index>(src.size())) = (t > 0 && modes[t] != modes[t - 1]) ? 1.0 : 0.0;
  }
  return m;
}

// Names of the flattened window features, oldest second first.
inline std::vector<std::string> window_feature_names(std::size_t w, FeatureSet set) {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < w; ++l)
    for (auto c : feature_set_columns(set))
      names.push_back(handoff_columns()[c] + "@t-" + std::to_string(w - 1 - l));
  return names;
}

inline std::vector<double> flatten_window(const Matrix& features, std::size_t t, std::size_t w, FeatureSet set) {
  require(t + 1 >= w && t < static_cast<std::size_t>(features.rows()), ErrorKind::data, "handoff window exceeds trace");
  const auto cols = feature_set_columns(set);
  std::vector<double> out;
  out.reserve(w * cols.size());
  for (std::size_t l = 0; l < w; ++l)
    for (auto c : cols) out.push_back(features(static_cast<Eigen::Index>(t + 1 - w + l), static_cast<Eigen::Index>(c)));
  return out;
}

// ---------------------------------------------------------------------------
// Labels

inline int label_binary(const std::vector<int>& modes, std::size_t t, std::size_t lookahead = 3) {
  require(t + lookahead < modes.size(), ErrorKind::data,
          "label at t=" + std::to_string(t) + " needs " + std::to_string(lookahead) + " seconds of lookahead");
  for (std::size_t s = t + 1; s <= t + lookahead; ++s)
    if (modes[s] != modes[t]) return 1;
  return 0;
}

// Fraction of 5G seconds in [t, t + delta - 1]; nullopt past the trace end.
inline std::optional<double> rho(const std::vector<int>& modes, std::size_t t, std::size_t delta = 8) {
  require(delta >= 1, ErrorKind::config, "rho window must be >= 1");
  if (t + delta > modes.size()) return std::nullopt;
  double acc = 0;
  for (std::size_t k = t; k < t + delta; ++k) acc += modes[k];
  return acc / static_cast<double>(delta);
}

// ---------------------------------------------------------------------------
// Datasets

struct HandoffSample {
  std::vector<double> features;
  double label = 0;  // 0/1, or rho
  int mode = 0;      // m(t): 1 = currently on 5G
  std::size_t t = 0;
};

struct BinaryDatasetConfig {
  std::size_t window = 5;
  std::size_t lookahead = 3;
  std::size_t positive_cap = 0;  // 0 = keep all
  std::size_t proximity = 30;    // seconds around a switch that count as "close"
  FeatureSet features = FeatureSet::all;
  std::uint64_t seed = 0;
};

struct HandoffDataset {
  std::vector<HandoffSample> samples;
  std::vector<std::string> feature_names;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t switches = 0;
};

inline std::vector<std::size_t> switch_indices(const std::vector<int>& modes) {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i < modes.size(); ++i)
    if (modes[i] != modes[i - 1]) out.push_back(i);
  return out;
}

namespace detail {
inline std::vector<std::size_t> draw(std::vector<std::size_t> pool, std::size_t k, std::mt19937_64& rng) {
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(std::min(k, pool.size()));
  return pool;
}
}  // namespace detail

// All positives (optionally capped) plus as many negatives, half of them
// within `proximity` seconds of a switch and half from the rest.
inline HandoffDataset build_binary_dataset(const Trace& trace, const BinaryDatasetConfig& cfg = {}) {
  require(cfg.window >= 1 && cfg.lookahead >= 1, ErrorKind::config, "window and lookahead must be >= 1");
  const auto modes = trace.modes();
  const Matrix feats = per_second_features(trace);
  const auto switches = switch_indices(modes);

  std::vector<std::size_t> pos, near, far;
  for (std::size_t t = cfg.window - 1; t + cfg.lookahead < modes.size(); ++t) {
    if (label_binary(modes, t, cfg.lookahead)) {
      pos.push_back(t);
      continue;
    }
    const bool close = std::any_of(switches.begin(), switches.end(), [&](std::size_t s) {
      return (s > t ? s - t : t - s) <= cfg.proximity;
    });
    (close ? near : far).push_back(t);
  }
  require(!pos.empty(), ErrorKind::data, "trace has no mode switches to label");

  std::mt19937_64 rng(cfg.seed);
  if (cfg.positive_cap > 0 && pos.size() > cfg.positive_cap) {
    pos = detail::draw(pos, cfg.positive_cap, rng);
    std::sort(pos.begin(), pos.end());
  }
  const std::size_t want = pos.size();
  require(near.size() + far.size() >= want, ErrorKind::data,
          "only " + std::to_string(near.size() + far.size()) + " negatives available for " + std::to_string(want) +
              " positives");
  std::size_t want_near = want / 2;
  std::size_t want_far = want - want_near;
  if (near.size() < want_near) {
    want_far += want_near - near.size();
    want_near = near.size();
  } else if (far.size() < want_far) {
    want_near += want_far - far.size();
    want_far = far.size();
  }
  auto neg = detail::draw(near, want_near, rng);
  const auto neg_far = detail::draw(far, want_far, rng);
  neg.insert(neg.end(), neg_far.begin(), neg_far.end());

  HandoffDataset ds;
  ds.feature_names = window_feature_names(cfg.window, cfg.features);
  ds.positives = pos.size();
  ds.negatives = neg.size();
  ds.switches = switches.size();
  std::vector<std::pair<std::size_t, int>> picks;
  for (auto t : pos) picks.emplace_back(t, 1);
  for (auto t : neg) picks.emplace_back(t, 0);
  std::sort(picks.begin(), picks.end());
  for (const auto& [t, y] : picks)
    ds.samples.push_back({flatten_window(feats, t, cfg.window, cfg.features), static_cast<double>(y), modes[t], t});
  return ds;
}

struct ContinuousDatasetConfig {
  std::size_t window = 10;
  std::size_t delta = 8;
  FeatureSet features = FeatureSet::all;
};

// Window ending at t -> rho over the next delta seconds [t+1, t+delta].
inline HandoffDataset build_continuous_dataset(const Trace& trace, const ContinuousDatasetConfig& cfg = {}) {
  require(cfg.window >= 1 && cfg.delta >= 1, ErrorKind::config, "window and delta must be >= 1");
  const auto modes = trace.modes();
  require(modes.size() >= cfg.window + cfg.delta, ErrorKind::empty_input,
          "trace of length " + std::to_string(modes.size()) + " is shorter than w + delta");
  const Matrix feats = per_second_features(trace);
  HandoffDataset ds;
  ds.feature_names = window_feature_names(cfg.window, cfg.features);
  ds.switches = switch_indices(modes).size();
  for (std::size_t t = cfg.window - 1;; ++t) {
    const auto r = rho(modes, t + 1, cfg.delta);
    if (!r) break;
    ds.samples.push_back({flatten_window(feats, t, cfg.window, cfg.features), *r, modes[t], t});
  }
  return ds;
}

inline Matrix design_matrix(const std::vector<HandoffSample>& samples) {
  require(!samples.empty(), ErrorKind::empty_input, "no handoff samples");
  const auto F = static_cast<Eigen::Index>(samples.front().features.size());
  Matrix X(static_cast<Eigen::Index>(samples.size()), F);
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (Eigen::Index f = 0; f < F; ++f) X(static_cast<Eigen::Index>(i), f) = samples[i].features[static_cast<std::size_t>(f)];
  return X;
}

inline Vector label_vector(const std::vector<HandoffSample>& samples) {
  Vector y(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) y(static_cast<Eigen::Index>(i)) = samples[i].label;
  return y;
}

struct SampleSplit {
  std::vector<HandoffSample> train;
  std::vector<HandoffSample> test;
};

// Seeded shuffle, then the first `train_fraction` for training.
inline SampleSplit shuffle_split(std::vector<HandoffSample> samples, double train_fraction, std::uint64_t seed) {
  require(train_fraction > 0 && train_fraction < 1, ErrorKind::config, "train fraction must lie in (0,1)");
  std::mt19937_64 rng(seed);
  std::shuffle(samples.begin(), samples.end(), rng);
  const auto n = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(samples.size())));
  SampleSplit s;
  s.train.assign(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(n));
  s.test.assign(samples.begin() + static_cast<std::ptrdiff_t>(n), samples.end());
  return s;
}

// Time-ordered samples split contiguously.
inline SampleSplit contiguous_split(const std::vector<HandoffSample>& samples, double train_fraction) {
  require(train_fraction > 0 && train_fraction < 1, ErrorKind::config, "train fraction must lie in (0,1)");
  const auto n = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(samples.size())));
  return {{samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(n)},
          {samples.begin() + static_cast<std::ptrdiff_t>(n), samples.end()}};
}

struct DirectionSplit {
  std::vector<HandoffSample> from_5g;  // m(t) = 1: candidate 5G -> 4G switches
  std::vector<HandoffSample> from_4g;  // m(t) = 0: candidate 4G -> 5G switches
};

inline DirectionSplit split_by_direction(const std::vector<HandoffSample>& samples) {
  DirectionSplit d;
  for (const auto& s : samples) (s.mode == 1 ? d.from_5g : d.from_4g).push_back(s);
  return d;
}

// ---------------------------------------------------------------------------
// Binary training

inline const std::vector<double>& default_learning_rates() {
  static const std::vector<double> grid{0.01, 0.04, 0.0475, 0.05, 0.0525, 0.055, 0.1, 0.25, 0.5, 0.75};
  return grid;
}

struct CvRow {
  double learning_rate = 0;
  std::vector<double> fold_accuracies;
  double mean_accuracy = 0;
};

struct RateSelection {
  double learning_rate = 0;
  std::vector<CvRow> table;
};

// Highest mean accuracy wins; ties go to the smaller rate.
inline RateSelection select_learning_rate(const std::vector<double>& grid,
                                          const std::function<KFoldResult(double)>& evaluate) {
  require(!grid.empty(), ErrorKind::config, "learning-rate grid is empty");
  std::vector<double> rates = grid;
  std::sort(rates.begin(), rates.end());
  RateSelection sel;
  double best = -1;
  for (double r : rates) {
    const auto res = evaluate(r);
    sel.table.push_back({r, res.accuracies, res.mean});
    if (res.mean > best) {
      best = res.mean;
      sel.learning_rate = r;
    }
  }
  return sel;
}

inline std::vector<double> predict_samples(const TreeEnsemble& model, const std::vector<HandoffSample>& samples) {
  return predict_rows(model, design_matrix(samples));
}

inline TreeEnsemble fit_classifier(const std::vector<HandoffSample>& samples, const GbmSettings& settings) {
  return gbm_fit_classifier(design_matrix(samples), label_vector(samples), settings);
}

struct BinaryTrainResult {
  TreeEnsemble model;
  RateSelection selection;
};

// k-fold grid search over learning rates, then a refit on all of `train`.
inline BinaryTrainResult train_binary(const std::vector<HandoffSample>& train, const GbmSettings& base,
                                      std::size_t folds = 5, const std::vector<double>& grid = default_learning_rates(),
                                      std::uint64_t cv_seed = 0) {
  auto evaluate = [&](double rate) {
    GbmSettings s = base;
    s.learning_rate = rate;
    return kfold_accuracy(train, folds, cv_seed, [&](const std::vector<HandoffSample>& part) {
      auto model = std::make_shared<TreeEnsemble>(fit_classifier(part, s));
      return [model](const HandoffSample& x) {
        return gbm_predict_proba(*model, Eigen::Map<const Vector>(x.features.data(), static_cast<Eigen::Index>(x.features.size()))) >= 0.5 ? 1 : 0;
      };
    });
  };
  BinaryTrainResult res;
  res.selection = select_learning_rate(grid, evaluate);
  GbmSettings s = base;
  s.learning_rate = res.selection.learning_rate;
  res.model = fit_classifier(train, s);
  return res;
}

inline ClassificationReport evaluate_classifier(const TreeEnsemble& model, const std::vector<HandoffSample>& samples) {
  const auto scores = predict_samples(model, samples);
  std::vector<int> labels;
  for (const auto& s : samples) labels.push_back(static_cast<int>(s.label));
  return classification_metrics(scores, labels, 0.5);
}

struct SeparatedModels {
  BinaryTrainResult from_5g;  // trained on m(t) = 1 samples
  BinaryTrainResult from_4g;  // trained on m(t) = 0 samples
};

// One classifier per current access mode, each with its own rate search.
inline SeparatedModels train_separated(const std::vector<HandoffSample>& train, const GbmSettings& base,
                                       std::size_t folds = 5, const std::vector<double>& grid = default_learning_rates(),
                                       std::uint64_t cv_seed = 0) {
  const auto d = split_by_direction(train);
  auto check = [](const std::vector<HandoffSample>& part, const std::string& name) {
    const bool has0 = std::any_of(part.begin(), part.end(), [](const HandoffSample& s) { return s.label == 0.0; });
    const bool has1 = std::any_of(part.begin(), part.end(), [](const HandoffSample& s) { return s.label == 1.0; });
    require(has0 && has1, ErrorKind::data, "direction " + name + " needs both labels in its training subset");
  };
  check(d.from_5g, "5G->4G");
  check(d.from_4g, "4G->5G");
  return {train_binary(d.from_5g, base, folds, grid, cv_seed), train_binary(d.from_4g, base, folds, grid, cv_seed)};
}

// ---------------------------------------------------------------------------
// Continuous target

inline double predict_rho(const TreeEnsemble& model, const std::vector<double>& window_features) {
  const Eigen::Map<const Vector> x(window_features.data(), static_cast<Eigen::Index>(window_features.size()));
  return std::clamp(gbm_predict(model, x), 0.0, 1.0);
}

struct ContinuousEvaluation {
  RegressionReport report;
  std::map<double, BoxStats> boxes;  // predicted rho grouped by true rho
  std::vector<double> predictions;
};

inline ContinuousEvaluation evaluate_continuous(const TreeEnsemble& model, const std::vector<HandoffSample>& samples) {
  ContinuousEvaluation ev;
  std::vector<double> truth;
  std::map<double, std::vector<double>> groups;
  for (const auto& s : samples) {
    const double p = predict_rho(model, s.features);
    ev.predictions.push_back(p);
    truth.push_back(s.label);
    groups[s.label].push_back(p);
  }
  ev.report = regression_metrics(ev.predictions, truth, 0, "test");
  ev.boxes = boxplot_stats(groups);
  return ev;
}

inline TreeEnsemble train_continuous(const std::vector<HandoffSample>& train, const GbmSettings& settings) {
  return gbm_fit_regressor(design_matrix(train), label_vector(train), settings);
}

}  // namespace bwp
