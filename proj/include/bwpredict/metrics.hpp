#pragma once

// Evaluation metrics: regression errors, confusion-matrix rates, ROC/AUC,
// k-fold accuracy, and boxplot summaries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bwpredict/trace.hpp"

namespace bwp {

inline double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Population standard deviation.
inline double std_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double acc = 0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

// Pearson correlation; nullopt when either sequence is constant.
inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::shape, "pearson: length mismatch");
  if (a.empty()) return std::nullopt;
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

struct RegressionReport {
  double rmse = 0;
  double mae = 0;
  std::optional<double> corr;  // nullopt: undefined (constant sequence)
  std::size_t count = 0;
  std::size_t horizon = 0;
  std::string split = "test";
};

inline RegressionReport regression_metrics(std::span<const double> pred, std::span<const double> truth,
                                           std::size_t horizon = 0, std::string split_id = "test") {
  require(pred.size() == truth.size(), ErrorKind::shape,
          "regression_metrics: " + std::to_string(pred.size()) + " predictions vs " + std::to_string(truth.size()) +
              " targets");
  require(!pred.empty(), ErrorKind::empty_input, "regression_metrics: empty input");
  RegressionReport r;
  double sq = 0, ab = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - truth[i];
    sq += e * e;
    ab += std::abs(e);
  }
  const double n = static_cast<double>(pred.size());
  r.rmse = std::sqrt(sq / n);
  r.mae = ab / n;
  r.corr = pearson(pred, truth);
  r.count = pred.size();
  r.horizon = horizon;
  r.split = std::move(split_id);
  return r;
}

inline Json to_json(const RegressionReport& r) {
  Json j{{"rmse", r.rmse}, {"mae", r.mae}};
  j["corr"] = r.corr ? Json(*r.corr) : Json(nullptr);
  j["count"] = r.count;
  j["horizon"] = r.horizon;
  j["split"] = r.split;
  return j;
}

// ---------------------------------------------------------------------------
// Classification

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
};

struct RocPoint {
  double fpr = 0;
  double tpr = 0;
  double threshold = 0;
};

struct ClassificationReport {
  ConfusionCounts counts;
  double tpr = 0, fpr = 0, precision = 0, recall = 0, accuracy = 0, f1 = 0;
  double threshold = 0.5;
  std::vector<RocPoint> roc;
  std::optional<double> auc;
  std::string auc_error;
};

inline double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

inline ClassificationReport metrics_from_confusion(const ConfusionCounts& c) {
  ClassificationReport r;
  r.counts = c;
  const auto tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const auto fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
  r.tpr = safe_ratio(tp, tp + fn);
  r.recall = r.tpr;
  r.fpr = safe_ratio(fp, fp + tn);
  r.precision = safe_ratio(tp, tp + fp);
  r.accuracy = safe_ratio(tp + tn, tp + fp + fn + tn);
  r.f1 = safe_ratio(2.0 * r.precision * r.recall, r.precision + r.recall);
  return r;
}

inline void check_binary_inputs(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), ErrorKind::shape,
          "classification: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) +
              " labels");
  for (int l : labels) require(l == 0 || l == 1, ErrorKind::data, "labels must be 0 or 1");
}

// ROC over every distinct score used as a ">= threshold" cut, plus (0,0) and (1,1).
inline std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_binary_inputs(scores, labels);
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double neg = static_cast<double>(labels.size()) - pos;
  require(pos > 0 && neg > 0, ErrorKind::data, "ROC/AUC needs both classes present");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<RocPoint> roc{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double thr = scores[order[i]];
    while (i < order.size() && scores[order[i]] == thr) {
      (labels[order[i]] == 1 ? tp : fp) += 1.0;
      ++i;
    }
    roc.push_back({fp / neg, tp / pos, thr});
  }
  if (roc.back().fpr != 1.0 || roc.back().tpr != 1.0) roc.push_back({1.0, 1.0, -std::numeric_limits<double>::infinity()});
  return roc;
}

inline double auc_trapezoid(const std::vector<RocPoint>& roc) {
  double area = 0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) * 0.5;
  return area;
}

// Mann-Whitney rank statistic with midranks: P(score+ > score-) + 0.5 P(tie).
inline double auc_rank(std::span<const double> scores, std::span<const int> labels) {
  check_binary_inputs(scores, labels);
  const auto n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0, pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) {
        rank_sum += midrank;
        pos += 1;
      }
    i = j;
  }
  const double neg = static_cast<double>(n) - pos;
  require(pos > 0 && neg > 0, ErrorKind::data, "ROC/AUC needs both classes present");
  return (rank_sum - pos * (pos + 1) * 0.5) / (pos * neg);
}

inline ConfusionCounts confusion_at(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_binary_inputs(scores, labels);
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) (predicted ? c.tp : c.fn)++;
    else (predicted ? c.fp : c.tn)++;
  }
  return c;
}

inline ClassificationReport classification_metrics(std::span<const double> scores, std::span<const int> labels,
                                                   double threshold = 0.5) {
  ClassificationReport r = metrics_from_confusion(confusion_at(scores, labels, threshold));
  r.threshold = threshold;
  try {
    r.roc = roc_curve(scores, labels);
    r.auc = auc_trapezoid(r.roc);
  } catch (const Error& e) {
    r.auc_error = e.what();
  }
  return r;
}

inline Json to_json(const ClassificationReport& r, bool with_roc = true) {
  Json j{{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"fn", r.counts.fn}, {"tn", r.counts.tn},
         {"tpr", r.tpr},      {"fpr", r.fpr},      {"precision", r.precision}, {"recall", r.recall},
         {"accuracy", r.accuracy}, {"f1", r.f1},   {"threshold", r.threshold}};
  j["auc"] = r.auc ? Json(*r.auc) : Json(nullptr);
  if (!r.auc_error.empty()) j["auc_error"] = r.auc_error;
  if (with_roc) {
    Json roc = Json::array();
    for (const auto& p : r.roc) roc.push_back({p.fpr, p.tpr});
    j["roc"] = roc;
  }
  return j;
}

// ---------------------------------------------------------------------------
// k-fold cross validation

// Seeded shuffle, then contiguous blocks whose sizes differ by at most one.
inline std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t folds, std::uint64_t seed) {
  require(folds >= 2, ErrorKind::config, "k-fold needs at least 2 folds");
  require(n >= folds, ErrorKind::config,
          "k-fold: " + std::to_string(folds) + " folds exceed dataset size " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::vector<std::size_t>> out(folds);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t len = n / folds + (f < n % folds ? 1 : 0);
    out[f].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos), idx.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return out;
}

struct KFoldResult {
  std::vector<double> accuracies;
  double mean = 0;
};

// `trainer(train_items)` returns a classifier `int(const Item&)`; items expose
// a `label` member holding 0 or 1.
template <typename Item, typename Trainer>
KFoldResult kfold_accuracy(const std::vector<Item>& data, std::size_t folds, std::uint64_t seed, Trainer&& trainer) {
  const auto blocks = kfold_indices(data.size(), folds, seed);
  KFoldResult res;
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<Item> train, held;
    for (std::size_t g = 0; g < folds; ++g)
      for (std::size_t i : blocks[g]) (g == f ? held : train).push_back(data[i]);
    auto classify = trainer(train);
    std::size_t correct = 0;
    for (const auto& item : held)
      if (classify(item) == static_cast<int>(std::lround(item.label))) ++correct;
    res.accuracies.push_back(static_cast<double>(correct) / static_cast<double>(held.size()));
  }
  res.mean = mean_of(res.accuracies);
  return res;
}

// ---------------------------------------------------------------------------
// Boxplots

struct BoxStats {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
  std::size_t count = 0;
};

// Linear interpolation between order statistics at position p * (n - 1).
inline double quantile_sorted(std::span<const double> sorted, double p) {
  require(!sorted.empty(), ErrorKind::empty_input, "quantile of empty group");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - static_cast<double>(lo));
}

inline BoxStats box_stats(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return {values.front(), quantile_sorted(values, 0.25), quantile_sorted(values, 0.5), quantile_sorted(values, 0.75),
          values.back(), values.size()};
}

inline std::map<double, BoxStats> boxplot_stats(const std::map<double, std::vector<double>>& groups) {
  std::map<double, BoxStats> out;
  for (const auto& [key, values] : groups) {
    require(!values.empty(), ErrorKind::empty_input, "boxplot group is empty");
    out.emplace(key, box_stats(values));
  }
  return out;
}

inline Json to_json(const std::map<double, BoxStats>& boxes) {
  Json arr = Json::array();
  for (const auto& [key, b] : boxes)
    arr.push_back({{"key", key}, {"count", b.count}, {"min", b.min}, {"q1", b.q1}, {"median", b.median},
                   {"q3", b.q3}, {"max", b.max}});
  return arr;
}

}  // namespace bwp
