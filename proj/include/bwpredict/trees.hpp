#pragma once

// CART regression trees, random forests and gradient boosting.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "bwpredict/trace.hpp"

namespace bwp {

inline constexpr std::size_t kUnlimitedDepth = std::numeric_limits<std::size_t>::max();

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0;
  int left = -1;
  int right = -1;
  double value = 0;
};

struct Tree {
  std::vector<TreeNode> nodes;

  template <class Row>
  std::size_t leaf_index(const Row& x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0)
      i = static_cast<std::size_t>(x(static_cast<Eigen::Index>(nodes[i].feature)) <= nodes[i].threshold ? nodes[i].left
                                                                                                         : nodes[i].right);
    return i;
  }
  template <class Row>
  double predict(const Row& x) const {
    return nodes[leaf_index(x)].value;
  }
  std::size_t depth() const { return depth_from(0); }
  std::size_t leaves() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature < 0; }));
  }

 private:
  std::size_t depth_from(std::size_t i) const {
    if (nodes[i].feature < 0) return 0;
    return 1 + std::max(depth_from(static_cast<std::size_t>(nodes[i].left)), depth_from(static_cast<std::size_t>(nodes[i].right)));
  }
};

enum class FeatureRule { sqrt, all, fixed };

inline std::string to_string(FeatureRule r) {
  switch (r) {
    case FeatureRule::sqrt: return "sqrt";
    case FeatureRule::all: return "all";
    case FeatureRule::fixed: return "fixed";
  }
  return "?";
}

inline FeatureRule feature_rule_from_string(std::string_view s) {
  if (s == "sqrt") return FeatureRule::sqrt;
  if (s == "all") return FeatureRule::all;
  if (s == "fixed") return FeatureRule::fixed;
  fail(ErrorKind::config, "unknown feature rule '" + std::string(s) + "'");
}

inline std::size_t resolve_max_features(FeatureRule rule, std::size_t count, std::size_t features) {
  switch (rule) {
    case FeatureRule::sqrt:
      return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(features)))));
    case FeatureRule::all: return features;
    case FeatureRule::fixed: return std::clamp<std::size_t>(count, 1, features);
  }
  return features;
}

struct CartSettings {
  std::size_t max_depth = kUnlimitedDepth;
  std::size_t min_samples_split = 2;
  std::size_t min_samples_leaf = 1;
  std::size_t max_features = 0;  // 0 = all
  std::uint64_t seed = 0;
};

struct ForestSettings {
  std::size_t trees = 1200;
  std::size_t max_depth = 20;
  std::size_t min_samples_split = 10;
  std::size_t min_samples_leaf = 2;
  FeatureRule feature_rule = FeatureRule::sqrt;
  std::size_t max_features = 0;  // used with FeatureRule::fixed
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 = hardware concurrency

  void validate() const {
    require(trees >= 1, ErrorKind::config, "tree count must be >= 1");
    require(max_depth >= 1, ErrorKind::config, "max depth must be >= 1");
    require(min_samples_leaf >= 1, ErrorKind::config, "min samples per leaf must be >= 1");
    require(min_samples_split >= 2, ErrorKind::config, "min samples to split must be >= 2");
  }
};

struct GbmSettings {
  std::size_t estimators = 500;
  double learning_rate = 0.04;
  std::size_t max_features = 0;  // 0 = all
  std::size_t max_depth = 8;
  std::size_t min_samples_split = 2;
  std::size_t min_samples_leaf = 1;
  std::uint64_t seed = 0;

  void validate() const {
    require(estimators >= 1, ErrorKind::config, "estimator count must be >= 1");
    require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorKind::config, "learning rate must be >= 0");
    require(max_depth >= 1, ErrorKind::config, "max depth must be >= 1");
    require(min_samples_leaf >= 1, ErrorKind::config, "min samples per leaf must be >= 1");
  }
};

inline Json to_json(const ForestSettings& s) {
  return Json{{"trees", s.trees},
              {"max_depth", s.max_depth},
              {"min_samples_split", s.min_samples_split},
              {"min_samples_leaf", s.min_samples_leaf},
              {"feature_rule", to_string(s.feature_rule)},
              {"max_features", s.max_features},
              {"seed", s.seed}};
}

inline ForestSettings forest_settings_from_json(const Json& j) {
  ForestSettings s;
  s.trees = j.value("trees", s.trees);
  s.max_depth = j.value("max_depth", s.max_depth);
  s.min_samples_split = j.value("min_samples_split", s.min_samples_split);
  s.min_samples_leaf = j.value("min_samples_leaf", s.min_samples_leaf);
  if (j.contains("feature_rule")) s.feature_rule = feature_rule_from_string(j.at("feature_rule").get<std::string>());
  s.max_features = j.value("max_features", s.max_features);
  s.seed = j.value("seed", s.seed);
  return s;
}

inline Json to_json(const GbmSettings& s) {
  return Json{{"estimators", s.estimators},
              {"learning_rate", s.learning_rate},
              {"max_features", s.max_features},
              {"max_depth", s.max_depth},
              {"min_samples_split", s.min_samples_split},
              {"min_samples_leaf", s.min_samples_leaf},
              {"seed", s.seed}};
}

inline GbmSettings gbm_settings_from_json(const Json& j) {
  GbmSettings s;
  s.estimators = j.value("estimators", s.estimators);
  s.learning_rate = j.value("learning_rate", s.learning_rate);
  s.max_features = j.value("max_features", s.max_features);
  s.max_depth = j.value("max_depth", s.max_depth);
  s.min_samples_split = j.value("min_samples_split", s.min_samples_split);
  s.min_samples_leaf = j.value("min_samples_leaf", s.min_samples_leaf);
  s.seed = j.value("seed", s.seed);
  return s;
}

// ---------------------------------------------------------------------------
// CART

namespace detail {

using RowList = std::vector<std::uint32_t>;

inline void check_training_data(const Matrix& X, const Vector& y) {
  require(X.rows() > 0 && X.cols() > 0, ErrorKind::empty_input, "tree fitting needs at least one item and feature");
  require(X.rows() == y.size(), ErrorKind::shape,
          "feature matrix has " + std::to_string(X.rows()) + " rows but target has " + std::to_string(y.size()));
  require(X.allFinite() && y.allFinite(), ErrorKind::data, "tree fitting input contains non-finite values");
}

// Per feature, every row index ordered by feature value.
inline std::vector<RowList> presort(const Matrix& X) {
  std::vector<RowList> out(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index f = 0; f < X.cols(); ++f) {
    auto& rows = out[static_cast<std::size_t>(f)];
    rows.resize(static_cast<std::size_t>(X.rows()));
    std::iota(rows.begin(), rows.end(), 0u);
    std::stable_sort(rows.begin(), rows.end(), [&](std::uint32_t a, std::uint32_t b) { return X(a, f) < X(b, f); });
  }
  return out;
}

// Expands the presorted order by per-row multiplicities (bootstrap counts).
inline std::vector<RowList> expand(const std::vector<RowList>& sorted, const std::vector<std::uint32_t>& counts) {
  std::vector<RowList> out(sorted.size());
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  for (std::size_t f = 0; f < sorted.size(); ++f) {
    out[f].reserve(total);
    for (const auto r : sorted[f])
      for (std::uint32_t c = 0; c < counts[r]; ++c) out[f].push_back(r);
  }
  return out;
}

// Grows one tree over presorted row lists. Each node owns the same range
// [begin, end) of every feature's list; a split stably partitions all lists.
class CartBuilder {
 public:
  CartBuilder(const Matrix& X, const Vector& y, std::vector<RowList> sorted, const CartSettings& s,
              std::vector<double>* importance)
      : X_(X), y_(y), sorted_(std::move(sorted)), s_(s), importance_(importance), rng_(s.seed),
        left_(static_cast<std::size_t>(X.rows()), 0), scratch_(sorted_.front().size()) {
    order_ = sorted_.front();
    std::sort(order_.begin(), order_.end());
    features_.resize(static_cast<std::size_t>(X.cols()));
    std::iota(features_.begin(), features_.end(), 0u);
    mtry_ = s.max_features == 0 ? features_.size() : std::min(s.max_features, features_.size());
  }

  Tree build() {
    grow(0, sorted_.front().size(), 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    bool found = false;
    std::uint32_t feature = 0;
    double threshold = 0;
    double gain = 0;
  };

  // Random visiting order, so equally good splits are broken by the tree's seed.
  std::vector<std::uint32_t> candidates() {
    const std::size_t k = std::min(mtry_, features_.size());
    for (std::size_t i = 0; i + 1 < features_.size() && i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, features_.size() - 1);
      std::swap(features_[i], features_[pick(rng_)]);
    }
    return {features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(k)};
  }

  Split best_split(std::size_t b, std::size_t e, double sum) {
    Split best;
    const std::size_t n = e - b;
    const double base = sum * sum / static_cast<double>(n);
    for (const auto f : candidates()) {
      const auto& rows = sorted_[f];
      const auto col = static_cast<Eigen::Index>(f);
      double left_sum = 0;
      for (std::size_t i = b; i + 1 < e; ++i) {
        left_sum += y_(rows[i]);
        const std::size_t nl = i + 1 - b, nr = n - nl;
        const double xi = X_(rows[i], col), xn = X_(rows[i + 1], col);
        if (!(xi < xn) || nl < s_.min_samples_leaf || nr < s_.min_samples_leaf) continue;
        const double right_sum = sum - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(nl) +
                            right_sum * right_sum / static_cast<double>(nr) - base;
        if (!best.found || gain > best.gain + 1e-12 * std::abs(best.gain)) {
          double thr = 0.5 * (xi + xn);
          if (!(thr < xn)) thr = xi;
          best = {true, f, thr, gain};
        }
      }
    }
    return best;
  }

  int grow(std::size_t b, std::size_t e, std::size_t depth) {
    const auto& rows = order_;
    const std::size_t n = e - b;
    double sum = 0;
    for (std::size_t i = b; i < e; ++i) sum += y_(rows[i]);
    const double mean = sum / static_cast<double>(n);
    double sse = 0;
    for (std::size_t i = b; i < e; ++i) sse += (y_(rows[i]) - mean) * (y_(rows[i]) - mean);

    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back(TreeNode{-1, 0.0, -1, -1, mean});
    const bool pure = sse <= 1e-24 * static_cast<double>(n) * (1.0 + mean * mean);
    if (pure || depth >= s_.max_depth || n < s_.min_samples_split || n < 2 * s_.min_samples_leaf) return id;
    const Split split = best_split(b, e, sum);
    if (!split.found) return id;

    const auto col = static_cast<Eigen::Index>(split.feature);
    for (std::size_t i = b; i < e; ++i) left_[rows[i]] = X_(rows[i], col) <= split.threshold ? 1 : 0;
    std::size_t mid = b;
    auto partition = [&](RowList& list) {
      std::size_t l = b, r = 0;
      for (std::size_t i = b; i < e; ++i) {
        if (left_[list[i]])
          list[l++] = list[i];
        else
          scratch_[r++] = list[i];
      }
      std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(r), list.begin() + static_cast<std::ptrdiff_t>(l));
      mid = l;
    };
    for (auto& list : sorted_) partition(list);
    partition(order_);
    if (importance_) (*importance_)[split.feature] += std::max(0.0, split.gain);
    const int l = grow(b, mid, depth + 1);
    const int r = grow(mid, e, depth + 1);
    auto& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature = static_cast<int>(split.feature);
    node.threshold = split.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  const Matrix& X_;
  const Vector& y_;
  std::vector<RowList> sorted_;
  RowList order_;  // node rows by ascending row id, for order-independent sums
  CartSettings s_;
  std::vector<double>* importance_;
  std::mt19937_64 rng_;
  std::vector<char> left_;
  RowList scratch_;
  std::vector<std::uint32_t> features_;
  std::size_t mtry_ = 0;
  Tree tree_;
};

inline Tree fit_presorted(const Matrix& X, const Vector& y, std::vector<RowList> sorted, const CartSettings& s,
                          std::vector<double>* importance = nullptr) {
  return CartBuilder(X, y, std::move(sorted), s, importance).build();
}

inline std::uint64_t tree_seed(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::uint32_t parts[2];
  seq.generate(parts, parts + 2);
  return (static_cast<std::uint64_t>(parts[0]) << 32) | parts[1];
}

}  // namespace detail

inline Tree cart_fit(const Matrix& X, const Vector& y, const CartSettings& settings = {}) {
  detail::check_training_data(X, y);
  require(settings.min_samples_leaf >= 1, ErrorKind::config, "min samples per leaf must be >= 1");
  return detail::fit_presorted(X, y, detail::presort(X), settings);
}

// ---------------------------------------------------------------------------
// Ensembles

enum class EnsembleKind { rf_regressor, gbm_classifier, gbm_regressor };

inline std::string to_string(EnsembleKind k) {
  switch (k) {
    case EnsembleKind::rf_regressor: return "rf-regressor";
    case EnsembleKind::gbm_classifier: return "gbm-classifier";
    case EnsembleKind::gbm_regressor: return "gbm-regressor";
  }
  return "?";
}

inline EnsembleKind ensemble_kind_from_string(std::string_view s) {
  if (s == "rf-regressor") return EnsembleKind::rf_regressor;
  if (s == "gbm-classifier") return EnsembleKind::gbm_classifier;
  if (s == "gbm-regressor") return EnsembleKind::gbm_regressor;
  fail(ErrorKind::parse, "unknown ensemble kind '" + std::string(s) + "'");
}

struct TreeEnsemble {
  EnsembleKind kind = EnsembleKind::rf_regressor;
  std::size_t features = 0;
  std::vector<Tree> trees;
  double initial_score = 0;         // GBM only
  std::vector<double> importances;  // normalized impurity decrease
  std::vector<double> stage_loss;   // GBM training loss after each stage (index 0 = initial)
  Json settings;

  // Raw additive score (GBM) or tree mean (forest).
  template <class Row>
  double decision(const Row& x) const {
    require(static_cast<std::size_t>(x.size()) == features, ErrorKind::shape,
            "ensemble expects " + std::to_string(features) + " features, got " + std::to_string(x.size()));
    if (kind == EnsembleKind::rf_regressor) {
      double acc = 0;
      for (const auto& t : trees) acc += t.predict(x);
      return acc / static_cast<double>(trees.size());
    }
    double score = initial_score;
    for (const auto& t : trees) score += t.predict(x);
    return score;
  }
};

inline double logistic(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

// log(1 + e^z) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

namespace detail {
inline std::vector<double> normalized(std::vector<double> v) {
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  if (total > 0)
    for (double& x : v) x /= total;
  return v;
}
}  // namespace detail

inline TreeEnsemble rf_fit(const Matrix& X, const Vector& y, const ForestSettings& settings = {}) {
  settings.validate();
  detail::check_training_data(X, y);
  const auto n = static_cast<std::size_t>(X.rows());
  const auto F = static_cast<std::size_t>(X.cols());
  const auto sorted = detail::presort(X);
  CartSettings cart{settings.max_depth, settings.min_samples_split, settings.min_samples_leaf,
                    resolve_max_features(settings.feature_rule, settings.max_features, F), 0};

  TreeEnsemble ens;
  ens.kind = EnsembleKind::rf_regressor;
  ens.features = F;
  ens.settings = to_json(settings);
  ens.trees.resize(settings.trees);
  std::vector<std::vector<double>> per_tree(settings.trees, std::vector<double>(F, 0.0));

  // Each tree draws from its own seed, so the result does not depend on scheduling.
  auto fit_one = [&](std::size_t t) {
    const std::uint64_t seed = detail::tree_seed(settings.seed, t);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> draw(0, n - 1);
    std::vector<std::uint32_t> counts(n, 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[draw(rng)];
    CartSettings cs = cart;
    cs.seed = rng();
    ens.trees[t] = detail::fit_presorted(X, y, detail::expand(sorted, counts), cs, &per_tree[t]);
  };

  std::size_t workers = settings.threads ? settings.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, settings.trees);
  if (workers <= 1) {
    for (std::size_t t = 0; t < settings.trees; ++t) fit_one(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < settings.trees; t = next++) fit_one(t);
      });
    for (auto& th : pool) th.join();
  }

  std::vector<double> imp(F, 0.0);
  for (auto& v : per_tree) {
    v = detail::normalized(std::move(v));
    for (std::size_t f = 0; f < F; ++f) imp[f] += v[f];
  }
  ens.importances = detail::normalized(std::move(imp));
  return ens;
}

template <class Row>
double rf_predict(const TreeEnsemble& ens, const Row& x) {
  require(ens.kind == EnsembleKind::rf_regressor, ErrorKind::config, "not a random forest");
  return ens.decision(x);
}

namespace detail {

inline void gbm_check(const Matrix& X, const Vector& y, const GbmSettings& s) {
  s.validate();
  check_training_data(X, y);
}

inline void gbm_importances(TreeEnsemble& ens, std::vector<double> imp) { ens.importances = normalized(std::move(imp)); }

}  // namespace detail

// Logistic-loss boosting. Each leaf takes one Newton step scaled by the
// learning rate; a leaf whose step would raise the loss of its own rows is
// halved until it does not, so training loss never increases.
inline TreeEnsemble gbm_fit_classifier(const Matrix& X, const Vector& y, const GbmSettings& settings = {}) {
  detail::gbm_check(X, y, settings);
  const auto n = static_cast<std::size_t>(X.rows());
  const auto F = static_cast<std::size_t>(X.cols());
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    require(y(static_cast<Eigen::Index>(i)) == 0.0 || y(static_cast<Eigen::Index>(i)) == 1.0, ErrorKind::data,
            "classifier labels must be 0 or 1");
    positives += y(static_cast<Eigen::Index>(i)) == 1.0;
  }
  require(positives > 0 && positives < n, ErrorKind::data, "classifier needs both classes present");

  TreeEnsemble ens;
  ens.kind = EnsembleKind::gbm_classifier;
  ens.features = F;
  ens.settings = to_json(settings);
  const double base = static_cast<double>(positives) / static_cast<double>(n);
  ens.initial_score = std::log(base / (1.0 - base));

  const auto sorted = detail::presort(X);
  CartSettings cart{settings.max_depth, settings.min_samples_split, settings.min_samples_leaf, settings.max_features, 0};
  std::mt19937_64 rng(settings.seed);
  std::vector<double> score(n, ens.initial_score);
  std::vector<double> imp(F, 0.0);
  auto loss_of = [&](std::size_t i, double s) { return softplus(s) - y(static_cast<Eigen::Index>(i)) * s; };
  auto total_loss = [&] {
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += loss_of(i, score[i]);
    return acc / static_cast<double>(n);
  };
  ens.stage_loss.push_back(total_loss());

  Vector residual(static_cast<Eigen::Index>(n));
  std::vector<std::size_t> leaf(n);
  for (std::size_t stage = 0; stage < settings.estimators; ++stage) {
    for (std::size_t i = 0; i < n; ++i) residual(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(i)) - logistic(score[i]);
    CartSettings cs = cart;
    cs.seed = rng();
    Tree tree = detail::fit_presorted(X, residual, sorted, cs, &imp);

    std::vector<double> num(tree.nodes.size(), 0.0), den(tree.nodes.size(), 0.0);
    std::vector<std::vector<std::size_t>> members(tree.nodes.size());
    for (std::size_t i = 0; i < n; ++i) {
      leaf[i] = tree.leaf_index(X.row(static_cast<Eigen::Index>(i)));
      const double p = logistic(score[i]);
      num[leaf[i]] += residual(static_cast<Eigen::Index>(i));
      den[leaf[i]] += p * (1.0 - p);
      members[leaf[i]].push_back(i);
    }
    for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
      if (tree.nodes[k].feature >= 0) continue;
      double step = den[k] > 1e-150 ? settings.learning_rate * num[k] / den[k] : 0.0;
      if (!std::isfinite(step)) step = 0.0;
      double before = 0;
      for (const auto i : members[k]) before += loss_of(i, score[i]);
      for (int halvings = 0; step != 0.0; ++halvings) {
        double after = 0;
        for (const auto i : members[k]) after += loss_of(i, score[i] + step);
        if (after <= before) break;
        step = halvings < 60 ? 0.5 * step : 0.0;
      }
      tree.nodes[k].value = step;
    }
    for (std::size_t i = 0; i < n; ++i) score[i] += tree.nodes[leaf[i]].value;
    ens.trees.push_back(std::move(tree));
    ens.stage_loss.push_back(total_loss());
  }
  detail::gbm_importances(ens, std::move(imp));
  return ens;
}

template <class Row>
double gbm_predict_proba(const TreeEnsemble& ens, const Row& x) {
  require(ens.kind == EnsembleKind::gbm_classifier, ErrorKind::config, "not a boosted classifier");
  return logistic(ens.decision(x));
}

// Squared-loss boosting with mean-residual leaves.
inline TreeEnsemble gbm_fit_regressor(const Matrix& X, const Vector& y, const GbmSettings& settings = {}) {
  detail::gbm_check(X, y, settings);
  require(X.rows() >= 2, ErrorKind::empty_input, "regressor needs at least two items");
  const auto n = static_cast<std::size_t>(X.rows());
  const auto F = static_cast<std::size_t>(X.cols());

  TreeEnsemble ens;
  ens.kind = EnsembleKind::gbm_regressor;
  ens.features = F;
  ens.settings = to_json(settings);
  ens.initial_score = y.mean();

  const auto sorted = detail::presort(X);
  CartSettings cart{settings.max_depth, settings.min_samples_split, settings.min_samples_leaf, settings.max_features, 0};
  std::mt19937_64 rng(settings.seed);
  Vector score = Vector::Constant(static_cast<Eigen::Index>(n), ens.initial_score);
  std::vector<double> imp(F, 0.0);
  ens.stage_loss.push_back((y - score).squaredNorm() / static_cast<double>(n));
  for (std::size_t stage = 0; stage < settings.estimators; ++stage) {
    const Vector residual = y - score;
    CartSettings cs = cart;
    cs.seed = rng();
    Tree tree = detail::fit_presorted(X, residual, sorted, cs, &imp);
    for (auto& node : tree.nodes)
      if (node.feature < 0) node.value *= settings.learning_rate;
    for (std::size_t i = 0; i < n; ++i) score(static_cast<Eigen::Index>(i)) += tree.predict(X.row(static_cast<Eigen::Index>(i)));
    ens.trees.push_back(std::move(tree));
    ens.stage_loss.push_back((y - score).squaredNorm() / static_cast<double>(n));
  }
  detail::gbm_importances(ens, std::move(imp));
  return ens;
}

template <class Row>
double gbm_predict(const TreeEnsemble& ens, const Row& x) {
  require(ens.kind == EnsembleKind::gbm_regressor, ErrorKind::config, "not a boosted regressor");
  return ens.decision(x);
}

// Row-wise predictions: probabilities for classifiers, values otherwise.
inline std::vector<double> predict_rows(const TreeEnsemble& ens, const Matrix& X) {
  std::vector<double> out(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double d = ens.decision(X.row(i));
    out[static_cast<std::size_t>(i)] = ens.kind == EnsembleKind::gbm_classifier ? logistic(d) : d;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline Json ensemble_to_json(const TreeEnsemble& ens) {
  Json j = header("bwpredict-ensemble");
  j["kind"] = to_string(ens.kind);
  j["features"] = ens.features;
  j["settings"] = ens.settings;
  j["initial_score"] = ens.initial_score;
  j["importances"] = ens.importances;
  j["stage_loss"] = ens.stage_loss;
  Json trees = Json::array();
  for (const auto& t : ens.trees) {
    std::vector<int> feature, left, right;
    std::vector<double> threshold, value;
    for (const auto& n : t.nodes) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      value.push_back(n.value);
    }
    trees.push_back(Json{{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"value", value}});
  }
  j["trees"] = std::move(trees);
  return j;
}

inline TreeEnsemble ensemble_from_json(const Json& j) {
  check_header(j, "bwpredict-ensemble");
  TreeEnsemble ens;
  ens.kind = ensemble_kind_from_string(j.at("kind").get<std::string>());
  ens.features = j.at("features").get<std::size_t>();
  ens.settings = j.at("settings");
  ens.initial_score = j.at("initial_score").get<double>();
  ens.importances = j.at("importances").get<std::vector<double>>();
  ens.stage_loss = j.value("stage_loss", std::vector<double>{});
  for (const auto& jt : j.at("trees")) {
    const auto feature = jt.at("feature").get<std::vector<int>>();
    const auto threshold = jt.at("threshold").get<std::vector<double>>();
    const auto left = jt.at("left").get<std::vector<int>>();
    const auto right = jt.at("right").get<std::vector<int>>();
    const auto value = jt.at("value").get<std::vector<double>>();
    const std::size_t m = feature.size();
    require(m > 0 && threshold.size() == m && left.size() == m && right.size() == m && value.size() == m,
            ErrorKind::parse, "malformed tree");
    Tree t;
    for (std::size_t i = 0; i < m; ++i) {
      const bool internal = feature[i] >= 0;
      require(!internal || (static_cast<std::size_t>(feature[i]) < ens.features && left[i] > 0 && right[i] > 0 &&
                            static_cast<std::size_t>(left[i]) < m && static_cast<std::size_t>(right[i]) < m &&
                            std::isfinite(threshold[i])),
              ErrorKind::parse, "malformed tree node");
      require(std::isfinite(value[i]), ErrorKind::parse, "non-finite leaf value");
      t.nodes.push_back({feature[i], threshold[i], left[i], right[i], value[i]});
    }
    ens.trees.push_back(std::move(t));
  }
  require(!ens.trees.empty(), ErrorKind::parse, "ensemble has no trees");
  return ens;
}

}  // namespace bwp
