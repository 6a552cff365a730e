#pragma once

// Training loop and the trained-network Predictor.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "bwpredict/predictor.hpp"
#include "bwpredict/recurrent.hpp"

namespace bwp {

struct TrainConfig {
  std::size_t layers = 3;
  std::size_t units = 32;
  double dropout = 0.2;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  std::size_t filters = 32;  // TPA only

  void validate() const {
    require(dropout >= 0.0 && dropout < 1.0, ErrorKind::config, "dropout must lie in [0,1)");
    require(learning_rate > 0.0, ErrorKind::config, "learning rate must be > 0");
    require(layers >= 1 && units >= 1 && filters >= 1, ErrorKind::config, "layers, units and filters must be >= 1");
    require(batch_size >= 1 && max_epochs >= 1, ErrorKind::config, "batch size and epochs must be >= 1");
  }
};

inline Json to_json(const TrainConfig& c) {
  return Json{{"layers", c.layers},   {"units", c.units},           {"dropout", c.dropout},
              {"learning_rate", c.learning_rate}, {"beta1", c.beta1}, {"beta2", c.beta2},
              {"epsilon", c.epsilon}, {"batch_size", c.batch_size}, {"max_epochs", c.max_epochs},
              {"patience", c.patience}, {"seed", c.seed},            {"filters", c.filters}};
}

inline TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  c.layers = j.value("layers", c.layers);
  c.units = j.value("units", c.units);
  c.dropout = j.value("dropout", c.dropout);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.filters = j.value("filters", c.filters);
  return c;
}

class Adam {
 public:
  Adam(std::vector<nn::Tensor*> params, const TrainConfig& c)
      : params_(std::move(params)), lr_(c.learning_rate), b1_(c.beta1), b2_(c.beta2), eps_(c.epsilon) {
    for (auto* p : params_) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = p.grad[i];
        m[i] = b1_ * m[i] + (1.0 - b1_) * g;
        v[i] = b2_ * v[i] + (1.0 - b2_) * g * g;
        p.values[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      }
    }
  }

 private:
  std::vector<nn::Tensor*> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, b1_, b2_, eps_;
  std::uint64_t t_ = 0;
};

class NeuralPredictor : public Predictor {
 public:
  NeuralPredictor() = default;
  NeuralPredictor(nn::RecurrentModel model, NormStats stats, std::size_t horizon, std::size_t target_column,
                  TrainConfig config)
      : model_(std::move(model)),
        stats_(std::move(stats)),
        horizon_(horizon),
        target_column_(target_column),
        config_(config) {}

  std::string name() const override { return nn::to_string(model_.kind); }
  std::size_t window() const override { return model_.window; }
  std::size_t horizon() const override { return horizon_; }

  // Raw window in, Mbps out (clamped at zero).
  double predict(const Matrix& window) override { return std::max(0.0, predict_unclamped(window)); }

  double predict_unclamped(const Matrix& window) {
    require(static_cast<std::size_t>(window.rows()) == model_.window, ErrorKind::shape,
            "predictor expects " + std::to_string(model_.window) + " rows, got " + std::to_string(window.rows()));
    require(static_cast<std::size_t>(window.cols()) == stats_.width(), ErrorKind::schema,
            "predictor expects " + std::to_string(stats_.width()) + " columns, got " + std::to_string(window.cols()));
    const double z = nn::model_predict(model_, normalize_window(window, stats_));
    return stats_.denormalize(target_column_, z);
  }

  nn::RecurrentModel& model() { return model_; }
  const nn::RecurrentModel& model() const { return model_; }
  const NormStats& stats() const { return stats_; }
  std::size_t target_column() const { return target_column_; }
  const TrainConfig& config() const { return config_; }

  // Schema and code maps of the training trace, kept so a saved model can
  // validate and decode new inputs.
  FeatureSchema schema;
  CodeMaps code_maps;
  std::optional<Matrix> reference_window;  // last raw window of the training trace

 private:
  nn::RecurrentModel model_;
  NormStats stats_;
  std::size_t horizon_ = 1;
  std::size_t target_column_ = 0;
  TrainConfig config_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
};

struct TrainResult {
  NeuralPredictor predictor;
  TrainingLog log;
};

namespace detail {

inline std::vector<std::vector<double>> snapshot(nn::RecurrentModel& model) {
  std::vector<std::vector<double>> out;
  for (auto* p : model.parameters()) out.push_back(p->values);
  return out;
}

inline void restore(nn::RecurrentModel& model, const std::vector<std::vector<double>>& saved) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->values = saved[i];
}

// Mean squared error on normalized targets, inference mode.
inline double dataset_loss(nn::RecurrentModel& model, const WindowedDataset& ds, std::size_t target_column) {
  constexpr std::size_t kChunk = 256;
  double acc = 0;
  for (std::size_t start = 0; start < ds.size(); start += kChunk) {
    const std::size_t end = std::min(ds.size(), start + kChunk);
    std::vector<const Matrix*> windows;
    std::vector<double> targets;
    for (std::size_t i = start; i < end; ++i) {
      windows.push_back(&ds.items[i].input);
      targets.push_back(ds.stats.normalize(target_column, ds.items[i].target));
    }
    nn::Tape tape;
    const auto y = nn::model_forward(tape, model, nn::batch_steps(tape, windows), {});
    const auto& out = tape.value(y);
    for (std::size_t i = 0; i < out.size(); ++i) acc += (out[i] - targets[i]) * (out[i] - targets[i]);
  }
  return acc / static_cast<double>(ds.size());
}

}  // namespace detail

// Minimizes MSE on normalized targets with Adam, shuffling with a seeded
// generator, and keeps the parameters of the best validation epoch.
inline TrainResult train(nn::ModelKind kind, const WindowedDataset& train_set, const WindowedDataset& val_set,
                         const TrainConfig& config) {
  config.validate();
  require(!train_set.empty(), ErrorKind::empty_input, "training set is empty");
  require(val_set.empty() || (val_set.window == train_set.window && val_set.horizon == train_set.horizon),
          ErrorKind::config, "train and validation sets must share window and horizon");
  require(val_set.empty() || (val_set.stats.mean == train_set.stats.mean && val_set.stats.std == train_set.stats.std),
          ErrorKind::config, "train and validation sets must share normalization stats");

  const std::size_t target_col = train_set.target_column;
  const auto inputs = static_cast<std::size_t>(train_set.items.front().input.cols());
  std::mt19937_64 rng(config.seed);
  auto model = nn::RecurrentModel::create(kind, inputs, train_set.window, config.layers, config.units, config.filters,
                                          config.dropout, rng);
  Adam adam(model.parameters(), config);

  std::vector<double> targets(train_set.size());
  for (std::size_t i = 0; i < train_set.size(); ++i)
    targets[i] = train_set.stats.normalize(target_col, train_set.items[i].target);

  TrainingLog log;
  auto best = detail::snapshot(model);
  std::size_t stale = 0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const nn::ForwardContext train_ctx{&rng, config.dropout};

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const Matrix*> windows;
      std::vector<double> batch_targets;
      for (std::size_t i = start; i < end; ++i) {
        windows.push_back(&train_set.items[order[i]].input);
        batch_targets.push_back(targets[order[i]]);
      }
      nn::Tape tape;
      const auto y = nn::model_forward(tape, model, nn::batch_steps(tape, windows), train_ctx);
      const auto loss = tape.mse(y, std::move(batch_targets));
      adam.zero_grad();
      tape.backward(loss);
      adam.step();
      epoch_loss += tape.scalar(loss) * static_cast<double>(end - start);
    }
    epoch_loss /= static_cast<double>(order.size());
    const double val_loss = val_set.empty() ? epoch_loss : detail::dataset_loss(model, val_set, target_col);
    if (!std::isfinite(epoch_loss) || !std::isfinite(val_loss))
      fail(ErrorKind::training, "training diverged: non-finite loss at epoch " + std::to_string(epoch));
    log.epochs.push_back({epoch, epoch_loss, val_loss});
    if (val_loss < log.best_val_loss) {
      log.best_val_loss = val_loss;
      log.best_epoch = epoch;
      best = detail::snapshot(model);
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  detail::restore(model, best);
  return {NeuralPredictor(std::move(model), train_set.stats, train_set.horizon, target_col, config), std::move(log)};
}

// ---------------------------------------------------------------------------
// Serialization

inline Json tensor_to_json(const nn::Tensor& t) { return Json{{"shape", t.shape}, {"values", t.values}}; }

inline void tensor_from_json(const Json& j, nn::Tensor& t) {
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  const auto values = j.at("values").get<std::vector<double>>();
  require(shape == t.shape && values.size() == t.size(), ErrorKind::shape, "stored tensor shape mismatch");
  t.values = values;
  t.zero_grad();
}

inline Json model_to_json(NeuralPredictor& p) {
  Json j = header("bwpredict-model");
  auto& m = p.model();
  j["kind"] = nn::to_string(m.kind);
  j["window"] = m.window;
  j["horizon"] = p.horizon();
  j["inputs"] = m.inputs();
  j["target_column"] = p.target_column();
  j["config"] = to_json(p.config());
  j["schema"] = schema_to_json(p.schema.columns.empty() ? FeatureSchema{} : p.schema);
  Json maps = Json::object();
  for (const auto& [col, labels] : p.code_maps) maps[col] = labels;
  j["code_maps"] = maps;
  j["stats"] = stats_to_json(p.stats());
  if (p.reference_window) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < p.reference_window->rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(p.reference_window->cols()));
      for (Eigen::Index c = 0; c < p.reference_window->cols(); ++c) row[static_cast<std::size_t>(c)] = (*p.reference_window)(r, c);
      rows.push_back(row);
    }
    j["reference_window"] = rows;
  }
  Json params = Json::object();
  for (auto& [name, t] : m.named_parameters()) params[name] = tensor_to_json(*t);
  j["parameters"] = params;
  return j;
}

inline NeuralPredictor model_from_json(const Json& j) {
  check_header(j, "bwpredict-model");
  const auto config = train_config_from_json(j.at("config"));
  const auto kind = nn::model_kind_from_string(j.at("kind").get<std::string>());
  std::mt19937_64 rng(0);
  auto model = nn::RecurrentModel::create(kind, j.at("inputs").get<std::size_t>(), j.at("window").get<std::size_t>(),
                                          config.layers, config.units, config.filters, config.dropout, rng);
  const auto& params = j.at("parameters");
  for (auto& [name, t] : model.named_parameters()) {
    require(params.contains(name), ErrorKind::parse, "model file lacks parameter '" + name + "'");
    tensor_from_json(params.at(name), *t);
  }
  NeuralPredictor p(std::move(model), stats_from_json(j.at("stats")), j.at("horizon").get<std::size_t>(),
                    j.at("target_column").get<std::size_t>(), config);
  if (!j.at("schema").at("columns").empty()) p.schema = schema_from_json(j.at("schema"));
  for (const auto& [col, labels] : j.at("code_maps").items()) p.code_maps[col] = labels.get<std::vector<std::string>>();
  if (j.contains("reference_window")) {
    const auto& rows = j.at("reference_window");
    Matrix w(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.at(0).size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < rows[r].size(); ++c)
        w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c].get<double>();
    p.reference_window = w;
  }
  return p;
}

}  // namespace bwp
