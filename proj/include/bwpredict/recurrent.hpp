#pragma once

// Stacked LSTM and temporal-pattern-attention (TPA) forecasting networks.

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "bwpredict/autodiff.hpp"
#include "bwpredict/trace.hpp"

namespace bwp::nn {

using Var = Tape::Var;

inline void fill_uniform(Tensor& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.values) v = dist(rng);
}

// Gate blocks are laid out [input | forget | candidate | output] along columns.
struct LstmLayer {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  Tensor w_input;   // input_size x 4h
  Tensor w_hidden;  // h x 4h
  Tensor bias;      // 1 x 4h

  static LstmLayer create(std::size_t input_size, std::size_t hidden_size, std::mt19937_64& rng) {
    require(input_size >= 1 && hidden_size >= 1, ErrorKind::config, "LSTM sizes must be >= 1");
    LstmLayer l{input_size, hidden_size, Tensor(input_size, 4 * hidden_size), Tensor(hidden_size, 4 * hidden_size),
                Tensor(1, 4 * hidden_size)};
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
    fill_uniform(l.w_input, bound, rng);
    fill_uniform(l.w_hidden, bound, rng);
    for (std::size_t j = hidden_size; j < 2 * hidden_size; ++j) l.bias.values[j] = 1.0;
    return l;
  }
};

// Attention head over the last layer's hidden states: k filters of length w
// convolve each hidden feature's history into H^C (hidden x k); each row of
// H^C is scored against h_t through W_a and squashed by a sigmoid.
struct TpaHead {
  std::size_t filters = 0;
  std::size_t window = 0;
  std::size_t hidden = 0;
  Tensor conv;      // k x w
  Tensor score;     // W_a, k x hidden
  Tensor w_state;   // hidden x hidden, applied to h_t
  Tensor w_context; // k x hidden, applied to V_t

  static TpaHead create(std::size_t hidden, std::size_t filters, std::size_t window, std::mt19937_64& rng) {
    require(hidden >= 1 && filters >= 1 && window >= 1, ErrorKind::config, "TPA sizes must be >= 1");
    TpaHead h{filters, window, hidden, Tensor(filters, window), Tensor(filters, hidden), Tensor(hidden, hidden),
              Tensor(filters, hidden)};
    fill_uniform(h.conv, 1.0 / std::sqrt(static_cast<double>(window)), rng);
    fill_uniform(h.score, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    fill_uniform(h.w_state, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    fill_uniform(h.w_context, 1.0 / std::sqrt(static_cast<double>(filters)), rng);
    return h;
  }
};

enum class ModelKind { lstm, tpa };

inline std::string to_string(ModelKind k) { return k == ModelKind::lstm ? "lstm" : "tpa"; }

inline ModelKind model_kind_from_string(std::string_view s) {
  if (s == "lstm") return ModelKind::lstm;
  if (s == "tpa") return ModelKind::tpa;
  fail(ErrorKind::config, "unknown model kind '" + std::string(s) + "' (expected lstm or tpa)");
}

struct RecurrentModel {
  ModelKind kind = ModelKind::lstm;
  std::size_t window = 5;
  double dropout = 0.0;
  std::vector<LstmLayer> layers;
  std::optional<TpaHead> head;
  Tensor out_weight;  // hidden x 1
  Tensor out_bias;    // 1 x 1

  static RecurrentModel create(ModelKind kind, std::size_t inputs, std::size_t window, std::size_t layers,
                               std::size_t units, std::size_t filters, double dropout, std::mt19937_64& rng) {
    require(layers >= 1, ErrorKind::config, "need at least one recurrent layer");
    require(window >= 1, ErrorKind::config, "window must be >= 1");
    RecurrentModel m;
    m.kind = kind;
    m.window = window;
    m.dropout = dropout;
    for (std::size_t l = 0; l < layers; ++l) m.layers.push_back(LstmLayer::create(l == 0 ? inputs : units, units, rng));
    if (kind == ModelKind::tpa) m.head = TpaHead::create(units, filters, window, rng);
    m.out_weight = Tensor(units, 1);
    fill_uniform(m.out_weight, 1.0 / std::sqrt(static_cast<double>(units)), rng);
    m.out_bias = Tensor(1, 1);
    return m;
  }

  std::size_t inputs() const { return layers.front().input_size; }
  std::size_t hidden() const { return layers.back().hidden_size; }

  std::vector<std::pair<std::string, Tensor*>> named_parameters() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "lstm" + std::to_string(l) + ".";
      out.emplace_back(p + "w_input", &layers[l].w_input);
      out.emplace_back(p + "w_hidden", &layers[l].w_hidden);
      out.emplace_back(p + "bias", &layers[l].bias);
    }
    if (head) {
      out.emplace_back("tpa.conv", &head->conv);
      out.emplace_back("tpa.score", &head->score);
      out.emplace_back("tpa.w_state", &head->w_state);
      out.emplace_back("tpa.w_context", &head->w_context);
    }
    out.emplace_back("out.weight", &out_weight);
    out.emplace_back("out.bias", &out_bias);
    return out;
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }
};

// Dropout is active only when `rng` is non-null.
struct ForwardContext {
  std::mt19937_64* rng = nullptr;
  double dropout = 0.0;
};

inline Var apply_dropout(Tape& tape, Var x, const ForwardContext& ctx) {
  if (!ctx.rng || ctx.dropout <= 0.0) return x;
  const double keep = 1.0 - ctx.dropout;
  std::bernoulli_distribution draw(keep);
  std::vector<double> mask(tape.value(x).size());
  for (double& m : mask) m = draw(*ctx.rng) ? 1.0 / keep : 0.0;
  return tape.mul_const(x, std::move(mask));
}

// Runs the stack over `steps` (w nodes, each B x inputs, oldest first) and
// returns the last layer's hidden state at every step.
inline std::vector<Var> lstm_stack(Tape& tape, std::vector<LstmLayer>& layers, std::vector<Var> steps,
                                   const ForwardContext& ctx) {
  const std::size_t B = tape.rows(steps.front());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& layer = layers[l];
    require(tape.cols(steps.front()) == layer.input_size, ErrorKind::shape,
            "LSTM layer " + std::to_string(l) + " expects " + std::to_string(layer.input_size) + " inputs, got " +
                std::to_string(tape.cols(steps.front())));
    if (l > 0)
      for (auto& s : steps) s = apply_dropout(tape, s, ctx);
    const std::size_t H = layer.hidden_size;
    const Var wx = tape.param(layer.w_input);
    const Var wh = tape.param(layer.w_hidden);
    const Var b = tape.param(layer.bias);
    Var h = tape.constant(B, H, std::vector<double>(B * H, 0.0));
    Var c = tape.constant(B, H, std::vector<double>(B * H, 0.0));
    std::vector<Var> outputs;
    outputs.reserve(steps.size());
    for (const Var x : steps) {
      const Var gates = tape.add_row(tape.add(tape.matmul(x, wx), tape.matmul(h, wh)), b);
      const Var i = tape.sigmoid(tape.slice_cols(gates, 0, H));
      const Var f = tape.sigmoid(tape.slice_cols(gates, H, 2 * H));
      const Var g = tape.tanh(tape.slice_cols(gates, 2 * H, 3 * H));
      const Var o = tape.sigmoid(tape.slice_cols(gates, 3 * H, 4 * H));
      c = tape.add(tape.mul(f, c), tape.mul(i, g));
      h = tape.mul(o, tape.tanh(c));
      outputs.push_back(h);
    }
    steps = std::move(outputs);
  }
  return steps;
}

struct TpaNodes {
  Var hc;       // B x (hidden * k)
  Var alpha;    // B x hidden
  Var context;  // B x k
  Var state;    // h'_t, B x hidden
};

inline TpaNodes tpa_attend(Tape& tape, TpaHead& head, const std::vector<Var>& hidden_states) {
  require(hidden_states.size() == head.window, ErrorKind::shape,
          "TPA window " + std::to_string(head.window) + " != input window " + std::to_string(hidden_states.size()));
  const Var last = hidden_states.back();
  require(tape.cols(last) == head.hidden, ErrorKind::shape, "TPA hidden size mismatch");
  const Var hc = tape.temporal_conv(hidden_states, tape.param(head.conv));
  const Var u = tape.matmul_nt(last, tape.param(head.score));  // B x k
  const Var alpha = tape.sigmoid(tape.row_bilinear(hc, u, head.hidden, head.filters));
  const Var context = tape.row_weighted_sum(alpha, hc, head.hidden, head.filters);
  const Var state =
      tape.add(tape.matmul(last, tape.param(head.w_state)), tape.matmul(context, tape.param(head.w_context)));
  return {hc, alpha, context, state};
}

// Full network: B x 1 normalized prediction node.
inline Var model_forward(Tape& tape, RecurrentModel& model, const std::vector<Var>& steps, const ForwardContext& ctx) {
  require(steps.size() == model.window, ErrorKind::shape,
          "model expects a window of " + std::to_string(model.window) + " rows, got " + std::to_string(steps.size()));
  const auto hs = lstm_stack(tape, model.layers, steps, ctx);
  Var top = hs.back();
  if (model.kind == ModelKind::tpa) top = tpa_attend(tape, *model.head, hs).state;
  top = apply_dropout(tape, top, ctx);
  return tape.add_row(tape.matmul(top, tape.param(model.out_weight)), tape.param(model.out_bias));
}

// Splits a batch of w x n windows into w step nodes of B x n.
inline std::vector<Var> batch_steps(Tape& tape, const std::vector<const Matrix*>& windows) {
  require(!windows.empty(), ErrorKind::empty_input, "empty batch");
  const auto w = static_cast<std::size_t>(windows.front()->rows());
  const auto n = static_cast<std::size_t>(windows.front()->cols());
  const std::size_t B = windows.size();
  std::vector<Var> steps;
  steps.reserve(w);
  for (std::size_t l = 0; l < w; ++l) {
    std::vector<double> v(B * n);
    for (std::size_t b = 0; b < B; ++b) {
      require(static_cast<std::size_t>(windows[b]->rows()) == w && static_cast<std::size_t>(windows[b]->cols()) == n,
              ErrorKind::shape, "batch windows differ in shape");
      for (std::size_t c = 0; c < n; ++c)
        v[b * n + c] = (*windows[b])(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(c));
    }
    steps.push_back(tape.constant(B, n, std::move(v)));
  }
  return steps;
}

struct LstmOutput {
  Matrix hidden_states;  // w x hidden
  Vector final_hidden;
};

// Single-window inference through the recurrent stack.
inline LstmOutput lstm_forward(std::vector<LstmLayer>& layers, const Matrix& window) {
  require(!layers.empty(), ErrorKind::config, "empty layer stack");
  require(static_cast<std::size_t>(window.cols()) == layers.front().input_size, ErrorKind::shape,
          "window has " + std::to_string(window.cols()) + " columns, first layer expects " +
              std::to_string(layers.front().input_size));
  Tape tape;
  const auto hs = lstm_stack(tape, layers, batch_steps(tape, {&window}), {});
  const auto H = layers.back().hidden_size;
  LstmOutput out{Matrix(window.rows(), static_cast<Eigen::Index>(H)), Vector(static_cast<Eigen::Index>(H))};
  for (std::size_t l = 0; l < hs.size(); ++l)
    for (std::size_t j = 0; j < H; ++j)
      out.hidden_states(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j)) = tape.value(hs[l])[j];
  out.final_hidden = out.hidden_states.row(window.rows() - 1).transpose();
  return out;
}

struct TpaOutput {
  double prediction = 0;  // normalized
  Matrix hc;              // hidden x k
  Vector alpha;           // hidden
  Vector context;         // k
};

inline TpaOutput tpa_forward(std::vector<LstmLayer>& layers, TpaHead& head, Tensor& out_weight, Tensor& out_bias,
                             const Matrix& window) {
  require(static_cast<std::size_t>(window.rows()) == head.window, ErrorKind::shape,
          "TPA attention window " + std::to_string(head.window) + " != input window " + std::to_string(window.rows()));
  Tape tape;
  const auto hs = lstm_stack(tape, layers, batch_steps(tape, {&window}), {});
  const auto nodes = tpa_attend(tape, head, hs);
  const Var y = tape.add_row(tape.matmul(nodes.state, tape.param(out_weight)), tape.param(out_bias));
  const auto m = static_cast<Eigen::Index>(head.hidden), k = static_cast<Eigen::Index>(head.filters);
  TpaOutput out{tape.scalar(y), Matrix(m, k), Vector(m), Vector(k)};
  for (Eigen::Index i = 0; i < m; ++i) {
    out.alpha(i) = tape.value(nodes.alpha)[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < k; ++j) out.hc(i, j) = tape.value(nodes.hc)[static_cast<std::size_t>(i * k + j)];
  }
  for (Eigen::Index j = 0; j < k; ++j) out.context(j) = tape.value(nodes.context)[static_cast<std::size_t>(j)];
  return out;
}

inline TpaOutput tpa_forward(RecurrentModel& model, const Matrix& window) {
  require(model.head.has_value(), ErrorKind::config, "model has no TPA head");
  return tpa_forward(model.layers, *model.head, model.out_weight, model.out_bias, window);
}

// Normalized inference output for one window (dropout off).
inline double model_predict(RecurrentModel& model, const Matrix& window) {
  require(static_cast<std::size_t>(window.cols()) == model.inputs(), ErrorKind::shape,
          "window has " + std::to_string(window.cols()) + " columns, model expects " + std::to_string(model.inputs()));
  Tape tape;
  return tape.scalar(model_forward(tape, model, batch_steps(tape, {&window}), {}));
}

}  // namespace bwp::nn
