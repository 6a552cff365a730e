#pragma once

// Central finite-difference check of the tape gradients of a recurrent model.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bwpredict/recurrent.hpp"

namespace bwp::nn {

struct GradCheckResult {
  double max_relative_error = 0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

inline double relative_error(double analytic, double numeric, double floor = 1e-7) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Inference-mode MSE over a batch of normalized windows.
inline double batch_loss(RecurrentModel& model, const std::vector<Matrix>& windows, const std::vector<double>& targets) {
  std::vector<const Matrix*> ptrs;
  for (const auto& w : windows) ptrs.push_back(&w);
  Tape tape;
  return tape.scalar(tape.mse(model_forward(tape, model, batch_steps(tape, ptrs), {}), targets));
}

inline GradCheckResult gradient_check(RecurrentModel& model, const std::vector<Matrix>& windows,
                                      const std::vector<double>& targets, double step = 1e-4) {
  std::vector<const Matrix*> ptrs;
  for (const auto& w : windows) ptrs.push_back(&w);
  for (auto* p : model.parameters()) p->zero_grad();
  {
    Tape tape;
    const auto loss = tape.mse(model_forward(tape, model, batch_steps(tape, ptrs), {}), targets);
    tape.backward(loss);
  }
  GradCheckResult res;
  for (auto& [name, t] : model.named_parameters()) {
    for (std::size_t i = 0; i < t->size(); ++i) {
      const double saved = t->values[i];
      t->values[i] = saved + step;
      const double up = batch_loss(model, windows, targets);
      t->values[i] = saved - step;
      const double down = batch_loss(model, windows, targets);
      t->values[i] = saved;
      const double err = relative_error(t->grad[i], (up - down) / (2 * step));
      ++res.checked;
      if (err > res.max_relative_error) {
        res.max_relative_error = err;
        res.worst_parameter = name;
        res.worst_index = i;
      }
    }
  }
  return res;
}

}  // namespace bwp::nn
