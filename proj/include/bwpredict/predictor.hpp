#pragma once

#include <cstddef>
#include <string>

#include "bwpredict/trace.hpp"

namespace bwp {

// Forecasts b(t + horizon) from the newest `window()` raw measurement rows
// (oldest row first, columns in schema order). Stateful filters treat
// successive calls as a stream advancing one sample per call; `reset()`
// returns them to their initial state.
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual std::string name() const = 0;
  virtual std::size_t window() const = 0;
  virtual std::size_t horizon() const = 0;
  virtual double predict(const Matrix& window) = 0;
  virtual void reset() {}
};

}  // namespace bwp
