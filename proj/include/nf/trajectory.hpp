#pragma once

#include <vector>

#include "nf/array.hpp"
#include "nf/grid.hpp"

namespace nf {

/// Time-indexed states on one grid; states[t] is points x channels.
struct Trajectory {
  std::vector<Field> states;
  double dt = 0.0;
  Grid grid;
  /// Optional per-step labels (dH/du or du/dt), same shape as states.
  std::vector<Field> labels;

  [[nodiscard]] int steps() const { return static_cast<int>(states.size()); }
  [[nodiscard]] int channels() const { return states.empty() ? 0 : static_cast<int>(states.front().cols()); }
};

}  // namespace nf
