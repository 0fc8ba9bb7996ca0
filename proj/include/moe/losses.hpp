#pragma once

#include <algorithm>

#include "moe/error.hpp"

namespace moe {

/// Hinge loss max(1 - y f, 0); the reported training metric.
inline double loss_hinge(double f, int y) {
  if (y != 1 && y != -1) throw ConfigError("hinge loss label must be +1 or -1");
  return std::max(1.0 - y * f, 0.0);
}

/// Surrogate 1 - y f; gradients are taken on this, never clipped.
inline double loss_surrogate(double f, int y) {
  if (y != 1 && y != -1) throw ConfigError("surrogate loss label must be +1 or -1");
  return 1.0 - y * f;
}

}  // namespace moe
