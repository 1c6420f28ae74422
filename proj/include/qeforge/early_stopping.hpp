#pragma once

#include <cstddef>
#include <span>

#include "qeforge/error.hpp"

namespace qeforge {

inline constexpr double kImprovementTolerance = 1e-9;

/// Index of the best (strict minimum) loss: a later value counts as better
/// only if it is lower by more than the tolerance.
inline std::size_t best_index(std::span<const double> losses) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < losses.size(); ++i)
    if (losses[i] < losses[best] - kImprovementTolerance) best = i;
  return best;
}

/// True once `patience` evaluations have passed since the best one.
inline bool should_stop(std::span<const double> losses, std::size_t patience) {
  if (patience < 1) throw ValidationError("patience must be at least 1");
  if (losses.empty()) return false;
  return losses.size() - 1 - best_index(losses) >= patience;
}

}  // namespace qeforge
