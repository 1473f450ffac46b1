#ifndef LANGTIME_AUTODIFF_GRADCHECK_HPP_
#define LANGTIME_AUTODIFF_GRADCHECK_HPP_

#include <vector>

#include "langtime/autodiff/graph.hpp"

namespace langtime::ad {

struct GradCheckResult {
  double max_relative_error = 0.0;
  Var worst_leaf;
  std::size_t worst_entry = 0;
  std::size_t entries_checked = 0;
};

// Compares analytic gradients against central differences
//   (L(p + h) - L(p - h)) / 2h
// for every entry of every leaf in `leaves`. The error for an entry is
// |analytic - numeric| / max(1, |numeric|). The graph is restored to its
// original leaf values before returning.
GradCheckResult FiniteDifferenceCheck(Graph& graph, Var loss,
                                      const std::vector<Var>& leaves, double h);

}  // namespace langtime::ad

#endif  // LANGTIME_AUTODIFF_GRADCHECK_HPP_
