#include "langtime/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace langtime::ad {

GradCheckResult FiniteDifferenceCheck(Graph& graph, Var loss,
                                      const std::vector<Var>& leaves, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be > 0");
  graph.Evaluate();
  const Gradients grads = graph.Backpropagate(loss);

  GradCheckResult result;
  for (Var leaf : leaves) {
    const Tensor original = graph.value(leaf);
    const Tensor analytic = grads[leaf];
    Tensor probe = original;
    for (std::size_t i = 0; i < original.size(); ++i) {
      probe[i] = original[i] + h;
      graph.SetLeafValue(leaf, probe);
      graph.Evaluate();
      const double up = graph.value(loss).item();
      probe[i] = original[i] - h;
      graph.SetLeafValue(leaf, probe);
      graph.Evaluate();
      const double down = graph.value(loss).item();
      probe[i] = original[i];

      const double numeric = (up - down) / (2.0 * h);
      const double err =
          std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
      ++result.entries_checked;
      if (err > result.max_relative_error || !result.worst_leaf.valid()) {
        result.max_relative_error = std::max(err, result.max_relative_error);
        result.worst_leaf = leaf;
        result.worst_entry = i;
      }
    }
    graph.SetLeafValue(leaf, original);
  }
  graph.Evaluate();
  return result;
}

}  // namespace langtime::ad
