#ifndef LANGTIME_TRAIN_LOSSES_HPP_
#define LANGTIME_TRAIN_LOSSES_HPP_

#include <span>

#include "langtime/autodiff/graph.hpp"

namespace langtime::train {

// Mean over elements of 0.5 r^2 for |r| <= delta, else delta (|r| - 0.5 delta).
double HuberLoss(std::span<const double> residuals, double delta);
ad::Var HuberLoss(ad::Graph& g, ad::Var residuals, double delta);

struct PretrainLossVars {
  ad::Var total;
  ad::Var reconstruction;
  ad::Var prediction;
};

// alpha * huber(x_hat - x) + (1 - alpha) * huber(y_hat - y).
PretrainLossVars PretrainLoss(ad::Graph& g, ad::Var x_hat, ad::Var x, ad::Var y_hat, ad::Var y,
                              double alpha, double delta);

}  // namespace langtime::train

#endif  // LANGTIME_TRAIN_LOSSES_HPP_
