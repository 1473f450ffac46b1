#include "langtime/train/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace langtime::train {

double HuberLoss(std::span<const double> residuals, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("huber delta must be positive");
  if (residuals.empty()) throw std::invalid_argument("huber loss of no residuals");
  double sum = 0.0;
  for (double r : residuals) {
    const double a = std::abs(r);
    sum += a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
  }
  return sum / static_cast<double>(residuals.size());
}

ad::Var HuberLoss(ad::Graph& g, ad::Var residuals, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("huber delta must be positive");
  return g.Mean(g.Huber(residuals, delta));
}

PretrainLossVars PretrainLoss(ad::Graph& g, ad::Var x_hat, ad::Var x, ad::Var y_hat, ad::Var y,
                              double alpha, double delta) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (g.shape(x_hat) != g.shape(x)) {
    throw std::invalid_argument("reconstruction shape " + ad::ShapeToString(g.shape(x_hat)) +
                                " does not match input " + ad::ShapeToString(g.shape(x)));
  }
  if (g.shape(y_hat) != g.shape(y)) {
    throw std::invalid_argument("prediction shape " + ad::ShapeToString(g.shape(y_hat)) +
                                " does not match target " + ad::ShapeToString(g.shape(y)));
  }
  PretrainLossVars v;
  v.reconstruction = HuberLoss(g, g.Sub(x_hat, x), delta);
  v.prediction = HuberLoss(g, g.Sub(y_hat, y), delta);
  v.total = g.Add(g.Scale(v.reconstruction, alpha), g.Scale(v.prediction, 1.0 - alpha));
  return v;
}

}  // namespace langtime::train
