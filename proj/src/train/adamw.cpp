#include "langtime/train/adamw.hpp"

#include <cmath>

namespace langtime::train {

void AdamW::Step(model::ParamStore& params, const model::BoundParams& bound,
                 const ad::Gradients& grads, double lr) {
  const auto& c = config_;
  for (const auto& name : params.names()) {
    const ad::Var v = bound(name);
    if (!grads.Reached(v)) continue;
    const ad::Tensor g = grads[v];
    ad::Tensor& w = params.at(name);
    auto [it, fresh] = state_.try_emplace(name);
    Moments& s = it->second;
    if (fresh) {
      s.m = ad::Tensor(w.shape());
      s.v = ad::Tensor(w.shape());
    }
    ++s.t;
    const double c1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < w.size(); ++i) {
      s.m[i] = c.beta1 * s.m[i] + (1.0 - c.beta1) * g[i];
      s.v[i] = c.beta2 * s.v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double update = (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + c.eps);
      w[i] -= lr * (update + c.weight_decay * w[i]);
    }
  }
}

}  // namespace langtime::train
