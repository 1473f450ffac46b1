#ifndef LANGTIME_TRAIN_ADAMW_HPP_
#define LANGTIME_TRAIN_ADAMW_HPP_

#include <map>
#include <string>

#include "langtime/autodiff/graph.hpp"
#include "langtime/model/params.hpp"
#include "langtime/train/schedule.hpp"

namespace langtime::train {

// Adam moments with decoupled weight decay. Parameters the loss never reached
// are left alone, so an idle curriculum head is neither moved nor decayed.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  void Step(model::ParamStore& params, const model::BoundParams& bound,
            const ad::Gradients& grads, double lr);

  struct Moments {
    ad::Tensor m;
    ad::Tensor v;
    std::int64_t t = 0;
  };
  const std::map<std::string, Moments>& state() const { return state_; }

 private:
  AdamWConfig config_;
  std::map<std::string, Moments> state_;
};

}  // namespace langtime::train

#endif  // LANGTIME_TRAIN_ADAMW_HPP_
