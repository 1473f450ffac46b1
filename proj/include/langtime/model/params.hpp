#ifndef LANGTIME_MODEL_PARAMS_HPP_
#define LANGTIME_MODEL_PARAMS_HPP_

#include <map>
#include <random>
#include <string>
#include <vector>

#include "langtime/autodiff/graph.hpp"

namespace langtime::model {

// Named parameter tensors, kept in creation order.
class ParamStore {
 public:
  void Add(const std::string& name, ad::Tensor value);
  const ad::Tensor& at(const std::string& name) const;
  ad::Tensor& at(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  const std::vector<std::string>& names() const { return names_; }
  std::int64_t size() const { return static_cast<std::int64_t>(names_.size()); }
  std::int64_t NumScalars() const;

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<ad::Tensor> values_;
  std::map<std::string, std::size_t> index_;
};

// Parameters placed into one graph, either as differentiable inputs (named
// after the parameter) or as constants.
class BoundParams {
 public:
  BoundParams(ad::Graph& g, const ParamStore& store, bool differentiable);
  ad::Var operator()(const std::string& name) const;
  ad::Graph& graph() const { return *g_; }
  const std::map<std::string, ad::Var>& vars() const { return vars_; }

 private:
  ad::Graph* g_;
  std::map<std::string, ad::Var> vars_;
};

}  // namespace langtime::model

#endif  // LANGTIME_MODEL_PARAMS_HPP_
