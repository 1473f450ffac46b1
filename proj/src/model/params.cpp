#include "langtime/model/params.hpp"

#include "langtime/model/config.hpp"

namespace langtime::model {

void ParamStore::Add(const std::string& name, ad::Tensor value) {
  if (contains(name)) throw ModelError("duplicate parameter " + name);
  index_[name] = names_.size();
  names_.push_back(name);
  values_.push_back(std::move(value));
}

const ad::Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ModelError("unknown parameter " + name);
  return values_[it->second];
}

ad::Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ModelError("unknown parameter " + name);
  return values_[it->second];
}

std::int64_t ParamStore::NumScalars() const {
  std::int64_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

BoundParams::BoundParams(ad::Graph& g, const ParamStore& store, bool differentiable) : g_(&g) {
  for (const auto& name : store.names()) {
    vars_[name] = differentiable ? g.Input(name, store.at(name)) : g.Constant(store.at(name));
  }
}

ad::Var BoundParams::operator()(const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ModelError("parameter " + name + " is not bound");
  return it->second;
}

}  // namespace langtime::model
