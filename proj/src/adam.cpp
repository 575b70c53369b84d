#include "intrinsic/adam.hpp"

#include <cmath>
#include <map>

#include "intrinsic/errors.hpp"

namespace intrinsic {

void AdamOptions::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be > 0");
}

Adam::Adam(AdamOptions options, std::vector<nets::NamedParameter> params)
    : options_(options), params_(std::move(params)) {
  options_.validate();
  slots_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    slots_[i].m = Tensor(params_[i].var.shape(), 0.0);
    slots_[i].v = Tensor(params_[i].var.shape(), 0.0);
  }
}

void Adam::step() {
  const double b1 = options_.beta1, b2 = options_.beta2;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ag::Var p = params_[i].var;
    if (!p.has_grad()) continue;
    Slot& s = slots_[i];
    ++s.t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
    const Tensor& g = p.grad();
    Tensor& theta = p.mutable_value();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      s.m[k] = b1 * s.m[k] + (1.0 - b1) * g[k];
      s.v[k] = b2 * s.v[k] + (1.0 - b2) * g[k] * g[k];
      const double m_hat = s.m[k] / c1;
      const double v_hat = s.v[k] / c2;
      theta[k] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    ag::Var v = p.var;
    v.zero_grad();
  }
}

std::vector<std::pair<std::string, Tensor>> Adam::state(const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.emplace_back(prefix + ".m." + params_[i].name, slots_[i].m);
    out.emplace_back(prefix + ".v." + params_[i].name, slots_[i].v);
    out.emplace_back(prefix + ".t." + params_[i].name, Tensor::scalar(static_cast<double>(slots_[i].t)));
  }
  return out;
}

void Adam::load_state(const std::string& prefix, const std::vector<std::pair<std::string, Tensor>>& arrays) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [n, t] : arrays) by_name[n] = &t;
  auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("optimizer state is missing '" + name + "'");
    if (it->second->shape() != shape) throw ShapeError("optimizer state '" + name + "' has the wrong shape");
    return *it->second;
  };
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& name = params_[i].name;
    slots_[i].m = fetch(prefix + ".m." + name, params_[i].var.shape());
    slots_[i].v = fetch(prefix + ".v." + name, params_[i].var.shape());
    slots_[i].t = static_cast<std::int64_t>(fetch(prefix + ".t." + name, Shape{}).item());
  }
}

}  // namespace intrinsic
