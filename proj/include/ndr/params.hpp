#pragma once

// Named parameter storage with Adam state.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ndr/autodiff.hpp"
#include "ndr/common.hpp"

namespace ndr {

template <class T>
struct ParamEntry {
  Mat<T> value;
  Mat<T> grad;
  Mat<T> m1;  // first moment
  Mat<T> m2;  // second moment
  int64_t step = 0;
};

struct AdamConfig {
  double lr = 5e-4;  // paper default
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
class ParameterStore {
 public:
  ParamEntry<T>& add(const std::string& name, int rows, int cols) {
    NDR_CHECK(!entries_.count(name), "parameter already exists: " + name);
    ParamEntry<T>& e = entries_[name];
    e.value = Mat<T>::Zero(rows, cols);
    e.grad = Mat<T>::Zero(rows, cols);
    e.m1 = Mat<T>::Zero(rows, cols);
    e.m2 = Mat<T>::Zero(rows, cols);
    return e;
  }

  bool has(const std::string& name) const { return entries_.count(name) > 0; }

  ParamEntry<T>& at(const std::string& name) {
    auto it = entries_.find(name);
    NDR_CHECK(it != entries_.end(), "unknown parameter: " + name);
    return it->second;
  }
  const ParamEntry<T>& at(const std::string& name) const {
    auto it = entries_.find(name);
    NDR_CHECK(it != entries_.end(), "unknown parameter: " + name);
    return it->second;
  }

  // Name-ordered; iteration order is deterministic.
  std::map<std::string, ParamEntry<T>>& entries() { return entries_; }
  const std::map<std::string, ParamEntry<T>>& entries() const { return entries_; }

  void zero_grad() {
    for (auto& [name, e] : entries_) e.grad.setZero();
  }

  // Tape leaf bound to a parameter; records the binding so accumulate_grads
  // can route adjoints back by name.
  ad::Var<T> use(ad::Tape<T>& tape, const std::string& name) {
    ad::Var<T> v = tape.leaf(at(name).value);
    bindings_.push_back({name, v});
    return v;
  }

  // Run a backward pass from `root` over all bound leaves and add the
  // resulting adjoints into each parameter's grad.
  void accumulate_grads(ad::Tape<T>& tape, ad::Var<T> root) {
    std::vector<ad::Var<T>> targets;
    targets.reserve(bindings_.size());
    for (auto& b : bindings_) targets.push_back(b.var);
    std::vector<ad::Var<T>> grads = tape.grad(root, targets);
    for (size_t i = 0; i < bindings_.size(); ++i)
      at(bindings_[i].name).grad += grads[i].value();
  }

  void clear_bindings() { bindings_.clear(); }

  // Standard Adam update on the named subset (all parameters when empty).
  // A non-finite gradient aborts the step naming the offending parameter.
  void adam_step(const AdamConfig& cfg, const std::vector<std::string>& names = {}) {
    auto update = [&](const std::string& name, ParamEntry<T>& e) {
      if (!e.grad.allFinite())
        throw Error("adam_step: non-finite gradient for parameter " + name);
      e.step += 1;
      T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
      e.m1 = b1 * e.m1 + (T(1) - b1) * e.grad;
      e.m2 = (b2 * e.m2.array() + (T(1) - b2) * e.grad.array().square()).matrix();
      T c1 = T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(e.step)));
      T c2 = T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(e.step)));
      e.value.array() -= static_cast<T>(cfg.lr) * (e.m1.array() / c1) /
                         ((e.m2.array() / c2).sqrt() + static_cast<T>(cfg.eps));
    };
    if (names.empty()) {
      for (auto& [name, e] : entries_) update(name, e);
    } else {
      for (const std::string& n : names) update(n, at(n));
    }
  }

  std::vector<std::string> names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [name, e] : entries_)
      if (name.rfind(prefix, 0) == 0) out.push_back(name);
    return out;
  }

 private:
  struct Binding {
    std::string name;
    ad::Var<T> var;
  };
  std::map<std::string, ParamEntry<T>> entries_;
  std::vector<Binding> bindings_;
};

}  // namespace ndr
