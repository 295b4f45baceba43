// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fairgen/tensor.hpp"

namespace fairgen {

// Named collection of trainable tensors. Order of registration is the
// canonical order used by the optimizer and the checkpoint writer, so it
// must be deterministic.
class ParamSet {
 public:
  Tensor add(const std::string& name, Tensor t) {
    if (find(name)) throw ContractError("parameter registered twice: " + name);
    items_.emplace_back(name, t);
    return t;
  }

  Tensor* find(const std::string& name) {
    for (auto& [n, t] : items_)
      if (n == name) return &t;
    return nullptr;
  }

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : items_)
      if (n == name) return &t;
    return nullptr;
  }

  Tensor& at(const std::string& name) {
    Tensor* t = find(name);
    if (!t) throw ContractError("unknown parameter: " + name);
    return *t;
  }

  const Tensor& at(const std::string& name) const {
    const Tensor* t = find(name);
    if (!t) throw ContractError("unknown parameter: " + name);
    return *t;
  }

  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor>>& items() const {
    return items_;
  }

  void zero_grads() {
    for (auto& [n, t] : items_) t.zero_grad();
  }

  void set_requires_grad(bool flag) {
    for (auto& [n, t] : items_) t.set_requires_grad(flag);
  }

  int total_size() const {
    int s = 0;
    for (const auto& [n, t] : items_) s += t.numel();
    return s;
  }

  // Deep copy of all parameter values (for snapshots / best-epoch restore).
  std::vector<std::vector<double>> snapshot() const {
    std::vector<std::vector<double>> out;
    out.reserve(items_.size());
    for (const auto& [n, t] : items_) out.push_back(t.data());
    return out;
  }

  void restore(const std::vector<std::vector<double>>& snap) {
    if (snap.size() != items_.size())
      throw ContractError("snapshot does not match parameter set");
    for (std::size_t i = 0; i < snap.size(); ++i) {
      if (snap[i].size() != items_[i].second.data().size())
        throw ContractError("snapshot tensor size mismatch at " + items_[i].first);
      items_[i].second.data() = snap[i];
    }
  }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

}  // namespace fairgen
