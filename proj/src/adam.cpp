// SPDX-License-Identifier: Apache-2.0
#include "fairgen/adam.hpp"

#include <cmath>

namespace fairgen {

void AdamState::step(ParamSet& params, double lr) {
  // Validate first so a poisoned batch leaves the model untouched.
  for (auto& [name, t] : params.items()) {
    if (!t.requires_grad() || !t.has_grad()) continue;
    for (double g : t.grad())
      if (!std::isfinite(g))
        throw NumericError("adam: non-finite gradient in " + name);
  }
  const std::uint64_t t_step = ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_step));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_step));
  for (auto& [name, t] : params.items()) {
    if (!t.requires_grad() || !t.has_grad()) continue;
    Moments& mo = moments_[name];
    if (mo.m.size() != t.data().size()) {
      mo.m.assign(t.data().size(), 0.0);
      mo.v.assign(t.data().size(), 0.0);
    }
    auto& g = t.grad();
    auto& p = t.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * g[i];
      mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = mo.m[i] / bc1;
      const double vhat = mo.v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    t.zero_grad();
  }
}

}  // namespace fairgen
