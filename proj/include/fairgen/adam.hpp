// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fairgen/params.hpp"

namespace fairgen {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moments are keyed by parameter name so that a
// subset of parameters may be frozen (requires_grad == false) without
// disturbing the bookkeeping of the others.
class AdamState {
 public:
  struct Moments {
    std::vector<double> m, v;
  };

  explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Applies one update to every parameter that requires a gradient and has
  // one accumulated. Refuses (throws NumericError) without touching any
  // parameter if a non-finite gradient is present. Gradients are cleared
  // after a successful step.
  void step(ParamSet& params, double lr);

  std::uint64_t step_count() const { return step_count_; }
  void set_step_count(std::uint64_t t) { step_count_ = t; }

  const std::map<std::string, Moments>& moments() const { return moments_; }
  void restore_moments(const std::string& name, std::vector<double> m,
                       std::vector<double> v) {
    moments_[name] = Moments{std::move(m), std::move(v)};
  }

  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::uint64_t step_count_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace fairgen
