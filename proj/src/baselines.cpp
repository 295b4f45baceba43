// SPDX-License-Identifier: Apache-2.0
#include "fairgen/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "fairgen/rng.hpp"

namespace fairgen {

namespace {

constexpr std::uint64_t kNattrStream = 0x4e415452ull;  // "NATR"

struct GroupState {
  std::vector<int> alive;  // input indices, ascending
  double sum = 0.0;

  double mean() const {
    return alive.empty() ? 0.0 : sum / static_cast<double>(alive.size());
  }
};

}  // namespace

void NormSpec::validate() const {
  if (!std::isfinite(threshold) || threshold <= 0.0 || threshold >= 1.0)
    throw ConfigError("norm threshold must lie in (0,1)");
}

NormResult norm_preprocess(const std::vector<Record>& records,
                           const AttributeSpace& attrs, const NormSpec& spec) {
  spec.validate();
  attrs.validate();

  const int n_groups = attrs.size();
  std::vector<double> quality(records.size());
  std::vector<GroupState> groups(n_groups);
  for (int i = 0; i < static_cast<int>(records.size()); ++i) {
    quality[i] = spec.oracle(records[i].explanation);
    const int g = attrs.index_of(records[i].attribute);
    groups[g].alive.push_back(i);
    groups[g].sum += quality[i];
  }
  for (int g = 0; g < n_groups; ++g)
    if (groups[g].alive.empty())
      throw DomainError("norm preprocessing needs at least one record per "
                        "group; none carry attribute '" +
                        attrs.values[g] + "'");

  auto max_gap_pair = [&](int& hi, int& lo) {
    hi = lo = 0;
    for (int g = 1; g < n_groups; ++g) {
      if (groups[g].mean() > groups[hi].mean()) hi = g;
      if (groups[g].mean() < groups[lo].mean()) lo = g;
    }
    return groups[hi].mean() - groups[lo].mean();
  };

  NormResult res;
  int hi, lo;
  res.original_gap = max_gap_pair(hi, lo);
  const double target = spec.threshold * res.original_gap;

  double gap;
  while ((gap = max_gap_pair(hi, lo)) > target) {
    // the larger group donates; equal sizes fall to the lower-mean one
    const bool from_hi = groups[hi].alive.size() > groups[lo].alive.size();
    GroupState& g = from_hi ? groups[hi] : groups[lo];
    if (g.alive.size() <= 1)
      throw DomainError(
          "norm preprocessing would empty group '" +
          attrs.values[from_hi ? hi : lo] + "' before the gap (" +
          std::to_string(gap) + ") reaches " + std::to_string(target));

    // trim the end of the distribution that feeds the gap
    std::size_t pick = 0;
    for (std::size_t k = 1; k < g.alive.size(); ++k) {
      const double q = quality[g.alive[k]];
      const double best = quality[g.alive[pick]];
      if (from_hi ? q > best : q < best) pick = k;  // ties keep the earliest
    }
    const int victim = g.alive[pick];
    g.sum -= quality[victim];
    g.alive.erase(g.alive.begin() + static_cast<std::ptrdiff_t>(pick));
    res.removed.push_back(victim);
  }
  res.final_gap = gap;

  std::vector<bool> gone(records.size(), false);
  for (int i : res.removed) gone[i] = true;
  for (int i = 0; i < static_cast<int>(records.size()); ++i)
    if (!gone[i]) res.records.push_back(records[i]);
  return res;
}

GeneratorModel nattr_transform(const GeneratorModel& model,
                               std::uint64_t seed) {
  if (!model.has_attribute())
    throw DomainError("attribute neutralization needs an attribute table");

  GeneratorModel view = model.clone();
  if (model.config().arch == Arch::transformer) {
    view.disable_attr_attention();
  } else {
    Rng rng(Rng::mix({seed, kNattrStream}));
    for (double& v : view.params().at("emb/attr").data())
      v = rng.uniform(-1.0, 1.0);
  }
  return view;
}

}  // namespace fairgen
