// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <unordered_set>
#include <vector>

#include "fairgen/corpus.hpp"

namespace fairgen {

// Token count excluding the begin/end/pad markers.
double q_len(const std::vector<std::string>& tokens);

// Number of distinct lexicon tokens present.
double q_feat(const std::vector<std::string>& tokens,
              const std::unordered_set<std::string>& lexicon);

enum class QualityKind { length, feature_count, composite };

// Pure scorer over a token list; higher is better. The model never sees
// inside it, which keeps generated-text scoring swappable.
class QualityOracle {
 public:
  static QualityOracle length();
  static QualityOracle feature_count(std::unordered_set<std::string> lexicon);
  static QualityOracle composite(std::unordered_set<std::string> lexicon,
                                 double w_len = 1.0, double w_feat = 1.0);

  double operator()(const std::vector<std::string>& tokens) const;
  QualityKind kind() const { return kind_; }
  // Stable label used in reports: "length", "feature", "composite".
  const char* name() const;

 private:
  QualityOracle(QualityKind kind, std::unordered_set<std::string> lexicon,
                double w_len, double w_feat);
  QualityKind kind_;
  std::unordered_set<std::string> lexicon_;
  double w_len_, w_feat_;
};

struct GroupSummary {
  std::string value;
  int n_records = 0;
  double mean_len = 0.0;
  double mean_feat = 0.0;
};

// Per-group ground-truth statistics; the bias summary printed by the corpus
// command and rechecked in tests.
std::vector<GroupSummary> summarize_groups(
    const Dataset& dataset, const std::unordered_set<std::string>& lexicon);

}  // namespace fairgen
