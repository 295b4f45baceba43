// SPDX-License-Identifier: Apache-2.0
#include "fairgen/quality.hpp"

namespace fairgen {

namespace {

bool is_marker(const std::string& t) {
  return t == Vocabulary::bos_token() || t == Vocabulary::eos_token() ||
         t == Vocabulary::pad_token();
}

}  // namespace

double q_len(const std::vector<std::string>& tokens) {
  int n = 0;
  for (const auto& t : tokens)
    if (!is_marker(t)) ++n;
  return static_cast<double>(n);
}

double q_feat(const std::vector<std::string>& tokens,
              const std::unordered_set<std::string>& lexicon) {
  if (lexicon.empty()) throw DomainError("q_feat: empty feature lexicon");
  std::unordered_set<std::string> seen;
  for (const auto& t : tokens)
    if (lexicon.count(t)) seen.insert(t);
  return static_cast<double>(seen.size());
}

QualityOracle::QualityOracle(QualityKind kind,
                             std::unordered_set<std::string> lexicon,
                             double w_len, double w_feat)
    : kind_(kind), lexicon_(std::move(lexicon)), w_len_(w_len), w_feat_(w_feat) {}

QualityOracle QualityOracle::length() {
  return QualityOracle(QualityKind::length, {}, 1.0, 0.0);
}

QualityOracle QualityOracle::feature_count(
    std::unordered_set<std::string> lexicon) {
  if (lexicon.empty())
    throw DomainError("feature-count oracle needs a non-empty lexicon");
  return QualityOracle(QualityKind::feature_count, std::move(lexicon), 0.0, 1.0);
}

QualityOracle QualityOracle::composite(std::unordered_set<std::string> lexicon,
                                       double w_len, double w_feat) {
  if (lexicon.empty())
    throw DomainError("composite oracle needs a non-empty lexicon");
  return QualityOracle(QualityKind::composite, std::move(lexicon), w_len, w_feat);
}

double QualityOracle::operator()(const std::vector<std::string>& tokens) const {
  switch (kind_) {
    case QualityKind::length:
      return q_len(tokens);
    case QualityKind::feature_count:
      return q_feat(tokens, lexicon_);
    case QualityKind::composite:
      return w_len_ * q_len(tokens) + w_feat_ * q_feat(tokens, lexicon_);
  }
  throw ContractError("unknown quality kind");
}

const char* QualityOracle::name() const {
  switch (kind_) {
    case QualityKind::length:
      return "length";
    case QualityKind::feature_count:
      return "feature";
    case QualityKind::composite:
      return "composite";
  }
  throw ContractError("unknown quality kind");
}

std::vector<GroupSummary> summarize_groups(
    const Dataset& ds, const std::unordered_set<std::string>& lexicon) {
  std::vector<GroupSummary> out;
  for (std::size_t g = 0; g < ds.attribute_space.values.size(); ++g) {
    GroupSummary s;
    s.value = ds.attribute_space.values[g];
    const auto& members = ds.group_records[g];
    s.n_records = static_cast<int>(members.size());
    for (int i : members) {
      s.mean_len += q_len(ds.records[i].explanation);
      if (!lexicon.empty()) s.mean_feat += q_feat(ds.records[i].explanation, lexicon);
    }
    if (s.n_records > 0) {
      s.mean_len /= s.n_records;
      s.mean_feat /= s.n_records;
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace fairgen
