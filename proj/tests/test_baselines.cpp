// SPDX-License-Identifier: Apache-2.0
#include <string>
#include <vector>

#include "doctest.h"
#include "fairgen/baselines.hpp"
#include "fairgen/rng.hpp"

using namespace fairgen;

namespace {

Record rec(const std::string& attr, int n_tokens, const std::string& user = "u") {
  Record r;
  r.user = user;
  r.item = "i";
  r.attribute = attr;
  r.rating = 4.0;
  for (int t = 0; t < n_tokens; ++t) r.explanation.push_back("w");
  return r;
}

AttributeSpace mf() { return {"gender", {"m", "f"}}; }

}  // namespace

TEST_CASE("norm trims the larger group until the gap closes") {
  // group means 5 vs 3; the procedure removes f's worst, twice
  std::vector<Record> recs = {rec("m", 6), rec("m", 4), rec("f", 5),
                              rec("f", 1), rec("f", 3)};
  NormResult res = norm_preprocess(recs, mf(), {});
  CHECK(res.original_gap == 2.0);
  CHECK(res.final_gap == 0.0);
  CHECK(res.removed == std::vector<int>{3, 4});
  REQUIRE(res.records.size() == 3);
  CHECK(res.records[0].explanation.size() == 6);
  CHECK(res.records[1].explanation.size() == 4);
  CHECK(res.records[2].explanation.size() == 5);
}

TEST_CASE("norm leaves balanced data alone") {
  std::vector<Record> same = {rec("m", 4), rec("m", 6), rec("f", 5),
                              rec("f", 5)};
  NormResult res = norm_preprocess(same, mf(), {});
  CHECK(res.removed.empty());
  CHECK(res.records.size() == 4);
  CHECK(res.original_gap == 0.0);

  std::vector<Record> wide = {rec("m", 10), rec("m", 10), rec("f", 10),
                              rec("f", 10)};
  NormSpec spec;
  spec.threshold = 0.5;
  CHECK(norm_preprocess(wide, mf(), spec).removed.empty());
}

TEST_CASE("norm trims the high side when the larger group is better") {
  // m (larger) has the higher mean: its best records go first, ties earliest
  std::vector<Record> recs = {rec("m", 4), rec("m", 4), rec("m", 2),
                              rec("f", 2)};
  NormResult res = norm_preprocess(recs, mf(), {});
  CHECK(res.removed == std::vector<int>{0, 1});
  CHECK(res.final_gap == 0.0);
}

TEST_CASE("norm aborts rather than empty a group") {
  std::vector<Record> recs = {rec("m", 10), rec("f", 2)};
  CHECK_THROWS_AS(norm_preprocess(recs, mf(), {}), DomainError);

  std::vector<Record> lopsided = {rec("m", 10), rec("m", 10), rec("f", 2)};
  CHECK_THROWS_AS(norm_preprocess(lopsided, mf(), {}), DomainError);

  // a group absent from the data is rejected up front
  std::vector<Record> no_f = {rec("m", 3), rec("m", 5)};
  CHECK_THROWS_AS(norm_preprocess(no_f, mf(), {}), DomainError);

  NormSpec bad;
  bad.threshold = 1.0;
  CHECK_THROWS_AS(norm_preprocess(recs, mf(), bad), ConfigError);
}

TEST_CASE("norm contract holds on a three-group fixture") {
  AttributeSpace space{"age", {"young", "adult", "senior"}};
  std::vector<Record> recs;
  Rng rng(77);
  const std::vector<std::pair<std::string, int>> sizes = {
      {"young", 24}, {"adult", 17}, {"senior", 11}};
  for (const auto& [value, count] : sizes)
    for (int i = 0; i < count; ++i)
      recs.push_back(rec(value, 1 + rng.uniform_int(30)));

  NormResult res = norm_preprocess(recs, space, {});
  CHECK(res.final_gap <= 0.10 * res.original_gap + 1e-12);
  CHECK(res.records.size() + res.removed.size() == recs.size());

  // kept output is a subsequence of the input
  std::size_t cursor = 0;
  for (const Record& kept : res.records) {
    while (cursor < recs.size() &&
           recs[cursor].explanation.size() != kept.explanation.size())
      ++cursor;
    REQUIRE(cursor < recs.size());
    ++cursor;
  }

  NormResult again = norm_preprocess(recs, space, {});
  CHECK(again.removed == res.removed);
}

TEST_CASE("nattr masks the attribute for the transformer") {
  ModelConfig cfg = ModelConfig::desk(Arch::transformer);
  GeneratorModel m = GeneratorModel::build(cfg, 24, 4, 3, 2, 5);
  const auto before = m.params().at("emb/attr").data();

  GeneratorModel view = nattr_transform(m, 9);
  CHECK(view.attr_attention_disabled());
  CHECK_FALSE(m.attr_attention_disabled());
  for (const auto& [name, t] : view.params().items())
    CHECK(t.data() == m.params().at(name).data());
  CHECK(m.params().at("emb/attr").data() == before);

  // applying the transform to its own output changes nothing further
  GeneratorModel twice = nattr_transform(view, 10);
  CHECK(twice.attr_attention_disabled());
  for (const auto& [name, t] : twice.params().items())
    CHECK(t.data() == view.params().at(name).data());
}

TEST_CASE("nattr rerolls the recurrent attribute rows") {
  ModelConfig cfg = ModelConfig::desk(Arch::recurrent);
  GeneratorModel m = GeneratorModel::build(cfg, 24, 4, 3, 2, 5);

  GeneratorModel view = nattr_transform(m, 9);
  const auto& rows = view.params().at("emb/attr").data();
  CHECK(rows != m.params().at("emb/attr").data());
  for (double v : rows) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  for (const auto& [name, t] : view.params().items())
    if (name != "emb/attr") CHECK(t.data() == m.params().at(name).data());

  GeneratorModel same = nattr_transform(m, 9);
  CHECK(same.params().at("emb/attr").data() == rows);
  GeneratorModel other = nattr_transform(m, 10);
  CHECK(other.params().at("emb/attr").data() != rows);

  ModelConfig raw = cfg;
  raw.use_attribute = false;
  GeneratorModel raw_m = GeneratorModel::build(raw, 24, 4, 3, 2, 5);
  CHECK_THROWS_AS(nattr_transform(raw_m, 1), DomainError);
}
