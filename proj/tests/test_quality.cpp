// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "fairgen/quality.hpp"

using namespace fairgen;

TEST_CASE("q_len counts tokens without markers") {
  CHECK(q_len({"great", "game", "!"}) == 3.0);
  CHECK(q_len({}) == 0.0);
  CHECK(q_len({"<bos>", "a", "<eos>"}) == 1.0);
  CHECK(q_len({"<pad>", "<pad>"}) == 0.0);
  CHECK(q_len({"<unk>"}) == 1.0);  // unknown words still carry length
}

TEST_CASE("q_feat counts distinct lexicon tokens") {
  std::unordered_set<std::string> lex{"graphics", "controller", "price"};
  auto toks = [](const char* s) {
    std::vector<std::string> out;
    std::string cur;
    for (const char* p = s;; ++p) {
      if (*p == ' ' || *p == 0) {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
        if (*p == 0) break;
      } else {
        cur += *p;
      }
    }
    return out;
  };
  CHECK(q_feat(toks("the graphics are great and the controller works"), lex) == 2.0);
  CHECK(q_feat(toks("nothing relevant here"), lex) == 0.0);
  CHECK(q_feat(toks("graphics graphics graphics"), lex) == 1.0);
  CHECK_THROWS_AS(q_feat({"x"}, {}), DomainError);
}

TEST_CASE("composite oracle") {
  std::unordered_set<std::string> lex{"screen", "sound"};
  QualityOracle lf = QualityOracle::composite(lex);
  // 5 tokens, 2 distinct features -> 7
  CHECK(lf({"screen", "and", "sound", "are", "sound"}) == 7.0);
  CHECK(lf({}) == 0.0);

  QualityOracle feat_only = QualityOracle::composite(lex, 0.0, 1.0);
  QualityOracle feat = QualityOracle::feature_count(lex);
  std::vector<std::string> y{"big", "screen", "."};
  CHECK(feat_only(y) == feat(y));

  QualityOracle len = QualityOracle::length();
  CHECK(len(y) == 3.0);
  CHECK(std::string(len.name()) == "length");
  CHECK(std::string(feat.name()) == "feature");
  CHECK(std::string(lf.name()) == "composite");
}

TEST_CASE("oracle bounds and purity") {
  std::unordered_set<std::string> lex{"a", "b", "c"};
  QualityOracle feat = QualityOracle::feature_count(lex);
  std::vector<std::string> y{"a", "b", "a", "z"};
  CHECK(feat(y) == feat(y));
  CHECK(feat(y) <= static_cast<double>(lex.size()));
  CHECK(feat(y) <= q_len(y));
  CHECK(feat(y) >= 0.0);
}
