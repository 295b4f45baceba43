// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "fairgen/io.hpp"
#include "fairgen/policy.hpp"

using namespace fairgen;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_cfg() {
  ModelConfig cfg = ModelConfig::desk(Arch::recurrent);
  cfg.rnn_emb = 8;
  cfg.rnn_hidden = 8;
  cfg.attr_emb = 4;
  cfg.rating_hidden = 4;
  cfg.max_len = 16;
  return cfg;
}

Vocabulary tiny_vocab() {
  Vocabulary v;
  for (const char* t : {"the", "screen", "is", "great", "battery", "bad",
                        "it", "and", "camera", "fine"})
    v.add(t);
  return v;
}

std::vector<EncodedRecord> toy_records(int n, int n_users, int n_items,
                                       int vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EncodedRecord> out;
  for (int i = 0; i < n; ++i) {
    EncodedRecord r;
    r.user = i % n_users;
    r.item = (i * 5 + 1) % n_items;
    r.attr = r.user % 2;
    r.rating = 1.0 + rng.uniform_int(5);
    const int len = 2 + rng.uniform_int(3);
    for (int t = 0; t < len; ++t)
      r.words.push_back(Vocabulary::kNumSpecials +
                        rng.uniform_int(vocab - Vocabulary::kNumSpecials));
    out.push_back(r);
  }
  return out;
}

RewardPair pair_with(std::vector<double> qf, std::vector<double> qc) {
  RewardPair p;
  p.fact.attr = 0;
  p.cf.attr = 1;
  for (double q : qf) {
    p.fact.samples.emplace_back();
    p.fact.quality.push_back(q);
  }
  for (double q : qc) {
    p.cf.samples.emplace_back();
    p.cf.quality.push_back(q);
  }
  double sf = 0, sc = 0;
  for (double q : qf) sf += q;
  for (double q : qc) sc += q;
  p.fact.mean_quality = sf / qf.size();
  p.cf.mean_quality = sc / qc.size();
  p.delta = compute_delta(p.fact, p.cf);
  p.sgn = sign_of(p.delta);
  return p;
}

}  // namespace

TEST_CASE("sign and promotion weight") {
  CHECK(sign_of(3.5) == 1);
  CHECK(sign_of(-0.25) == -1);
  CHECK(sign_of(0.0) == 0);

  CHECK(promotion_weight(1, 0.6) == doctest::Approx(0.4));
  CHECK(promotion_weight(-1, 0.6) == doctest::Approx(0.6));
  CHECK(promotion_weight(0, 0.6) == doctest::Approx(0.5));
  CHECK(promotion_weight(1, 0.5) == doctest::Approx(0.5));
  CHECK(promotion_weight(-1, 0.5) == doctest::Approx(0.5));
  CHECK(promotion_weight(1, 0.9) == doctest::Approx(0.1));
  CHECK_THROWS_AS(promotion_weight(2, 0.5), DomainError);
  CHECK_THROWS_AS(promotion_weight(1, 1.5), DomainError);
}

TEST_CASE("reward pipeline on a worked example") {
  // factual qualities {10, 6}, counterfactual {2, 4}: delta = 5, sgn = +1
  RewardPair p = pair_with({10, 6}, {2, 4});
  CHECK(p.delta == 5.0);
  CHECK(p.sgn == 1);
  compute_rewards(p, 0.6);

  CHECK(p.r_fact == std::vector<double>{-5.0, -3.0});
  CHECK(p.r_cf == std::vector<double>{1.0, 2.0});

  // the favoured (factual) world carries 1-eta, the promoted one carries eta
  CHECK(p.w == doctest::Approx(0.4));
  CHECK(p.rw_fact[0] == doctest::Approx(-2.0));
  CHECK(p.rw_fact[1] == doctest::Approx(-1.2));
  CHECK(p.rw_cf[0] == doctest::Approx(0.6));
  CHECK(p.rw_cf[1] == doctest::Approx(1.2));

  // per-world centering
  CHECK(p.adv_fact[0] == doctest::Approx(-0.4));
  CHECK(p.adv_fact[1] == doctest::Approx(0.4));
  CHECK(p.adv_cf[0] == doctest::Approx(-0.3));
  CHECK(p.adv_cf[1] == doctest::Approx(0.3));

  // the unweighted rewards recover |delta|
  double total = 0;
  for (double r : p.r_fact) total += r;
  for (double r : p.r_cf) total += r;
  CHECK(-total == doctest::Approx(std::abs(p.delta)));
}

TEST_CASE("reward pipeline when the counterfactual world is favoured") {
  RewardPair p = pair_with({2}, {8});
  CHECK(p.delta == -6.0);
  CHECK(p.sgn == -1);
  compute_rewards(p, 0.6);
  // factual is now the promoted world and carries eta
  CHECK(p.w == doctest::Approx(0.6));
  CHECK(p.r_fact == std::vector<double>{2.0});
  CHECK(p.r_cf == std::vector<double>{-8.0});
  CHECK(p.rw_fact[0] == doctest::Approx(1.2));
  CHECK(p.rw_cf[0] == doctest::Approx(-3.2));
  // single-sample worlds centre to zero
  CHECK(p.adv_fact == std::vector<double>{0.0});
  CHECK(p.adv_cf == std::vector<double>{0.0});
}

TEST_CASE("equal worlds produce null rewards") {
  RewardPair p = pair_with({3, 5}, {4, 4});
  CHECK(p.delta == 0.0);
  CHECK(p.sgn == 0);
  compute_rewards(p, 0.9);
  CHECK(p.w == doctest::Approx(0.5));
  for (double r : p.r_fact) CHECK(r == 0.0);
  for (double r : p.r_cf) CHECK(r == 0.0);
  for (double a : p.adv_fact) CHECK(a == 0.0);
  for (double a : p.adv_cf) CHECK(a == 0.0);
}

TEST_CASE("advantages centre to zero within 1e-12") {
  Rng rng(99);
  std::vector<double> qf, qc;
  for (int k = 0; k < 7; ++k) {
    qf.push_back(rng.uniform(0, 30));
    qc.push_back(rng.uniform(0, 30));
  }
  RewardPair p = pair_with(qf, qc);
  compute_rewards(p, 0.7);
  double sf = 0, sc = 0;
  for (double a : p.adv_fact) sf += a;
  for (double a : p.adv_cf) sc += a;
  CHECK(std::abs(sf) < 1e-12);
  CHECK(std::abs(sc) < 1e-12);

  RewardPair bad = pair_with({1}, {2});
  bad.cf.samples.clear();
  bad.cf.quality.clear();
  CHECK_THROWS_AS(compute_rewards(bad, 0.5), ContractError);
}

TEST_CASE("two-world sampling pairs the noise and designates a counterfactual") {
  Vocabulary vocab = tiny_vocab();
  GeneratorModel m = GeneratorModel::build(tiny_cfg(), vocab.size(), 4, 3, 2, 7);
  QualityOracle oracle = QualityOracle::length();
  EncodedRecord rec = toy_records(1, 4, 3, vocab.size(), 5)[0];
  DecodeConfig dc;
  dc.top_k = 3;
  dc.max_len = 6;

  RewardPair a = sample_two_worlds(m, rec, 0, oracle, vocab, dc, 3, 42);
  RewardPair b = sample_two_worlds(m, rec, 0, oracle, vocab, dc, 3, 42);
  REQUIRE(a.fact.samples.size() == 3);
  REQUIRE(a.cf.samples.size() == 3);
  CHECK(a.cf.attr != rec.attr);
  CHECK(a.fact.attr == rec.attr);
  for (int k = 0; k < 3; ++k) {
    CHECK(a.fact.samples[k].ids == b.fact.samples[k].ids);
    CHECK(a.cf.samples[k].ids == b.cf.samples[k].ids);
    // quality recomputes from the decoded tokens
    CHECK(a.fact.quality[k] ==
          oracle(vocab.decode(a.fact.samples[k].ids)));
  }
  CHECK(a.delta == a.fact.mean_quality - a.cf.mean_quality);

  // a model whose worlds cannot differ yields a zero delta: identical
  // attribute rows mean identical policies, and the noise is paired
  GeneratorModel same = m.clone();
  Tensor& rows = same.params().at("emb/attr");
  for (int j = 0; j < rows.cols(); ++j) rows.set(1, j, rows.at(0, j));
  RewardPair z = sample_two_worlds(same, rec, 0, oracle, vocab, dc, 3, 42);
  CHECK(z.delta == 0.0);
  CHECK(z.sgn == 0);

  ModelConfig raw = tiny_cfg();
  raw.use_attribute = false;
  GeneratorModel raw_m = GeneratorModel::build(raw, vocab.size(), 4, 3, 2, 7);
  CHECK_THROWS_AS(sample_two_worlds(raw_m, rec, 0, oracle, vocab, dc, 3, 1),
                  DomainError);
  GeneratorModel single =
      GeneratorModel::build(tiny_cfg(), vocab.size(), 4, 3, 1, 7);
  EncodedRecord r0 = rec;
  r0.attr = 0;
  CHECK_THROWS_AS(sample_two_worlds(single, r0, 0, oracle, vocab, dc, 3, 1),
                  DomainError);
}

TEST_CASE("fairness step demands frozen tables and moves only the rest") {
  Vocabulary vocab = tiny_vocab();
  GeneratorModel m = GeneratorModel::build(tiny_cfg(), vocab.size(), 4, 3, 2, 11);
  auto recs = toy_records(4, 4, 3, vocab.size(), 9);
  QualityOracle oracle = QualityOracle::length();
  FinetuneConfig cfg;
  cfg.lr = 1e-3;
  cfg.lambda = 0.5;
  cfg.decode.top_k = 3;
  cfg.decode.max_len = 6;
  AdamState opt;

  std::vector<RewardPair> pairs;
  for (int i = 0; i < 4; ++i) {
    RewardPair p = sample_two_worlds(m, recs[i], i, oracle, vocab, cfg.decode,
                                     2, 3);
    compute_rewards(p, cfg.eta);
    pairs.push_back(std::move(p));
  }

  // tables still trainable: refused
  CHECK_THROWS_AS(fairness_gradient_step(m, recs, pairs, cfg, opt),
                  ContractError);

  for (const char* n : {"emb/user", "emb/item", "emb/attr"})
    m.params().at(n).set_requires_grad(false);
  const std::vector<double> users = m.params().at("emb/user").data();
  const std::vector<double> attrs = m.params().at("emb/attr").data();
  const std::vector<double> words = m.params().at("emb/word").data();

  StepStats st = fairness_gradient_step(m, recs, pairs, cfg, opt);
  CHECK(st.grad_norm > 0.0);
  CHECK(st.l_gen > 0.0);
  CHECK(m.params().at("emb/user").data() == users);
  CHECK(m.params().at("emb/attr").data() == attrs);
  CHECK(m.params().at("emb/word").data() != words);

  // a pair per record is mandatory when the fairness term is active
  pairs.pop_back();
  CHECK_THROWS_AS(fairness_gradient_step(m, recs, pairs, cfg, opt),
                  ContractError);
}

TEST_CASE("finetune with lambda zero still takes generation-loss steps") {
  Vocabulary vocab = tiny_vocab();
  GeneratorModel m = GeneratorModel::build(tiny_cfg(), vocab.size(), 4, 3, 2, 13);
  GeneratorModel before = m.clone();
  auto recs = toy_records(8, 4, 3, vocab.size(), 17);
  QualityOracle oracle = QualityOracle::length();
  FinetuneConfig cfg;
  cfg.lambda = 0.0;
  cfg.batch_size = 4;
  cfg.lr = 1e-3;
  cfg.seed = 2;

  FinetuneResult res = finetune(m, recs, oracle, vocab, cfg);
  CHECK(res.epochs_run == 1);
  CHECK(res.steps == 2);
  CHECK(res.mean_abs_delta == 0.0);
  // the model moved, but the frozen tables did not
  CHECK(m.params().at("emb/word").data() !=
        before.params().at("emb/word").data());
  CHECK(m.params().at("emb/user").data() ==
        before.params().at("emb/user").data());
  CHECK(m.params().at("emb/item").data() ==
        before.params().at("emb/item").data());
  CHECK(m.params().at("emb/attr").data() ==
        before.params().at("emb/attr").data());
  // freezing is an implementation detail of the pass: flags are restored
  CHECK(m.params().at("emb/user").requires_grad());
}

TEST_CASE("finetune with an active fairness term logs its steps") {
  Vocabulary vocab = tiny_vocab();
  GeneratorModel m = GeneratorModel::build(tiny_cfg(), vocab.size(), 4, 3, 2, 19);
  auto recs = toy_records(6, 4, 3, vocab.size(), 23);
  QualityOracle oracle = QualityOracle::length();
  FinetuneConfig cfg;
  cfg.lambda = 1.0;
  cfg.eta = 0.6;
  cfg.n_samples = 2;
  cfg.batch_size = 3;
  cfg.lr = 1e-3;
  cfg.seed = 4;
  cfg.decode.top_k = 3;
  cfg.decode.max_len = 5;
  cfg.log_path = fs::temp_directory_path() / "fairgen_policy_log.csv";

  const std::vector<double> attrs = m.params().at("emb/attr").data();
  FinetuneResult res = finetune(m, recs, oracle, vocab, cfg);
  CHECK(res.steps == 2);
  CHECK(res.history.size() == 2);
  CHECK(m.params().at("emb/attr").data() == attrs);

  auto lines = read_lines(cfg.log_path);
  REQUIRE(lines.size() == 7);  // header + one row per (step, pair)
  CHECK(lines[0] == "step,pair,delta,l_gen,l_fair,grad_norm");
  fs::remove(cfg.log_path);

  // determinism: the same run reproduces the same history
  GeneratorModel m2 = GeneratorModel::build(tiny_cfg(), vocab.size(), 4, 3, 2, 19);
  FinetuneConfig cfg2 = cfg;
  cfg2.log_path.clear();
  FinetuneResult res2 = finetune(m2, recs, oracle, vocab, cfg2);
  REQUIRE(res2.history.size() == res.history.size());
  for (std::size_t i = 0; i < res.history.size(); ++i) {
    CHECK(res.history[i].l_gen == res2.history[i].l_gen);
    CHECK(res.history[i].l_fair == res2.history[i].l_fair);
    CHECK(res.history[i].grad_norm == res2.history[i].grad_norm);
  }
  CHECK(m.params().at("emb/word").data() == m2.params().at("emb/word").data());
}

TEST_CASE("finetune validates the model and config") {
  Vocabulary vocab = tiny_vocab();
  QualityOracle oracle = QualityOracle::length();
  auto recs = toy_records(4, 4, 3, vocab.size(), 29);

  ModelConfig raw = tiny_cfg();
  raw.use_attribute = false;
  GeneratorModel raw_m = GeneratorModel::build(raw, vocab.size(), 4, 3, 2, 1);
  FinetuneConfig cfg;
  CHECK_THROWS_AS(finetune(raw_m, recs, oracle, vocab, cfg), DomainError);

  GeneratorModel m = GeneratorModel::build(tiny_cfg(), vocab.size(), 4, 3, 2, 1);
  CHECK_THROWS_AS(finetune(m, {}, oracle, vocab, cfg), DomainError);
  FinetuneConfig bad = cfg;
  bad.eta = 1.5;
  CHECK_THROWS_AS(finetune(m, recs, oracle, vocab, bad), ConfigError);
  bad = cfg;
  bad.lambda = -0.1;
  CHECK_THROWS_AS(finetune(m, recs, oracle, vocab, bad), ConfigError);

  FinetuneConfig none = cfg;
  none.epochs = 0;
  GeneratorModel frozen = m.clone();
  FinetuneResult res = finetune(m, recs, oracle, vocab, none);
  CHECK(res.steps == 0);
  CHECK(m.params().at("emb/word").data() ==
        frozen.params().at("emb/word").data());
}
