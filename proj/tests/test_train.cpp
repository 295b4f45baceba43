// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "fairgen/io.hpp"
#include "fairgen/train.hpp"

using namespace fairgen;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_cfg(Arch arch) {
  ModelConfig cfg = ModelConfig::desk(arch);
  cfg.emb = 8;
  cfg.ffn = 16;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.rnn_emb = 8;
  cfg.rnn_hidden = 8;
  cfg.attr_emb = 4;
  cfg.rating_hidden = 4;
  cfg.max_len = 16;
  return cfg;
}

// Attribute is a user-level property (user % 2), as in the real corpora.
std::vector<EncodedRecord> toy_records(int n, int n_users, int n_items,
                                       int vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EncodedRecord> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    EncodedRecord r;
    r.user = i % n_users;
    r.item = (i * 7 + 3) % n_items;
    r.attr = r.user % 2;
    r.rating = 1.0 + rng.uniform_int(5);
    const int len = 2 + rng.uniform_int(4);
    for (int t = 0; t < len; ++t)
      r.words.push_back(Vocabulary::kNumSpecials +
                        rng.uniform_int(vocab - Vocabulary::kNumSpecials));
    out.push_back(r);
  }
  return out;
}

bool params_equal(const ParamSet& a, const ParamSet& b) {
  if (a.items().size() != b.items().size()) return false;
  for (std::size_t i = 0; i < a.items().size(); ++i) {
    if (a.items()[i].first != b.items()[i].first) return false;
    if (a.items()[i].second.data() != b.items()[i].second.data()) return false;
  }
  return true;
}

fs::path tmp_path(const std::string& name) {
  return fs::temp_directory_path() / ("fairgen_train_" + name);
}

}  // namespace

TEST_CASE("discriminator with zero weights is uniform") {
  Discriminator d = Discriminator::build(6, 8, 3, 5);
  for (auto& [n, t] : d.params().items())
    std::fill(t.data().begin(), t.data().end(), 0.0);
  Tape tape;
  Tensor lp = d.log_probs(tape, Tensor::zeros({2, 6}));
  const double want = std::log(1.0 / 3.0);
  for (int i = 0; i < lp.numel(); ++i)
    CHECK(lp.at(i) == doctest::Approx(want).epsilon(1e-12));

  Tape t2;
  CHECK_THROWS_AS(d.log_probs(t2, Tensor::zeros({2, 5})), ContractError);
  CHECK_THROWS_AS(Discriminator::build(0, 8, 3, 5), ConfigError);
  CHECK_THROWS_AS(Discriminator::build(6, 8, 1, 5), ConfigError);
}

TEST_CASE("attribute_log_prob picks the true attribute's log-probability") {
  GeneratorModel m = GeneratorModel::build(tiny_cfg(Arch::recurrent), 12, 4, 3, 2, 7);
  Discriminator d = Discriminator::build(8, 8, 2, 9);
  EncodedRecord r;
  r.user = 1;
  r.item = 2;
  r.attr = 1;
  r.words = {4, 5};
  r.rating = 3.0;
  Tape tape;
  Tensor lp = d.log_probs(tape, user_repr(tape, m, r));
  Tensor got = attribute_log_prob(tape, m, d, r);
  CHECK(got.value() == lp.at(0, 1));
  CHECK(got.value() < 0.0);

  EncodedRecord bad = r;
  bad.attr = 7;
  Tape t2;
  CHECK_THROWS_AS(attribute_log_prob(t2, m, d, bad), IndexError);
}

TEST_CASE("pretraining reduces the validation loss and restores the best epoch") {
  for (Arch arch : {Arch::transformer, Arch::recurrent}) {
    GeneratorModel m = GeneratorModel::build(tiny_cfg(arch), 12, 4, 3, 2, 21);
    auto recs = toy_records(24, 4, 3, 12, 100);
    std::vector<EncodedRecord> train(recs.begin(), recs.begin() + 18);
    std::vector<EncodedRecord> valid(recs.begin() + 18, recs.end());

    const double before = loss_breakdown(m, valid).total;
    TrainConfig cfg;
    cfg.max_epochs = 8;
    cfg.patience = 8;
    cfg.batch_size = 4;
    cfg.lr = 1e-2;
    cfg.seed = 5;
    TrainResult res = pretrain(m, nullptr, train, valid, cfg);
    REQUIRE(res.epochs_run >= 1);
    REQUIRE(static_cast<int>(res.history.size()) == res.epochs_run);
    CHECK(res.best_valid < before);

    // the restored weights reproduce the best recorded validation loss
    double best_seen = res.history.front().valid_total;
    for (const auto& e : res.history) best_seen = std::min(best_seen, e.valid_total);
    CHECK(res.best_valid == best_seen);
    CHECK(loss_breakdown(m, valid).total == res.best_valid);
  }
}

TEST_CASE("early stopping ticks only after no improvement for patience epochs") {
  GeneratorModel m = GeneratorModel::build(tiny_cfg(Arch::recurrent), 12, 4, 3, 2, 23);
  auto recs = toy_records(20, 4, 3, 12, 200);
  std::vector<EncodedRecord> train(recs.begin(), recs.begin() + 15);
  std::vector<EncodedRecord> valid(recs.begin() + 15, recs.end());
  TrainConfig cfg;
  cfg.max_epochs = 60;
  cfg.patience = 3;
  cfg.batch_size = 4;
  cfg.lr = 5e-2;  // aggressive on purpose so validation deteriorates
  cfg.seed = 1;
  TrainResult res = pretrain(m, nullptr, train, valid, cfg);
  if (res.stopped_early) {
    // the last `patience` epochs are all not better than the best
    REQUIRE(res.epochs_run >= cfg.patience + 1);
    const double best = res.best_valid;
    for (int i = res.epochs_run - cfg.patience; i < res.epochs_run; ++i)
      CHECK(res.history[i].valid_total >= best);
    CHECK(res.epochs_run < cfg.max_epochs);
  } else {
    CHECK(res.epochs_run == cfg.max_epochs);
  }
}

TEST_CASE("zero epochs leaves the model untouched") {
  GeneratorModel m = GeneratorModel::build(tiny_cfg(Arch::recurrent), 12, 4, 3, 2, 31);
  GeneratorModel copy = m.clone();
  auto recs = toy_records(10, 4, 3, 12, 7);
  TrainConfig cfg;
  cfg.max_epochs = 0;
  TrainResult res = pretrain(m, nullptr, recs, {}, cfg);
  CHECK(res.epochs_run == 0);
  CHECK(res.history.empty());
  CHECK(params_equal(m.params(), copy.params()));
}

TEST_CASE("training validates inputs") {
  GeneratorModel m = GeneratorModel::build(tiny_cfg(Arch::recurrent), 12, 4, 3, 2, 3);
  auto recs = toy_records(10, 4, 3, 12, 7);
  TrainConfig cfg;
  CHECK_THROWS_AS(pretrain(m, nullptr, {}, recs, cfg), DomainError);
  CHECK_THROWS_AS(pretrain(m, nullptr, recs, {}, cfg), DomainError);

  TrainConfig bad = cfg;
  bad.disc_units = 0;
  Discriminator d = Discriminator::build(8, 8, 2, 9);
  CHECK_THROWS_AS(alternate_train(m, d, recs, recs, bad), ConfigError);
  bad = cfg;
  bad.lr = 0.0;
  CHECK_THROWS_AS(pretrain(m, nullptr, recs, recs, bad), ConfigError);
  bad = cfg;
  bad.lambda_disc = 0.5;
  CHECK_THROWS_AS(pretrain(m, nullptr, recs, recs, bad), ContractError);
}

TEST_CASE("a zero adversarial weight reproduces the plain trajectory bitwise") {
  GeneratorModel a = GeneratorModel::build(tiny_cfg(Arch::recurrent), 12, 4, 3, 2, 41);
  GeneratorModel b = a.clone();
  auto recs = toy_records(20, 4, 3, 12, 55);
  std::vector<EncodedRecord> train(recs.begin(), recs.begin() + 16);
  std::vector<EncodedRecord> valid(recs.begin() + 16, recs.end());
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.batch_size = 4;
  cfg.lr = 1e-2;
  cfg.seed = 77;
  cfg.lambda_disc = 0.0;

  TrainResult ra = pretrain(a, nullptr, train, valid, cfg);
  Discriminator d = Discriminator::build(8, 8, 2, 1);
  Discriminator d_before = d.clone();
  TrainResult rb = pretrain(b, &d, train, valid, cfg);

  CHECK(params_equal(a.params(), b.params()));
  CHECK(ra.epochs_run == rb.epochs_run);
  for (int i = 0; i < ra.epochs_run; ++i) {
    CHECK(ra.history[i].train_total == rb.history[i].train_total);
    CHECK(ra.history[i].valid_total == rb.history[i].valid_total);
  }
  // the idle discriminator is never touched
  CHECK(params_equal(d.params(), d_before.params()));
}

TEST_CASE("adversarial alternation trains both players without cross-leakage") {
  GeneratorModel m = GeneratorModel::build(tiny_cfg(Arch::recurrent), 12, 4, 3, 2, 43);
  Discriminator d = Discriminator::build(8, 8, 2, 3);
  Discriminator d0 = d.clone();
  auto recs = toy_records(24, 4, 3, 12, 60);
  std::vector<EncodedRecord> train(recs.begin(), recs.begin() + 20);
  std::vector<EncodedRecord> valid(recs.begin() + 20, recs.end());
  TrainConfig cfg;
  cfg.max_epochs = 4;
  cfg.patience = 10;
  cfg.batch_size = 4;
  cfg.lr = 1e-2;
  cfg.lambda_disc = 1.0;
  cfg.seed = 9;

  TrainResult res = alternate_train(m, d, train, valid, cfg);
  CHECK(res.epochs_run == 4);
  CHECK(!params_equal(d.params(), d0.params()));  // the adversary moved
  bool adv_seen = false;
  for (const auto& e : res.history)
    if (e.train_adv != 0.0) adv_seen = true;
  CHECK(adv_seen);
  bool disc_seen = false;
  for (const auto& e : res.history)
    if (e.disc_loss != 0.0) disc_seen = true;
  CHECK(disc_seen);

  // batch-granularity schedule also runs clean
  GeneratorModel m2 = GeneratorModel::build(tiny_cfg(Arch::recurrent), 12, 4, 3, 2, 43);
  Discriminator d2 = Discriminator::build(8, 8, 2, 3);
  TrainConfig bg = cfg;
  bg.batch_granularity = true;
  bg.max_epochs = 2;
  TrainResult res2 = alternate_train(m2, d2, train, valid, bg);
  CHECK(res2.epochs_run == 2);
}

TEST_CASE("per-epoch history can be logged to CSV") {
  GeneratorModel m = GeneratorModel::build(tiny_cfg(Arch::recurrent), 12, 4, 3, 2, 47);
  auto recs = toy_records(12, 4, 3, 12, 61);
  std::vector<EncodedRecord> train(recs.begin(), recs.begin() + 9);
  std::vector<EncodedRecord> valid(recs.begin() + 9, recs.end());
  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 2;
  cfg.log_path = tmp_path("history.csv");
  pretrain(m, nullptr, train, valid, cfg);
  auto lines = read_lines(cfg.log_path);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "epoch,train_total,train_adv,disc_loss,valid_total");
  CHECK(lines[1].substr(0, 2) == "0,");
  fs::remove(cfg.log_path);
}

TEST_CASE("probe accuracy reflects attribute leakage in the representations") {
  GeneratorModel m = GeneratorModel::build(tiny_cfg(Arch::recurrent), 12, 8, 3, 2, 51);
  auto recs = toy_records(64, 8, 3, 12, 71);
  std::vector<EncodedRecord> tr(recs.begin(), recs.begin() + 48);
  std::vector<EncodedRecord> ho(recs.begin() + 48, recs.end());

  // user rows that encode the attribute exactly: +1 rows vs -1 rows
  Tensor& users = m.params().at("emb/user");
  for (int u = 0; u < 8; ++u)
    for (int j = 0; j < users.cols(); ++j)
      users.set(u, j, u % 2 == 0 ? 1.0 : -1.0);
  CHECK(probe_accuracy(m, tr, ho, 2, 13) >= 0.95);

  // identical rows carry nothing; the probe cannot beat the majority share
  for (int i = 0; i < users.numel(); ++i) users.set(i, 0.0);
  Tensor& items = m.params().at("emb/item");
  for (int i = 0; i < items.numel(); ++i) items.set(i, 0.0);
  CHECK(probe_accuracy(m, tr, ho, 2, 13) <= 0.6);

  CHECK_THROWS_AS(probe_accuracy(m, {}, ho, 2, 13), DomainError);
  CHECK_THROWS_AS(probe_accuracy(m, tr, ho, 1, 13), DomainError);
}

TEST_CASE("checkpoints round-trip bitwise and carry optimizer state") {
  const fs::path path = tmp_path("ckpt.cffe");
  GeneratorModel m = GeneratorModel::build(tiny_cfg(Arch::transformer), 12, 4, 3, 2, 61);
  Discriminator d = Discriminator::build(8, 8, 2, 62);
  auto recs = toy_records(12, 4, 3, 12, 63);
  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.batch_size = 4;
  cfg.lr = 1e-2;
  cfg.seed = 3;
  AdamState opt;
  pretrain(m, nullptr, recs, recs, cfg, &opt);
  REQUIRE(opt.step_count() > 0);

  save_model_checkpoint(path, m, &d, &opt, 12345);

  Discriminator d2;
  AdamState opt2;
  GeneratorModel m2 = load_model_checkpoint(
      path, tiny_cfg(Arch::transformer), 12, 4, 3, 2, 12345, &d2, &opt2);
  CHECK(params_equal(m.params(), m2.params()));
  CHECK(params_equal(d.params(), d2.params()));
  CHECK(opt2.step_count() == opt.step_count());
  REQUIRE(opt2.moments().size() == opt.moments().size());
  for (const auto& [name, mom] : opt.moments()) {
    const auto it = opt2.moments().find(name);
    REQUIRE(it != opt2.moments().end());
    CHECK(it->second.m == mom.m);
    CHECK(it->second.v == mom.v);
  }

  // mismatched config or vocabulary is refused
  CHECK_THROWS_AS(load_model_checkpoint(path, tiny_cfg(Arch::transformer), 12,
                                        4, 3, 2, 999),
                  ConfigError);
  ModelConfig other = tiny_cfg(Arch::transformer);
  other.emb = 16;
  CHECK_THROWS_AS(load_model_checkpoint(path, other, 12, 4, 3, 2, 12345),
                  ConfigError);
  fs::remove(path);

  CHECK_THROWS_AS(load_checkpoint(tmp_path("missing.cffe")), ArtifactError);
  const fs::path junk = tmp_path("junk.cffe");
  atomic_write(junk, std::string("JUNKJUNKJUNK"));
  CHECK_THROWS_AS(load_checkpoint(junk), ArtifactError);
  fs::remove(junk);
}

TEST_CASE("truncated and incomplete checkpoints are rejected") {
  const fs::path path = tmp_path("trunc.cffe");
  GeneratorModel m = GeneratorModel::build(tiny_cfg(Arch::recurrent), 12, 4, 3, 2, 71);
  save_model_checkpoint(path, m, nullptr, nullptr, 7);
  std::string full = read_file(path);
  atomic_write(path, full.substr(0, full.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(path), ArtifactError);

  // an entry list missing a model parameter is unusable
  CheckpointMeta meta;
  meta.config_hash = m.fingerprint();
  meta.vocab_hash = 7;
  save_checkpoint(path, meta, {{"model/emb/word", m.params().at("emb/word")}});
  CHECK_THROWS_AS(load_model_checkpoint(path, tiny_cfg(Arch::recurrent), 12, 4,
                                        3, 2, 7),
                  ArtifactError);
  fs::remove(path);
}

TEST_CASE("resumed optimizer continues the step counter") {
  GeneratorModel m = GeneratorModel::build(tiny_cfg(Arch::recurrent), 12, 4, 3, 2, 81);
  auto recs = toy_records(8, 4, 3, 12, 82);
  TrainConfig cfg;
  cfg.max_epochs = 1;
  cfg.batch_size = 4;
  cfg.seed = 4;
  AdamState opt;
  pretrain(m, nullptr, recs, recs, cfg, &opt);
  const std::uint64_t first = opt.step_count();
  REQUIRE(first == 2);  // 8 records / batch 4

  const fs::path path = tmp_path("resume.cffe");
  save_model_checkpoint(path, m, nullptr, &opt, 1);
  AdamState opt2;
  GeneratorModel m2 = load_model_checkpoint(path, tiny_cfg(Arch::recurrent),
                                            12, 4, 3, 2, 1, nullptr, &opt2);
  CHECK(opt2.step_count() == first);
  pretrain(m2, nullptr, recs, recs, cfg, &opt2);
  CHECK(opt2.step_count() == 2 * first);
  fs::remove(path);
}
