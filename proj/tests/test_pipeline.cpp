// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <sstream>
#include <string>

#include "doctest.h"
#include "fairgen/io.hpp"
#include "fairgen/pipeline.hpp"

using namespace fairgen;
namespace fs = std::filesystem;

namespace {

// A self-contained, fast workspace: tiny recurrent model, tiny corpus.
std::string tiny_config(const fs::path& root) {
  return "# desk-scale smoke configuration\n"
         "data_dir = " + (root / "data").string() + "\n"
         "out_dir = " + (root / "out").string() + "\n"
         "arch = recurrent\n"
         "baseline = attr\n"
         "measure = L\n"
         "groups = m:0.5:8:1.5,f:0.5:5:1\n"
         "n_users = 8\n"
         "n_items = 6\n"
         "n_records = 48\n"
         "vocab_size = 200\n"
         "max_len = 16\n"
         "rnn_emb_dim = 8\n"
         "rnn_hidden_dim = 8\n"
         "attr_emb_dim = 4\n"
         "rating_hidden_dim = 4\n"
         "max_epochs = 2\n"
         "patience = 1\n"
         "batch_size = 8\n"
         "ft_epochs = 1\n"
         "lambda = 0.5\n"
         "n_samples = 1\n"
         "top_k = 3\n"
         "lambdas = 0,1\n"
         "seed = 11\n";
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("fairgen_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config text parses with defaults, comments, and overrides") {
  RunConfig def = parse_run_config_text("", "inline");
  CHECK(def.vocab_size == 20000);
  CHECK(def.max_len == 128);
  CHECK(def.top_k == 5);
  CHECK(def.batch_size == 16);
  CHECK(def.lr == 1e-4);
  CHECK(def.ft_lr == 1e-5);
  CHECK(def.n_samples == 3);
  CHECK(def.lambda_disc == 0.5);
  CHECK(def.lambda == 0.2);
  CHECK(def.eta == 0.6);
  CHECK(def.baseline == "attr");
  CHECK(def.lambdas == std::vector<double>{0, 1, 2, 5, 10});
  def.validate();

  RunConfig cfg = parse_run_config_text(
      "  # leading comment\n"
      "arch = recurrent  # trailing comment\n"
      "\n"
      "lambda = 1.5\n"
      "seed = 18446744073709551615\n"
      "lambdas = 0, 2.5 ,7\n"
      "measure = LF\n",
      "inline");
  CHECK(cfg.arch == "recurrent");
  CHECK(cfg.lambda == 1.5);
  CHECK(cfg.seed == 18446744073709551615ull);
  CHECK(cfg.lambdas == std::vector<double>{0, 2.5, 7});
  CHECK(cfg.measure == "LF");
}

TEST_CASE("config parsing rejects malformed input") {
  CHECK_THROWS_AS(parse_run_config_text("no_such_key = 1\n", "x"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("seed = 1\nseed = 2\n", "x"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("just a line\n", "x"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("batch_size = soon\n", "x"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("lr =\n", "x"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("= 4\n", "x"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_text("lambdas = 1,,2\n", "x"), ConfigError);

  // values the parser takes but validation refuses
  for (const char* bad :
       {"baseline = fancy\n", "arch = cnn\n", "measure = X\n",
        "alternation = weekly\n", "train_ratio = 0.9\n", "eta = 1.5\n",
        "norm_threshold = 1\n", "vocab_size = 3\n", "lambdas = -1\n"}) {
    RunConfig cfg = parse_run_config_text(bad, "x");
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_CASE("baseline plans resolve the documented configurations") {
  const BaselinePlan raw = baseline_plan("raw");
  CHECK_FALSE(raw.use_attribute);
  CHECK_FALSE(raw.discriminator);
  CHECK_FALSE(raw.norm_data);
  CHECK_FALSE(raw.nattr_eval);
  CHECK_FALSE(raw.counterfactual_eval);

  const BaselinePlan attr = baseline_plan("attr");
  CHECK(attr.use_attribute);
  CHECK_FALSE(attr.discriminator);
  CHECK(attr.counterfactual_eval);

  const BaselinePlan adv = baseline_plan("adv");
  CHECK_FALSE(adv.use_attribute);
  CHECK(adv.discriminator);
  CHECK_FALSE(adv.counterfactual_eval);

  const BaselinePlan norm = baseline_plan("norm");
  CHECK_FALSE(norm.use_attribute);
  CHECK(norm.norm_data);

  const BaselinePlan nattr = baseline_plan("nattr");
  CHECK(nattr.use_attribute);
  CHECK(nattr.nattr_eval);
  CHECK_FALSE(nattr.counterfactual_eval);

  const BaselinePlan coffee = baseline_plan("coffee");
  CHECK(coffee.use_attribute);
  CHECK(coffee.discriminator);
  CHECK(coffee.counterfactual_eval);

  CHECK_THROWS_AS(baseline_plan("bt"), ConfigError);
}

TEST_CASE("group grammar and oracle selector resolve") {
  RunConfig cfg = parse_run_config_text(
      "groups = m:0.6:12:2, f:0.4:5:1\nattribute = price\n", "x");
  SynthesisSpec spec = cfg.synthesis_spec();
  CHECK(spec.attribute_name == "price");
  REQUIRE(spec.groups.size() == 2);
  CHECK(spec.groups[0].value == "m");
  CHECK(spec.groups[0].prob == 0.6);
  CHECK(spec.groups[0].mean_len == 12.0);
  CHECK(spec.groups[0].mean_features == 2.0);
  CHECK(spec.groups[1].value == "f");

  RunConfig bad = parse_run_config_text("groups = m:1:2\n", "x");
  CHECK_THROWS_AS(bad.synthesis_spec(), ConfigError);

  CHECK(resolve_oracle("L", {}).name() == std::string("length"));
  CHECK(resolve_oracle("F", {"screen"}).name() == std::string("feature"));
  CHECK(resolve_oracle("LF", {"screen"}).name() == std::string("composite"));
  CHECK_THROWS_AS(resolve_oracle("Q", {}), ConfigError);
}

TEST_CASE("pipeline subcommands produce their artifacts end to end") {
  TempDir tmp("pipeline");
  RunConfig cfg = parse_run_config_text(tiny_config(tmp.path), "inline");
  std::ostringstream log;

  run_corpus(cfg, log);
  REQUIRE(fs::exists(cfg.dataset_path()));
  REQUIRE(fs::exists(cfg.lexicon_path()));
  CHECK(log.str().find("ground-truth length gap") != std::string::npos);

  // corpus synthesis is reproducible byte for byte
  const std::string first = read_file(cfg.dataset_path());
  run_corpus(cfg, log);
  CHECK(read_file(cfg.dataset_path()) == first);

  run_pretrain(cfg, log);
  REQUIRE(fs::exists(cfg.pretrain_ckpt()));
  CHECK(fs::exists(cfg.out_dir / "pretrain_log.csv"));

  run_finetune(cfg, log);
  REQUIRE(fs::exists(cfg.finetune_ckpt()));
  auto ft_log = read_lines(cfg.out_dir / "finetune_log.csv");
  REQUIRE(!ft_log.empty());
  CHECK(ft_log[0] == "step,pair,delta,l_gen,l_fair,grad_norm");

  run_eval(cfg, log);
  REQUIRE(fs::exists(cfg.out_dir / "report.csv"));
  REQUIRE(fs::exists(cfg.out_dir / "report.json"));
  REQUIRE(fs::exists(cfg.out_dir / "hist.csv"));
  auto report = read_lines(cfg.out_dir / "report.csv");
  REQUIRE(report.size() == 2);
  CHECK(report[0].rfind("model,dataset,measure,", 0) == 0);
  CHECK(report[1].rfind("attr,data,length,", 0) == 0);

  // identical config + seed: byte-identical report
  const std::string rep1 = read_file(cfg.out_dir / "report.csv");
  run_eval(cfg, log);
  CHECK(read_file(cfg.out_dir / "report.csv") == rep1);

  // evaluating the fine-tuned checkpoint instead of the pretrained one
  RunConfig ft_eval = cfg;
  ft_eval.checkpoint = cfg.finetune_ckpt();
  ft_eval.out_dir = tmp.path / "out_ft";
  run_eval(ft_eval, log);
  CHECK(fs::exists(ft_eval.out_dir / "report.csv"));

  run_sweep(cfg, log);
  auto sweep = read_lines(cfg.out_dir / "sweep.csv");
  REQUIRE(sweep.size() == 3);  // header + lambda 0 + lambda 1
  CHECK(sweep[0] == "lambda,ind_cf_ratio,bleu1_ratio,ind_cf,bleu1");
  CHECK(sweep[1].rfind("0,1,1,", 0) == 0);
}

TEST_CASE("pipeline error paths map to the documented failures") {
  TempDir tmp("pipeline_err");
  RunConfig cfg = parse_run_config_text(tiny_config(tmp.path), "inline");
  std::ostringstream log;

  // evaluating before anything exists: the dataset is the missing artifact
  CHECK_THROWS_AS(run_eval(cfg, log), ArtifactError);
  run_corpus(cfg, log);
  // now the checkpoint is the missing artifact
  CHECK_THROWS_AS(run_eval(cfg, log), ArtifactError);
  CHECK_THROWS_AS(run_finetune(cfg, log), ArtifactError);

  // an attribute-free checkpoint cannot be fine-tuned: artifact error, found
  // before any hash comparison
  RunConfig raw = cfg;
  raw.baseline = "raw";
  raw.out_dir = tmp.path / "out_raw";
  run_pretrain(raw, log);
  RunConfig ft = cfg;
  ft.checkpoint = raw.pretrain_ckpt();
  CHECK_THROWS_AS(run_finetune(ft, log), ArtifactError);
  CHECK_THROWS_AS(run_sweep(ft, log), ArtifactError);

  // a config mismatch against a real checkpoint is a config error
  run_pretrain(cfg, log);
  RunConfig wrong = cfg;
  wrong.rnn_hidden_dim = 12;
  CHECK_THROWS_AS(run_eval(wrong, log), ConfigError);
}
