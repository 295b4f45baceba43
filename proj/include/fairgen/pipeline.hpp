// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "fairgen/baselines.hpp"
#include "fairgen/corpus.hpp"
#include "fairgen/metrics.hpp"
#include "fairgen/model.hpp"
#include "fairgen/policy.hpp"
#include "fairgen/train.hpp"

namespace fairgen {

// How a baseline selector maps onto the shared machinery.
struct BaselinePlan {
  bool use_attribute = false;       // attribute token in the model input
  bool discriminator = false;       // adversarial term during pretraining
  bool norm_data = false;           // gap-trim the train split first
  bool nattr_eval = false;          // neutralize the attribute at inference
  bool counterfactual_eval = false; // Ind-CF / Grp-CF defined
};

BaselinePlan baseline_plan(const std::string& name);

// Flat key = value configuration shared by every subcommand.
struct RunConfig {
  // corpus synthesis
  std::string attribute = "gender";
  std::string groups;  // value:prob:mean_len:mean_features, comma-separated
  int n_users = 100, n_items = 50, n_records = 2000;
  double rating_mean = 4.0, rating_sd = 1.0;
  int vocab_size = 20000;
  std::array<double, 3> ratios{0.8, 0.1, 0.1};

  // artifacts
  std::filesystem::path data_dir = "data";
  std::filesystem::path out_dir = "out";
  std::filesystem::path checkpoint;  // input for finetune/eval/sweep

  // model
  std::string arch = "transformer";
  std::string baseline = "attr";
  std::string measure = "L";  // L | F | LF
  int max_len = 128;
  int emb_dim = 512, ffn_dim = 2048, n_layers = 2, n_heads = 2;
  double dropout = 0.2;
  int rnn_emb_dim = 300, rnn_hidden_dim = 400, attr_emb_dim = 100;
  double rnn_dropout = 0.1;
  int rating_hidden_dim = 64;

  // pretraining
  int max_epochs = 100, patience = 5, batch_size = 16;
  double lr = 1e-4;
  double lambda_disc = 0.5;  // applied when the plan carries a discriminator
  int disc_hidden = 512, gen_units = 1, disc_units = 1;
  std::string alternation = "epoch";  // epoch | batch

  // fine-tuning and evaluation
  int ft_epochs = 1;
  double ft_lr = 1e-5;
  double lambda = 0.2, eta = 0.6;
  int n_samples = 3, top_k = 5;
  std::vector<double> lambdas{0.0, 1.0, 2.0, 5.0, 10.0};
  double norm_threshold = 0.10;

  std::uint64_t seed = 0;
  int threads = 1;  // evaluation parallelism cap

  void validate() const;
  BaselinePlan plan() const { return baseline_plan(baseline); }
  ModelConfig model_config() const;
  SynthesisSpec synthesis_spec() const;

  std::filesystem::path dataset_path() const { return data_dir / "dataset.jsonl"; }
  std::filesystem::path lexicon_path() const { return data_dir / "lexicon.txt"; }
  std::filesystem::path pretrain_ckpt() const { return out_dir / "pretrain.ckpt"; }
  std::filesystem::path finetune_ckpt() const { return out_dir / "finetune.ckpt"; }
  // The input checkpoint: explicit key or the pretrain output.
  std::filesystem::path input_ckpt() const {
    return checkpoint.empty() ? pretrain_ckpt() : checkpoint;
  }
};

// Parses the flat format: one `key = value` per line, # comments, unknown or
// repeated keys rejected. `where` names the source in diagnostics.
RunConfig parse_run_config_text(const std::string& text,
                                const std::string& where);
RunConfig parse_run_config(const std::filesystem::path& path);

// The selected quality measure as an oracle (F/LF need the lexicon).
QualityOracle resolve_oracle(const std::string& measure,
                             const std::vector<std::string>& lexicon);

// Dataset, splits, and encodings shared by train/eval commands. The train
// split is gap-trimmed here when the plan says so.
struct PipelineData {
  Dataset dataset;
  Vocabulary vocab;
  std::vector<std::string> lexicon;
  std::vector<EncodedRecord> train, valid, test;
  int norm_removed = 0;
};

PipelineData load_pipeline_data(const RunConfig& cfg);

// Subcommand bodies; `log` receives the human-readable progress lines.
void run_corpus(const RunConfig& cfg, std::ostream& log);
void run_pretrain(const RunConfig& cfg, std::ostream& log);
void run_finetune(const RunConfig& cfg, std::ostream& log);
void run_eval(const RunConfig& cfg, std::ostream& log);
void run_sweep(const RunConfig& cfg, std::ostream& log);

}  // namespace fairgen
