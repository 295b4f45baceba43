// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fairgen/adam.hpp"
#include "fairgen/model.hpp"
#include "fairgen/quality.hpp"
#include "fairgen/train.hpp"

namespace fairgen {

struct FinetuneConfig {
  int epochs = 1;
  int batch_size = 16;
  double lr = 1e-5;
  double lambda = 0.2;  // weight of the counterfactual-fairness term
  double eta = 0.6;     // promotion weight for the lower-quality world
  int n_samples = 3;    // explanations sampled per world
  DecodeConfig decode;  // top_k 5, max_len 128
  std::uint64_t seed = 0;
  std::filesystem::path log_path;  // per-step CSV when non-empty

  void validate() const;
};

struct WorldSamples {
  int attr = 0;
  std::vector<SampleResult> samples;
  std::vector<double> quality;
  double mean_quality = 0.0;
};

// One record's factual and counterfactual sampling worlds plus the reward
// pipeline derived from them.
struct RewardPair {
  int record_index = 0;
  EncodedRecord record;
  WorldSamples fact, cf;
  double delta = 0.0;  // mean factual quality - mean counterfactual quality
  int sgn = 0;         // sign(delta); exactly 0 maps to 0
  double w = 0.0;      // weight carried by the factual world's rewards
  std::vector<double> r_fact, r_cf;      // unweighted rewards
  std::vector<double> rw_fact, rw_cf;    // promotion-weighted rewards
  std::vector<double> adv_fact, adv_cf;  // per-world mean-centered
};

// Samples n per world with paired noise: sample k uses the same seed stream
// in both worlds, so quality gaps reflect the attribute swap rather than
// sampling luck. The counterfactual attribute is drawn uniformly from the
// other values (DomainError when there is only one).
RewardPair sample_two_worlds(const GeneratorModel& model,
                             const EncodedRecord& rec, int record_index,
                             const QualityOracle& oracle,
                             const Vocabulary& vocab, const DecodeConfig& dc,
                             int n_samples, std::uint64_t seed);

double compute_delta(const WorldSamples& fact, const WorldSamples& cf);
int sign_of(double delta);

// Counterfactual value drawn uniformly from the other attribute values.
int draw_cf_attr(int attr, int n_attrs, std::uint64_t seed);

// Weight carried by the factual world; the counterfactual world carries its
// complement. The lower-quality world always ends up with eta.
double promotion_weight(int sgn, double eta);

// Fills r_*, then rw_* (promotion), then adv_* (per-world centering).
void compute_rewards(RewardPair& pair, double eta);

struct StepStats {
  int step = 0;
  double l_gen = 0.0;
  double l_fair = 0.0;
  double grad_norm = 0.0;
};

// One policy-gradient batch step. Requires the user/item/attribute embedding
// tables to be frozen (ContractError otherwise). The loss is the batch-mean
// generation loss (word + context, no rating) plus lambda times the mean
// over pairs of sum_k -log G(y_k) * advantage_k across both worlds.
StepStats fairness_gradient_step(GeneratorModel& model,
                                 const std::vector<EncodedRecord>& batch,
                                 const std::vector<RewardPair>& pairs,
                                 const FinetuneConfig& cfg, AdamState& opt);

struct FinetuneResult {
  int epochs_run = 0;
  int steps = 0;
  double mean_abs_delta = 0.0;  // across all sampled pairs
  std::vector<StepStats> history;
};

// Counterfactual-fairness fine-tuning. Freezes the user/item/attribute
// tables for the duration (restoring the previous flags afterwards), drops
// the rating loss, and runs `epochs` passes. With lambda == 0 the fairness
// term vanishes and each step is a plain generation-loss step.
FinetuneResult finetune(GeneratorModel& model,
                        const std::vector<EncodedRecord>& train,
                        const QualityOracle& oracle, const Vocabulary& vocab,
                        const FinetuneConfig& cfg, AdamState* opt = nullptr);

}  // namespace fairgen
