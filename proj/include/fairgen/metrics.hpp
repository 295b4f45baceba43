// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fairgen/corpus.hpp"
#include "fairgen/model.hpp"
#include "fairgen/quality.hpp"

namespace fairgen {

// ---- text-overlap and rating metrics ----

// Corpus-level BLEU-n: clipped modified n-gram precision, geometric mean
// over orders 1..n (zero if any order is unmatched), brevity penalty
// exp(1 - r/c) when the candidates run short. No smoothing.
double bleu(const std::vector<std::vector<std::string>>& candidates,
            const std::vector<std::vector<std::string>>& references, int n);

// Per-pair ROUGE F1. variant: '1'/'2' n-gram overlap, 'L' longest common
// subsequence. Empty inputs score 0.
double rouge(const std::vector<std::string>& candidate,
             const std::vector<std::string>& reference, char variant);

// Mean per-pair ROUGE F1 over aligned lists.
double rouge_mean(const std::vector<std::vector<std::string>>& candidates,
                  const std::vector<std::vector<std::string>>& references,
                  char variant);

double rmse(const std::vector<double>& predicted,
            const std::vector<double>& truth);

// ---- fairness metrics over sampled quality tables ----

// Per-record quality table: N factual scores plus, when counterfactuals are
// enabled, N scores for every other attribute value. cf[attr] stays empty.
struct WorldQuality {
  int attr = 0;
  int designated_cf = -1;  // the drawn a' used by ind_cf
  std::vector<double> fact;
  std::vector<std::vector<double>> cf;
};

// Mean over records of |mean factual quality - mean quality under the
// designated counterfactual value|.
double ind_cf_value(const std::vector<WorldQuality>& worlds);

// (1/(G * (|A|-1))) sum over non-empty groups a and values a' != a of
// |sum fact - sum cf(a')| / |D_a|, G = number of non-empty groups.
double grp_cf_value(const std::vector<WorldQuality>& worlds, int n_attrs);

// Mean absolute gap in group-mean factual quality over unordered pairs of
// non-empty groups; DomainError with fewer than two.
double ddp_value(const std::vector<WorldQuality>& worlds, int n_attrs);

// ---- generation-backed evaluation ----

struct EvalConfig {
  int n_samples = 3;
  int n_attrs = 2;             // attribute space size (groups for DDP)
  std::uint64_t seed = 0;
  DecodeConfig decode;         // top-5, max_len 128
  bool counterfactuals = true; // Ind-CF / Grp-CF columns print "-" when off
  std::vector<QualityOracle> oracles = {QualityOracle::length()};
  int threads = 1;
  std::string model_tag = "model";
  std::string dataset_tag = "data";

  void validate() const;
};

// One record's sampled explanations, decoded. cf is indexed by attribute
// value and empty at the factual one; empty everywhere when counterfactual
// generation is off.
struct GeneratedWorlds {
  int attr = 0;
  int designated_cf = -1;
  std::vector<std::vector<std::string>> fact;
  std::vector<std::vector<std::vector<std::string>>> cf;
};

// Samples every world with paired noise: sample k of record i reuses one
// seed across all attribute values. Deterministic for any thread count.
std::vector<GeneratedWorlds> generate_worlds(
    const GeneratorModel& model, const std::vector<EncodedRecord>& records,
    const Vocabulary& vocab, const EvalConfig& cfg);

// Scores one oracle over generated worlds.
std::vector<WorldQuality> score_worlds(
    const std::vector<GeneratedWorlds>& worlds, const QualityOracle& oracle);

struct MeasureRow {
  std::string measure;
  bool cf_defined = false;
  double ind_cf = 0.0;
  double grp_cf = 0.0;
  double ddp = 0.0;
};

struct EvalReport {
  std::string model_tag, dataset_tag;
  int n_samples = 0;
  std::uint64_t seed = 0;
  std::vector<MeasureRow> measures;
  double bleu1 = 0.0, bleu4 = 0.0;
  double rouge1 = 0.0, rouge2 = 0.0, rougel = 0.0;
  double rating_rmse = 0.0;
};

// Builds the report from pre-generated worlds: fairness per oracle, BLEU and
// ROUGE of the first factual sample against the reference words, RMSE of the
// rating head.
EvalReport report_from_worlds(const std::vector<GeneratedWorlds>& worlds,
                              const GeneratorModel& model,
                              const std::vector<EncodedRecord>& records,
                              const Vocabulary& vocab, const EvalConfig& cfg);

// generate_worlds + report_from_worlds.
EvalReport evaluate(const GeneratorModel& model,
                    const std::vector<EncodedRecord>& records,
                    const Vocabulary& vocab, const EvalConfig& cfg);

// CSV rows, one per (model, dataset, measure); BLEU/ROUGE are scaled by 100,
// undefined counterfactual columns print "-", BERTScore "not computed".
void write_report_csv(const std::filesystem::path& path,
                      const std::vector<EvalReport>& reports);
void write_report_json(const std::filesystem::path& path,
                       const std::vector<EvalReport>& reports);

// Token-length counts of the sampled explanations per group and world
// ("factual" rows always; "counterfactual" = designated world when present).
// CSV columns: group,world,length,count.
void write_length_histogram(const std::filesystem::path& path,
                            const std::vector<GeneratedWorlds>& worlds,
                            const AttributeSpace& attrs);

}  // namespace fairgen
