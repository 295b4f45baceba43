// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairgen/corpus.hpp"
#include "fairgen/params.hpp"
#include "fairgen/tensor.hpp"

namespace fairgen {

enum class Arch { transformer, recurrent };

const char* arch_name(Arch a);
Arch arch_from_name(const std::string& name);

struct ModelConfig {
  Arch arch = Arch::transformer;
  // Baselines without attribute conditioning build with this off; the
  // attribute table is then absent entirely.
  bool use_attribute = true;

  // transformer dims
  int emb = 512;
  int ffn = 2048;
  int layers = 2;
  int heads = 2;
  double dropout = 0.2;

  // recurrent dims
  int rnn_emb = 300;
  int rnn_hidden = 400;
  int attr_emb = 100;  // attribute rows are this wide (recurrent only)
  double rnn_dropout = 0.1;

  int rating_hidden = 64;  // hidden width of the two-layer rating head
  int max_len = 128;       // maximum explanation length / decode budget

  static ModelConfig paper(Arch arch);
  // Scaled-down dims for single-core experiments: emb 64, ffn 128, hidden 64.
  static ModelConfig desk(Arch arch);

  void validate() const;
  std::uint64_t fingerprint(int vocab, int users, int items, int attrs) const;
};

// A record with ids resolved against a dataset + vocabulary. `words` holds
// explanation token ids only; begin/end markers are added by the model.
struct EncodedRecord {
  int user = 0;
  int item = 0;
  int attr = 0;
  std::vector<int> words;
  double rating = 0.0;
};

EncodedRecord encode_record(const Dataset& ds, const Vocabulary& vocab,
                            const Record& r);
std::vector<EncodedRecord> encode_records(const Dataset& ds,
                                          const Vocabulary& vocab,
                                          const std::vector<int>& indices);

// Visibility matrix (entries 0/1): the leading special positions see each
// other; word position t sees all specials and word positions <= t.
Tensor peter_mask(int n_special, int n_words);

struct ForwardOptions {
  int attr_override = -1;  // -1: use the record's attribute
  bool training = false;   // enables dropout (requires dropout_rng)
  Rng* dropout_rng = nullptr;
};

struct ModelOutput {
  Tensor word_logits;     // [T_words, vocab]; row t predicts the t-th target
  Tensor rating;          // [1]
  Tensor context_logits;  // [1, vocab]; one order-free distribution
};

class GeneratorModel {
 public:
  GeneratorModel() = default;

  static GeneratorModel build(const ModelConfig& cfg, int vocab_size,
                              int n_users, int n_items, int n_attrs,
                              std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  int vocab_size() const { return vocab_; }
  int n_users() const { return users_; }
  int n_items() const { return items_; }
  int n_attrs() const { return attrs_; }
  bool has_attribute() const { return cfg_.use_attribute; }

  // The attribute column of the attention mask can be switched off at
  // inference (transformer); see the baselines module.
  bool attr_attention_disabled() const { return attr_attention_disabled_; }
  void disable_attr_attention();

  GeneratorModel clone() const;  // deep copy of weights and flags

  // Full forward pass for one record on the given tape. Throws ContractError
  // when the explanation exceeds max_len, IndexError for out-of-range ids.
  ModelOutput forward(Tape& tape, const EncodedRecord& rec,
                      const ForwardOptions& opt = {}) const;

  std::uint64_t fingerprint() const {
    return cfg_.fingerprint(vocab_, users_, items_, attrs_);
  }

 private:
  ModelConfig cfg_;
  int vocab_ = 0, users_ = 0, items_ = 0, attrs_ = 0;
  ParamSet params_;
  bool attr_attention_disabled_ = false;

  ModelOutput forward_transformer(Tape& tape, const EncodedRecord& rec,
                                  const ForwardOptions& opt) const;
  ModelOutput forward_recurrent(Tape& tape, const EncodedRecord& rec,
                                const ForwardOptions& opt) const;
  int resolve_attr(const EncodedRecord& rec, const ForwardOptions& opt) const;
};

// Batch convenience (inference mode, fresh tape per record).
std::vector<ModelOutput> forward_logits(const GeneratorModel& model,
                                        const std::vector<EncodedRecord>& recs);

// Same record with the attribute token swapped; no weights copied or touched.
EncodedRecord counterfactual_view(const GeneratorModel& model,
                                  const EncodedRecord& rec, int attr_value);

struct LossBreakdown {
  double nll = 0.0;
  double context = 0.0;
  double rating_mse = 0.0;
  double total = 0.0;
};

// On-tape per-record losses. nll targets are the explanation words plus the
// end marker; the context target is the order-free bag of explanation words.
Tensor nll_loss(Tape& tape, const ModelOutput& out, const EncodedRecord& rec);
Tensor context_loss(Tape& tape, const ModelOutput& out, const EncodedRecord& rec);
Tensor rating_loss(Tape& tape, const ModelOutput& out, const EncodedRecord& rec);

// Inference-mode means over a record list.
LossBreakdown loss_breakdown(const GeneratorModel& model,
                             const std::vector<EncodedRecord>& recs);

struct DecodeConfig {
  int top_k = 5;
  int max_len = 128;
};

struct SampleResult {
  std::vector<int> ids;  // explanation token ids, no markers
  double logprob = 0.0;  // sum of step log-probs under the truncated policy
  bool hit_eos = false;  // false when the length budget cut decoding off
};

// Top-k sampling. Candidates never include the begin/unknown/pad markers,
// and the end marker is withheld at the first step so explanations are
// non-empty. Ties in logits break toward the lower token id.
SampleResult sample(const GeneratorModel& model, const EncodedRecord& rec,
                    const DecodeConfig& dc, std::uint64_t seed,
                    int attr_override = -1);

// Recomputes a realized sample's log-probability on a tape, reproducing the
// exact candidate sets the sampler saw (the policy is the renormalized
// top-k distribution). Scalar output.
Tensor sequence_logprob(Tape& tape, const GeneratorModel& model,
                        const EncodedRecord& rec, const SampleResult& sr,
                        const DecodeConfig& dc, int attr_override = -1);

// Candidate selection shared by sample() and sequence_logprob().
std::vector<int> topk_candidates(const std::vector<double>& logits, int k,
                                 bool allow_eos);

}  // namespace fairgen
