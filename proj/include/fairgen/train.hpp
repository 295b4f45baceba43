// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fairgen/adam.hpp"
#include "fairgen/checkpoint.hpp"
#include "fairgen/model.hpp"

namespace fairgen {

// Two-layer MLP returning log-probabilities over attribute values. Used both
// as the adversary during training and as a fresh probe for leakage checks.
class Discriminator {
 public:
  Discriminator() = default;

  static Discriminator build(int input_dim, int hidden, int n_classes,
                             std::uint64_t seed);

  int input_dim() const { return in_; }
  int hidden() const { return hidden_; }
  int n_classes() const { return classes_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // repr is [rows, input_dim]; returns [rows, n_classes].
  Tensor log_probs(Tape& tape, const Tensor& repr) const;

  Discriminator clone() const;

 private:
  int in_ = 0, hidden_ = 0, classes_ = 0;
  ParamSet params_;
};

// Shuffled index batches: Fisher-Yates over 0..n-1, then contiguous chunks
// of batch_size (the last one may be short).
std::vector<std::vector<int>> shuffled_batches(int n, int batch_size, Rng& rng);

// The record's user embedding row, gathered on the tape so adversarial
// gradients reach the table. The discriminator reads the input embedding
// r_u alone.
Tensor user_repr(Tape& tape, const GeneratorModel& model,
                 const EncodedRecord& rec);

// log D(a | r_u) for the record's true attribute. The generator descends on
// +lambda_disc * this, pushing the attribute out of r_u; the discriminator
// phase ascends on it (minimizes the negative).
Tensor attribute_log_prob(Tape& tape, const GeneratorModel& model,
                          const Discriminator& disc, const EncodedRecord& rec);

struct TrainConfig {
  int max_epochs = 100;
  int patience = 5;  // generator epochs without validation improvement
  int batch_size = 16;
  double lr = 1e-4;
  double lambda_disc = 0.0;  // weight of the adversarial term; 0 disables it
  int gen_units = 1;         // generator units per alternation round
  int disc_units = 1;        // discriminator units per alternation round
  bool batch_granularity = false;  // alternate per batch instead of per epoch
  std::uint64_t seed = 0;
  std::filesystem::path log_path;  // per-epoch CSV when non-empty

  void validate() const;
};

struct EpochStats {
  int epoch = 0;             // generator epoch index
  double train_total = 0.0;  // mean batch loss, adversarial term included
  double train_adv = 0.0;    // mean adversarial contribution
  double disc_loss = 0.0;    // mean discriminator loss in the adjacent phase
  double valid_total = 0.0;  // nll + context + rating on the validation set
};

struct TrainResult {
  int epochs_run = 0;
  int best_epoch = -1;
  double best_valid = 0.0;
  bool stopped_early = false;
  std::vector<EpochStats> history;
};

// Generation-loss training with optional adversarial alternation (enabled
// when disc != nullptr and lambda_disc > 0). Early stopping on the
// validation generation loss with best-epoch restore. A lambda_disc of 0
// follows the exact same rng streams as a run without a discriminator, so
// the two trajectories are bitwise identical. When gen_opt is given, its
// moments and step counter are used and advanced in place (checkpoint
// resume); otherwise a fresh optimizer is used.
TrainResult pretrain(GeneratorModel& model, Discriminator* disc,
                     const std::vector<EncodedRecord>& train,
                     const std::vector<EncodedRecord>& valid,
                     const TrainConfig& cfg, AdamState* gen_opt = nullptr);

// Alternating schedule made explicit: gen_units and disc_units must be >= 1.
TrainResult alternate_train(GeneratorModel& model, Discriminator& disc,
                            const std::vector<EncodedRecord>& train,
                            const std::vector<EncodedRecord>& valid,
                            const TrainConfig& cfg,
                            AdamState* gen_opt = nullptr);

struct ProbeConfig {
  int hidden = 32;
  int epochs = 120;
  double lr = 5e-3;
};

// Trains a fresh classifier on the frozen user embeddings of probe_train
// and reports accuracy on probe_heldout. Measures how much attribute
// information is left in r_u.
double probe_accuracy(const GeneratorModel& model,
                      const std::vector<EncodedRecord>& probe_train,
                      const std::vector<EncodedRecord>& probe_heldout,
                      int n_classes, std::uint64_t seed,
                      const ProbeConfig& pc = {});

// Checkpoint helpers: model parameters under "model/", discriminator under
// "disc/", optimizer moments under "opt/".
void save_model_checkpoint(const std::filesystem::path& path,
                           const GeneratorModel& model,
                           const Discriminator* disc, const AdamState* opt,
                           std::uint64_t vocab_hash);

// Rebuilds a model from a checkpoint, validating the config and vocabulary
// hashes. When disc/opt state is present and an output slot is given, it is
// restored as well.
GeneratorModel load_model_checkpoint(const std::filesystem::path& path,
                                     const ModelConfig& cfg, int vocab_size,
                                     int n_users, int n_items, int n_attrs,
                                     std::uint64_t vocab_hash,
                                     Discriminator* disc_out = nullptr,
                                     AdamState* opt_out = nullptr);

}  // namespace fairgen
