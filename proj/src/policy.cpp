// SPDX-License-Identifier: Apache-2.0
#include "fairgen/policy.hpp"

#include <cmath>
#include <sstream>

#include "fairgen/io.hpp"

namespace fairgen {

namespace {

constexpr std::uint64_t kPolicySample = 0x50534d50ull;  // "PSMP"
constexpr std::uint64_t kCfPick = 0x43465049ull;        // "CFPI"
constexpr std::uint64_t kFtShuffle = 0x46545348ull;     // "FTSH"

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

void FinetuneConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!std::isfinite(lr) || lr <= 0.0) throw ConfigError("lr must be positive");
  if (!std::isfinite(lambda) || lambda < 0.0)
    throw ConfigError("lambda must be >= 0");
  if (!std::isfinite(eta) || eta < 0.0 || eta > 1.0)
    throw ConfigError("eta must be in [0,1]");
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  if (decode.top_k < 1) throw ConfigError("top_k must be >= 1");
  if (decode.max_len < 1) throw ConfigError("decode max_len must be >= 1");
}

RewardPair sample_two_worlds(const GeneratorModel& model,
                             const EncodedRecord& rec, int record_index,
                             const QualityOracle& oracle,
                             const Vocabulary& vocab, const DecodeConfig& dc,
                             int n_samples, std::uint64_t seed) {
  if (!model.has_attribute())
    throw DomainError("two-world sampling needs an attribute-conditioned model");
  if (model.n_attrs() < 2)
    throw DomainError("attribute space must offer a counterfactual value");
  if (n_samples < 1) throw DomainError("n_samples must be >= 1");

  RewardPair p;
  p.record_index = record_index;
  p.record = rec;
  p.fact.attr = rec.attr;
  p.cf.attr = draw_cf_attr(
      rec.attr, model.n_attrs(),
      Rng::mix({seed, kCfPick, static_cast<std::uint64_t>(record_index)}));

  for (int k = 0; k < n_samples; ++k) {
    // identical noise stream in both worlds: only the attribute differs
    const std::uint64_t s =
        Rng::mix({seed, kPolicySample, static_cast<std::uint64_t>(record_index),
                  static_cast<std::uint64_t>(k)});
    for (WorldSamples* world : {&p.fact, &p.cf}) {
      SampleResult sr = sample(model, rec, dc, s, world->attr);
      world->quality.push_back(oracle(vocab.decode(sr.ids)));
      world->samples.push_back(std::move(sr));
    }
  }
  p.fact.mean_quality = mean_of(p.fact.quality);
  p.cf.mean_quality = mean_of(p.cf.quality);
  p.delta = compute_delta(p.fact, p.cf);
  p.sgn = sign_of(p.delta);
  return p;
}

double compute_delta(const WorldSamples& fact, const WorldSamples& cf) {
  return fact.mean_quality - cf.mean_quality;
}

int draw_cf_attr(int attr, int n_attrs, std::uint64_t seed) {
  if (n_attrs < 2 || attr < 0 || attr >= n_attrs)
    throw DomainError("no counterfactual value exists for this attribute");
  Rng rng(seed);
  const int off = rng.uniform_int(n_attrs - 1);
  return off >= attr ? off + 1 : off;
}

int sign_of(double delta) {
  if (delta > 0.0) return 1;
  if (delta < 0.0) return -1;
  return 0;
}

double promotion_weight(int sgn, double eta) {
  if (sgn < -1 || sgn > 1) throw DomainError("sign must be -1, 0, or 1");
  if (!std::isfinite(eta) || eta < 0.0 || eta > 1.0)
    throw DomainError("eta must be in [0,1]");
  const double s = (sgn + 1) / 2.0;
  return s * (1.0 - eta) + (1.0 - s) * eta;
}

void compute_rewards(RewardPair& p, double eta) {
  const std::size_t n = p.fact.samples.size();
  if (n == 0 || p.cf.samples.size() != n)
    throw ContractError("reward pair must hold equal, non-empty sample sets");
  const double invn = 1.0 / static_cast<double>(n);

  p.r_fact.resize(n);
  p.r_cf.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    // suppress the favoured world, promote the disfavoured one
    p.r_fact[k] = -invn * p.sgn * p.fact.quality[k];
    p.r_cf[k] = invn * p.sgn * p.cf.quality[k];
  }

  p.w = promotion_weight(p.sgn, eta);
  p.rw_fact.resize(n);
  p.rw_cf.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    p.rw_fact[k] = p.w * p.r_fact[k];
    p.rw_cf[k] = (1.0 - p.w) * p.r_cf[k];
  }

  const double mf = mean_of(p.rw_fact);
  const double mc = mean_of(p.rw_cf);
  p.adv_fact.resize(n);
  p.adv_cf.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    p.adv_fact[k] = p.rw_fact[k] - mf;
    p.adv_cf[k] = p.rw_cf[k] - mc;
  }
}

StepStats fairness_gradient_step(GeneratorModel& model,
                                 const std::vector<EncodedRecord>& batch,
                                 const std::vector<RewardPair>& pairs,
                                 const FinetuneConfig& cfg, AdamState& opt) {
  if (batch.empty()) throw DomainError("fairness step needs a non-empty batch");
  for (const char* name : {"emb/user", "emb/item", "emb/attr"}) {
    const Tensor* t = model.params().find(name);
    if (t && t->requires_grad())
      throw ContractError(std::string("embedding table must be frozen during "
                                      "fine-tuning: ") +
                          name);
  }
  if (cfg.lambda > 0.0 && pairs.size() != batch.size())
    throw ContractError("one reward pair per batch record is required");

  Tape tape;
  Tensor gen_sum;
  for (const EncodedRecord& rec : batch) {
    ModelOutput out = model.forward(tape, rec);
    Tensor l = tape.add(nll_loss(tape, out, rec), context_loss(tape, out, rec));
    gen_sum = gen_sum.defined() ? tape.add(gen_sum, l) : l;
  }
  Tensor loss = tape.scale(gen_sum, 1.0 / static_cast<double>(batch.size()));

  StepStats st;
  st.l_gen = loss.value();
  if (cfg.lambda > 0.0) {
    Tensor fair_sum;
    for (const RewardPair& p : pairs) {
      for (const WorldSamples* world : {&p.fact, &p.cf}) {
        const std::vector<double>& adv =
            world == &p.fact ? p.adv_fact : p.adv_cf;
        if (adv.size() != world->samples.size())
          throw ContractError("rewards were not computed for this pair");
        for (std::size_t k = 0; k < world->samples.size(); ++k) {
          if (adv[k] == 0.0) continue;  // zero advantage contributes nothing
          Tensor lp = sequence_logprob(tape, model, p.record,
                                       world->samples[k], cfg.decode,
                                       world->attr);
          Tensor term = tape.scale(lp, -adv[k]);
          fair_sum = fair_sum.defined() ? tape.add(fair_sum, term) : term;
        }
      }
    }
    if (fair_sum.defined()) {
      st.l_fair = fair_sum.value() / static_cast<double>(pairs.size());
      loss = tape.add(loss, tape.scale(fair_sum, cfg.lambda /
                                                     static_cast<double>(
                                                         pairs.size())));
    }
  }

  tape.backward(loss);
  double sq = 0.0;
  for (const auto& [name, t] : model.params().items())
    if (t.has_grad())
      for (double g : t.grad()) sq += g * g;
  st.grad_norm = std::sqrt(sq);
  opt.step(model.params(), cfg.lr);
  return st;
}

FinetuneResult finetune(GeneratorModel& model,
                        const std::vector<EncodedRecord>& train,
                        const QualityOracle& oracle, const Vocabulary& vocab,
                        const FinetuneConfig& cfg, AdamState* opt) {
  cfg.validate();
  if (!model.has_attribute())
    throw DomainError("fine-tuning needs an attribute-conditioned model");
  if (train.empty()) throw DomainError("training set is empty");

  // The personalization tables stay fixed; only the generation pathway moves.
  std::vector<std::pair<std::string, bool>> saved_flags;
  for (const char* name : {"emb/user", "emb/item", "emb/attr"}) {
    Tensor* t = model.params().find(name);
    if (t) {
      saved_flags.emplace_back(name, t->requires_grad());
      t->set_requires_grad(false);
    }
  }

  AdamState own_opt;
  AdamState* o = opt ? opt : &own_opt;
  FinetuneResult res;
  double delta_abs_sum = 0.0;
  int delta_n = 0;
  std::ostringstream log;
  log << "step,pair,delta,l_gen,l_fair,grad_norm\n";

  try {
    const int n = static_cast<int>(train.size());
    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      Rng shuffle_rng(Rng::mix({cfg.seed, kFtShuffle,
                                static_cast<std::uint64_t>(epoch)}));
      const std::uint64_t epoch_seed = Rng::mix({cfg.seed,
                                                 static_cast<std::uint64_t>(epoch)});
      for (const auto& ids : shuffled_batches(n, cfg.batch_size, shuffle_rng)) {
        std::vector<EncodedRecord> batch;
        std::vector<RewardPair> pairs;
        batch.reserve(ids.size());
        for (int i : ids) batch.push_back(train[i]);
        if (cfg.lambda > 0.0) {
          pairs.reserve(ids.size());
          for (int i : ids) {
            RewardPair p = sample_two_worlds(model, train[i], i, oracle, vocab,
                                             cfg.decode, cfg.n_samples,
                                             epoch_seed);
            compute_rewards(p, cfg.eta);
            delta_abs_sum += std::abs(p.delta);
            ++delta_n;
            pairs.push_back(std::move(p));
          }
        }
        StepStats st;
        try {
          st = fairness_gradient_step(model, batch, pairs, cfg, *o);
        } catch (const NumericError& e) {
          throw NumericError("fine-tune step " + std::to_string(step) + ": " +
                             e.what());
        }
        st.step = step;
        if (pairs.empty()) {
          log << step << ",-1,0," << format_g9(st.l_gen) << ','
              << format_g9(st.l_fair) << ',' << format_g9(st.grad_norm) << '\n';
        } else {
          for (const RewardPair& p : pairs)
            log << step << ',' << p.record_index << ',' << format_g9(p.delta)
                << ',' << format_g9(st.l_gen) << ',' << format_g9(st.l_fair)
                << ',' << format_g9(st.grad_norm) << '\n';
        }
        res.history.push_back(st);
        ++step;
      }
      ++res.epochs_run;
    }
    res.steps = step;
  } catch (...) {
    for (const auto& [name, flag] : saved_flags)
      model.params().at(name).set_requires_grad(flag);
    throw;
  }
  for (const auto& [name, flag] : saved_flags)
    model.params().at(name).set_requires_grad(flag);

  res.mean_abs_delta = delta_n > 0 ? delta_abs_sum / delta_n : 0.0;
  if (!cfg.log_path.empty()) atomic_write(cfg.log_path, log.str());
  return res;
}

}  // namespace fairgen
