// SPDX-License-Identifier: Apache-2.0
#include "fairgen/train.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#include "fairgen/io.hpp"

namespace fairgen {

namespace {

constexpr std::uint64_t kDiscInit = 0x44494e49ull;     // "DINI"
constexpr std::uint64_t kGenShuffle = 0x47534846ull;   // "GSHF"
constexpr std::uint64_t kGenDrop = 0x4744524full;      // "GDRO"
constexpr std::uint64_t kDiscShuffle = 0x44534846ull;  // "DSHF"
constexpr std::uint64_t kProbeInit = 0x50494e49ull;    // "PINI"

// Temporarily freezes a parameter set so no gradients can be routed into it;
// restores the previous flags on scope exit.
class FreezeGuard {
 public:
  explicit FreezeGuard(ParamSet& ps) : ps_(&ps) {
    saved_.reserve(ps.items().size());
    for (auto& [name, t] : ps.items()) {
      saved_.push_back(t.requires_grad());
      t.set_requires_grad(false);
    }
  }
  ~FreezeGuard() {
    for (std::size_t i = 0; i < saved_.size(); ++i)
      ps_->items()[i].second.set_requires_grad(saved_[i]);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  ParamSet* ps_;
  std::vector<bool> saved_;
};

void check_frozen_clean(const ParamSet& ps, const char* who) {
  for (const auto& [name, t] : ps.items())
    if (t.has_grad())
      throw ContractError(std::string("gradient leaked into frozen ") + who +
                          " parameter: " + name);
}

std::vector<double> repr_values(const GeneratorModel& model,
                                const EncodedRecord& rec) {
  const Tensor& users = model.params().at("emb/user");
  const int d = users.cols();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) out.push_back(users.at(rec.user, j));
  return out;
}

}  // namespace

std::vector<std::vector<int>> shuffled_batches(int n, int batch_size, Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  std::vector<std::vector<int>> batches;
  for (int b = 0; b < n; b += batch_size) {
    const int e = std::min(n, b + batch_size);
    batches.emplace_back(idx.begin() + b, idx.begin() + e);
  }
  return batches;
}

Discriminator Discriminator::build(int input_dim, int hidden, int n_classes,
                                   std::uint64_t seed) {
  if (input_dim < 1 || hidden < 1 || n_classes < 2)
    throw ConfigError("discriminator needs input_dim/hidden >= 1, classes >= 2");
  Discriminator d;
  d.in_ = input_dim;
  d.hidden_ = hidden;
  d.classes_ = n_classes;
  Rng rng(Rng::mix({seed, kDiscInit}));
  d.params_.add("w1", Tensor::uniform({input_dim, hidden}, -0.1, 0.1, rng, true));
  d.params_.add("b1", Tensor::zeros({hidden}, true));
  d.params_.add("w2", Tensor::uniform({hidden, n_classes}, -0.1, 0.1, rng, true));
  d.params_.add("b2", Tensor::zeros({n_classes}, true));
  return d;
}

Tensor Discriminator::log_probs(Tape& tape, const Tensor& repr) const {
  if (repr.ndim() != 2 || repr.cols() != in_)
    throw ContractError("discriminator input width mismatch: expected " +
                        std::to_string(in_));
  Tensor h = tape.tanh(tape.add_row(tape.matmul(repr, params_.at("w1")),
                                    params_.at("b1")));
  return tape.log_softmax(
      tape.add_row(tape.matmul(h, params_.at("w2")), params_.at("b2")), -1);
}

Discriminator Discriminator::clone() const {
  Discriminator d;
  d.in_ = in_;
  d.hidden_ = hidden_;
  d.classes_ = classes_;
  for (const auto& [name, t] : params_.items()) {
    Tensor copy = t.clone();
    copy.set_requires_grad(t.requires_grad());
    d.params_.add(name, copy);
  }
  return d;
}

Tensor user_repr(Tape& tape, const GeneratorModel& model,
                 const EncodedRecord& rec) {
  return tape.gather_rows(model.params().at("emb/user"), {rec.user});
}

Tensor attribute_log_prob(Tape& tape, const GeneratorModel& model,
                          const Discriminator& disc, const EncodedRecord& rec) {
  if (rec.attr < 0 || rec.attr >= disc.n_classes())
    throw IndexError("attribute id out of discriminator range");
  Tensor lp = disc.log_probs(tape, user_repr(tape, model, rec));
  return tape.pick(lp, rec.attr);
}

void TrainConfig::validate() const {
  if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!std::isfinite(lr) || lr <= 0.0) throw ConfigError("lr must be positive");
  if (!std::isfinite(lambda_disc) || lambda_disc < 0.0)
    throw ConfigError("lambda_disc must be >= 0");
  if (gen_units < 1) throw ConfigError("gen_units must be >= 1");
  if (disc_units < 1) throw ConfigError("disc_units must be >= 1");
}

namespace {

struct LoopState {
  AdamState own_gen_opt, disc_opt;
  AdamState* gen_opt = &own_gen_opt;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_snap;
  int ticks = 0;
  int gen_epoch = 0;
  std::uint64_t disc_phase = 0;
  bool stop = false;
};

double gen_batch_step(GeneratorModel& model, Discriminator* disc,
                      const std::vector<EncodedRecord>& recs,
                      const std::vector<int>& batch, const TrainConfig& cfg,
                      bool adversarial, Rng& drop_rng, AdamState& opt,
                      double& adv_accum) {
  Tape tape;
  Tensor total;
  double adv_val = 0.0;
  // The adversary's weights must not move during a generator step.
  std::unique_ptr<FreezeGuard> guard;
  if (adversarial) guard = std::make_unique<FreezeGuard>(disc->params());
  for (int i : batch) {
    const EncodedRecord& r = recs[i];
    ForwardOptions fo;
    fo.training = true;
    fo.dropout_rng = &drop_rng;
    ModelOutput out = model.forward(tape, r, fo);
    Tensor l = tape.add(tape.add(nll_loss(tape, out, r),
                                 context_loss(tape, out, r)),
                        rating_loss(tape, out, r));
    if (adversarial) {
      Tensor term = tape.scale(attribute_log_prob(tape, model, *disc, r),
                               cfg.lambda_disc);
      adv_val += term.value();
      l = tape.add(l, term);
    }
    total = total.defined() ? tape.add(total, l) : l;
  }
  total = tape.scale(total, 1.0 / static_cast<double>(batch.size()));
  tape.backward(total);
  opt.step(model.params(), cfg.lr);
  if (adversarial) check_frozen_clean(disc->params(), "discriminator");
  adv_accum += adv_val / static_cast<double>(batch.size());
  return total.value();
}

double disc_batch_step(GeneratorModel& model, Discriminator& disc,
                       const std::vector<EncodedRecord>& recs,
                       const std::vector<int>& batch, const TrainConfig& cfg,
                       AdamState& opt) {
  Tape tape;
  FreezeGuard guard(model.params());
  Tensor total;
  for (int i : batch) {
    Tensor lp = attribute_log_prob(tape, model, disc, recs[i]);
    total = total.defined() ? tape.add(total, lp) : lp;
  }
  total = tape.scale(total, -1.0 / static_cast<double>(batch.size()));
  tape.backward(total);
  opt.step(disc.params(), cfg.lr);
  check_frozen_clean(model.params(), "generator");
  return total.value();
}

TrainResult train_loop(GeneratorModel& model, Discriminator* disc,
                       const std::vector<EncodedRecord>& train,
                       const std::vector<EncodedRecord>& valid,
                       const TrainConfig& cfg, AdamState* gen_opt) {
  cfg.validate();
  if (cfg.lambda_disc > 0.0 && disc == nullptr)
    throw ContractError("adversarial training needs a discriminator");
  if (train.empty()) throw DomainError("training set is empty");
  if (cfg.max_epochs > 0 && valid.empty())
    throw DomainError("validation set is empty");
  const bool adversarial = disc != nullptr && cfg.lambda_disc > 0.0;

  TrainResult res;
  LoopState st;
  if (gen_opt) st.gen_opt = gen_opt;
  const int n = static_cast<int>(train.size());

  auto with_epoch_context = [&](const std::function<void()>& fn) {
    try {
      fn();
    } catch (const NumericError& e) {
      throw NumericError("generator epoch " + std::to_string(st.gen_epoch) +
                         ": " + e.what());
    }
  };

  auto run_disc_batches = [&](int count, std::vector<std::vector<int>>& pool,
                              std::size_t& cursor, double& loss_accum,
                              int& batches_done) {
    for (int z = 0; z < count; ++z) {
      if (cursor >= pool.size()) {
        Rng rng(Rng::mix({cfg.seed, kDiscShuffle, st.disc_phase++}));
        pool = shuffled_batches(n, cfg.batch_size, rng);
        cursor = 0;
      }
      loss_accum += disc_batch_step(model, *disc, train, pool[cursor++], cfg,
                                    st.disc_opt);
      ++batches_done;
    }
  };

  std::vector<std::vector<int>> disc_pool;
  std::size_t disc_cursor = 0;
  double pending_disc_loss = 0.0;
  int pending_disc_batches = 0;

  while (st.gen_epoch < cfg.max_epochs && !st.stop) {
    for (int x = 0; x < cfg.gen_units && st.gen_epoch < cfg.max_epochs && !st.stop;
         ++x) {
      EpochStats es;
      es.epoch = st.gen_epoch;
      es.disc_loss = pending_disc_batches > 0
                         ? pending_disc_loss / pending_disc_batches
                         : 0.0;
      pending_disc_loss = 0.0;
      pending_disc_batches = 0;

      Rng shuffle_rng(Rng::mix({cfg.seed, kGenShuffle,
                                static_cast<std::uint64_t>(st.gen_epoch)}));
      Rng drop_rng(Rng::mix({cfg.seed, kGenDrop,
                             static_cast<std::uint64_t>(st.gen_epoch)}));
      auto batches = shuffled_batches(n, cfg.batch_size, shuffle_rng);
      double train_sum = 0.0, adv_sum = 0.0;
      int gen_since_disc = 0;
      double inner_disc_loss = 0.0;
      int inner_disc_batches = 0;
      with_epoch_context([&] {
        for (const auto& b : batches) {
          train_sum += gen_batch_step(model, disc, train, b, cfg, adversarial,
                                      drop_rng, *st.gen_opt, adv_sum);
          if (adversarial && cfg.batch_granularity &&
              ++gen_since_disc >= cfg.gen_units) {
            gen_since_disc = 0;
            run_disc_batches(cfg.disc_units, disc_pool, disc_cursor,
                             inner_disc_loss, inner_disc_batches);
          }
        }
      });
      es.train_total = train_sum / static_cast<double>(batches.size());
      es.train_adv = adv_sum / static_cast<double>(batches.size());
      if (inner_disc_batches > 0)
        es.disc_loss = inner_disc_loss / inner_disc_batches;

      const double v = loss_breakdown(model, valid).total;
      if (!std::isfinite(v))
        throw NumericError("non-finite validation loss at epoch " +
                           std::to_string(st.gen_epoch));
      es.valid_total = v;
      res.history.push_back(es);
      ++st.gen_epoch;
      res.epochs_run = st.gen_epoch;

      if (v < st.best) {
        st.best = v;
        res.best_epoch = es.epoch;
        st.best_snap = model.params().snapshot();
        st.ticks = 0;
      } else if (++st.ticks >= cfg.patience) {
        st.stop = true;
        res.stopped_early = true;
      }
    }
    if (adversarial && !cfg.batch_granularity && !st.stop &&
        st.gen_epoch < cfg.max_epochs) {
      // One discriminator phase: disc_units full passes over the data.
      const int batches_per_pass = (n + cfg.batch_size - 1) / cfg.batch_size;
      with_epoch_context([&] {
        run_disc_batches(cfg.disc_units * batches_per_pass, disc_pool,
                         disc_cursor, pending_disc_loss, pending_disc_batches);
      });
    }
  }

  if (!st.best_snap.empty()) {
    model.params().restore(st.best_snap);
    res.best_valid = st.best;
  }

  if (!cfg.log_path.empty()) {
    std::ostringstream csv;
    csv << "epoch,train_total,train_adv,disc_loss,valid_total\n";
    for (const auto& e : res.history)
      csv << e.epoch << ',' << format_g9(e.train_total) << ','
          << format_g9(e.train_adv) << ',' << format_g9(e.disc_loss) << ','
          << format_g9(e.valid_total) << '\n';
    atomic_write(cfg.log_path, csv.str());
  }
  return res;
}

}  // namespace

TrainResult pretrain(GeneratorModel& model, Discriminator* disc,
                     const std::vector<EncodedRecord>& train,
                     const std::vector<EncodedRecord>& valid,
                     const TrainConfig& cfg, AdamState* gen_opt) {
  return train_loop(model, disc, train, valid, cfg, gen_opt);
}

TrainResult alternate_train(GeneratorModel& model, Discriminator& disc,
                            const std::vector<EncodedRecord>& train,
                            const std::vector<EncodedRecord>& valid,
                            const TrainConfig& cfg, AdamState* gen_opt) {
  return train_loop(model, &disc, train, valid, cfg, gen_opt);
}

double probe_accuracy(const GeneratorModel& model,
                      const std::vector<EncodedRecord>& probe_train,
                      const std::vector<EncodedRecord>& probe_heldout,
                      int n_classes, std::uint64_t seed,
                      const ProbeConfig& pc) {
  if (probe_train.empty() || probe_heldout.empty())
    throw DomainError("probe needs non-empty train and held-out sets");
  if (n_classes < 2) throw DomainError("probe needs at least two classes");

  const int dim = model.params().at("emb/user").cols();
  auto pack = [&](const std::vector<EncodedRecord>& recs, Tensor& x,
                  std::vector<int>& y) {
    std::vector<double> flat;
    flat.reserve(recs.size() * static_cast<std::size_t>(dim));
    y.reserve(recs.size());
    for (const auto& r : recs) {
      if (r.attr < 0 || r.attr >= n_classes)
        throw IndexError("probe attribute id out of range");
      const std::vector<double> v = repr_values(model, r);
      flat.insert(flat.end(), v.begin(), v.end());
      y.push_back(r.attr);
    }
    x = Tensor::from({static_cast<int>(recs.size()), dim}, std::move(flat));
  };
  Tensor x_tr, x_ho;
  std::vector<int> y_tr, y_ho;
  pack(probe_train, x_tr, y_tr);
  pack(probe_heldout, x_ho, y_ho);

  Discriminator clf = Discriminator::build(dim, pc.hidden, n_classes,
                                           Rng::mix({seed, kProbeInit}));
  AdamState opt;
  for (int epoch = 0; epoch < pc.epochs; ++epoch) {
    Tape tape;
    Tensor lp = clf.log_probs(tape, x_tr);
    Tensor loss = tape.scale(tape.mean(tape.gather_elements(lp, y_tr)), -1.0);
    tape.backward(loss);
    opt.step(clf.params(), pc.lr);
  }

  Tape tape;
  Tensor lp = clf.log_probs(tape, x_ho);
  int hits = 0;
  for (int i = 0; i < static_cast<int>(y_ho.size()); ++i) {
    int arg = 0;
    for (int c = 1; c < n_classes; ++c)
      if (lp.at(i, c) > lp.at(i, arg)) arg = c;
    if (arg == y_ho[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(y_ho.size());
}

void save_model_checkpoint(const std::filesystem::path& path,
                           const GeneratorModel& model,
                           const Discriminator* disc, const AdamState* opt,
                           std::uint64_t vocab_hash) {
  std::vector<std::pair<std::string, Tensor>> entries;
  for (const auto& [name, t] : model.params().items())
    entries.emplace_back("model/" + name, t);
  if (disc)
    for (const auto& [name, t] : disc->params().items())
      entries.emplace_back("disc/" + name, t);
  if (opt) {
    for (const auto& [name, mom] : opt->moments()) {
      entries.emplace_back(
          "opt/m/" + name,
          Tensor::from({static_cast<int>(mom.m.size())}, mom.m));
      entries.emplace_back(
          "opt/v/" + name,
          Tensor::from({static_cast<int>(mom.v.size())}, mom.v));
    }
    entries.emplace_back(
        "opt/step",
        Tensor::from({1}, {static_cast<double>(opt->step_count())}));
  }
  CheckpointMeta meta;
  meta.config_hash = model.fingerprint();
  meta.vocab_hash = vocab_hash;
  save_checkpoint(path, meta, entries);
}

GeneratorModel load_model_checkpoint(const std::filesystem::path& path,
                                     const ModelConfig& cfg, int vocab_size,
                                     int n_users, int n_items, int n_attrs,
                                     std::uint64_t vocab_hash,
                                     Discriminator* disc_out,
                                     AdamState* opt_out) {
  Checkpoint ckpt = load_checkpoint(path);
  require_hashes(ckpt, cfg.fingerprint(vocab_size, n_users, n_items, n_attrs),
                 vocab_hash);
  GeneratorModel model =
      GeneratorModel::build(cfg, vocab_size, n_users, n_items, n_attrs, 0);
  for (auto& [name, t] : model.params().items()) {
    const Tensor* src = ckpt.find("model/" + name);
    if (!src)
      throw ArtifactError(path.string() + ": missing entry model/" + name);
    if (src->shape() != t.shape())
      throw ArtifactError(path.string() + ": shape mismatch at model/" + name);
    t.copy_data_from(*src);
  }
  if (disc_out && ckpt.has("disc/w1")) {
    const Tensor& w1 = ckpt.at("disc/w1");
    const Tensor& w2 = ckpt.at("disc/w2");
    Discriminator d =
        Discriminator::build(w1.rows(), w1.cols(), w2.cols(), 0);
    for (auto& [name, t] : d.params().items())
      t.copy_data_from(ckpt.at("disc/" + name));
    *disc_out = d;
  }
  if (opt_out) {
    for (const auto& [name, t] : model.params().items()) {
      const Tensor* m = ckpt.find("opt/m/" + name);
      const Tensor* v = ckpt.find("opt/v/" + name);
      if (m && v) opt_out->restore_moments(name, m->data(), v->data());
    }
    if (const Tensor* step = ckpt.find("opt/step"))
      opt_out->set_step_count(
          static_cast<std::uint64_t>(std::llround(step->value())));
  }
  return model;
}

}  // namespace fairgen
