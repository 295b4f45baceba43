// SPDX-License-Identifier: Apache-2.0
#include "fairgen/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

namespace fairgen {

namespace {

constexpr std::uint64_t kInitStream = 0x494e4954ull;    // "INIT"
constexpr std::uint64_t kSampleStream = 0x534d504cull;  // "SMPL"
constexpr double kMaskedBias = -1e30;  // exp() underflows to exactly 0

std::string layer_key(int i, const char* tail) {
  return "layer" + std::to_string(i) + "/" + tail;
}

}  // namespace

const char* arch_name(Arch a) {
  return a == Arch::transformer ? "transformer" : "recurrent";
}

Arch arch_from_name(const std::string& name) {
  if (name == "transformer") return Arch::transformer;
  if (name == "recurrent") return Arch::recurrent;
  throw ConfigError("unknown architecture: " + name);
}

ModelConfig ModelConfig::paper(Arch arch) {
  ModelConfig cfg;
  cfg.arch = arch;
  return cfg;  // struct defaults are the full-size configuration
}

ModelConfig ModelConfig::desk(Arch arch) {
  ModelConfig cfg;
  cfg.arch = arch;
  cfg.emb = 64;
  cfg.ffn = 128;
  cfg.rnn_emb = 64;
  cfg.rnn_hidden = 64;
  cfg.attr_emb = 32;
  cfg.rating_hidden = 32;
  return cfg;
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) throw ConfigError(std::string(what) + " must be >= 1");
  };
  positive(max_len, "max_len");
  positive(rating_hidden, "rating_hidden");
  if (arch == Arch::transformer) {
    positive(emb, "emb");
    positive(ffn, "ffn");
    positive(layers, "layers");
    positive(heads, "heads");
    if (emb % heads != 0)
      throw ConfigError("emb must be divisible by heads");
    if (dropout < 0.0 || dropout >= 1.0)
      throw ConfigError("dropout must be in [0,1)");
  } else {
    positive(rnn_emb, "rnn_emb");
    positive(rnn_hidden, "rnn_hidden");
    if (use_attribute) positive(attr_emb, "attr_emb");
    if (rnn_dropout < 0.0 || rnn_dropout >= 1.0)
      throw ConfigError("rnn_dropout must be in [0,1)");
  }
}

std::uint64_t ModelConfig::fingerprint(int vocab, int users, int items,
                                       int attrs) const {
  // Without the attribute token the table is never built, so its size must
  // not distinguish configs (mirrors GeneratorModel construction).
  if (!use_attribute) attrs = 0;
  char buf[256];
  int n;
  if (arch == Arch::transformer) {
    n = std::snprintf(buf, sizeof buf,
                      "transformer;attr=%d;emb=%d;ffn=%d;layers=%d;heads=%d;"
                      "rh=%d;ml=%d;V=%d;U=%d;I=%d;A=%d",
                      use_attribute ? 1 : 0, emb, ffn, layers, heads,
                      rating_hidden, max_len, vocab, users, items, attrs);
  } else {
    n = std::snprintf(buf, sizeof buf,
                      "recurrent;attr=%d;emb=%d;hid=%d;aemb=%d;"
                      "rh=%d;ml=%d;V=%d;U=%d;I=%d;A=%d",
                      use_attribute ? 1 : 0, rnn_emb, rnn_hidden, attr_emb,
                      rating_hidden, max_len, vocab, users, items, attrs);
  }
  return Rng::fnv1a(buf, static_cast<std::size_t>(n));
}

EncodedRecord encode_record(const Dataset& ds, const Vocabulary& vocab,
                            const Record& r) {
  EncodedRecord e;
  auto u = ds.user_index.find(r.user);
  auto i = ds.item_index.find(r.item);
  if (u == ds.user_index.end()) throw DomainError("unknown user id: " + r.user);
  if (i == ds.item_index.end()) throw DomainError("unknown item id: " + r.item);
  e.user = u->second;
  e.item = i->second;
  e.attr = ds.attribute_space.index_of(r.attribute);
  e.words = vocab.encode(r.explanation);
  e.rating = r.rating;
  return e;
}

std::vector<EncodedRecord> encode_records(const Dataset& ds,
                                          const Vocabulary& vocab,
                                          const std::vector<int>& indices) {
  std::vector<EncodedRecord> out;
  out.reserve(indices.size());
  for (int idx : indices) {
    if (idx < 0 || idx >= static_cast<int>(ds.records.size()))
      throw IndexError("record index out of range");
    out.push_back(encode_record(ds, vocab, ds.records[idx]));
  }
  return out;
}

Tensor peter_mask(int n_special, int n_words) {
  if (n_special < 1 || n_words < 0)
    throw DomainError("peter_mask: need n_special >= 1, n_words >= 0");
  const int t = n_special + n_words;
  Tensor m = Tensor::zeros({t, t});
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < t; ++j) {
      const bool visible = j < n_special || (i >= n_special && j <= i);
      if (visible) m.set(i, j, 1.0);
    }
  return m;
}

GeneratorModel GeneratorModel::build(const ModelConfig& cfg, int vocab_size,
                                     int n_users, int n_items, int n_attrs,
                                     std::uint64_t seed) {
  cfg.validate();
  if (vocab_size < Vocabulary::kNumSpecials)
    throw ConfigError("vocab_size must cover the reserved tokens");
  if (n_users < 1 || n_items < 1)
    throw ConfigError("need at least one user and one item");
  if (cfg.use_attribute && n_attrs < 1)
    throw ConfigError("attribute-conditioned model needs n_attrs >= 1");

  GeneratorModel m;
  m.cfg_ = cfg;
  m.vocab_ = vocab_size;
  m.users_ = n_users;
  m.items_ = n_items;
  m.attrs_ = cfg.use_attribute ? n_attrs : 0;

  // Weight matrices and embedding tables draw uniform [-0.1, 0.1) values in
  // registration order; biases start at zero and norm gains at one, so they
  // do not consume draws.
  Rng rng(Rng::mix({seed, kInitStream}));
  auto weight = [&](const std::string& name, Shape shape) {
    m.params_.add(name, Tensor::uniform(std::move(shape), -0.1, 0.1, rng, true));
  };
  auto zeros = [&](const std::string& name, Shape shape) {
    m.params_.add(name, Tensor::zeros(std::move(shape), true));
  };
  auto ones = [&](const std::string& name, Shape shape) {
    m.params_.add(name, Tensor::full(std::move(shape), 1.0, true));
  };

  if (cfg.arch == Arch::transformer) {
    const int d = cfg.emb;
    weight("emb/word", {vocab_size, d});
    weight("emb/user", {n_users, d});
    weight("emb/item", {n_items, d});
    if (cfg.use_attribute) weight("emb/attr", {n_attrs, d});
    weight("pos/special", {cfg.use_attribute ? 3 : 2, d});
    weight("pos/word", {cfg.max_len + 1, d});  // begin marker + words
    for (int i = 0; i < cfg.layers; ++i) {
      weight(layer_key(i, "attn/wq"), {d, d});
      zeros(layer_key(i, "attn/bq"), {d});
      weight(layer_key(i, "attn/wk"), {d, d});
      zeros(layer_key(i, "attn/bk"), {d});
      weight(layer_key(i, "attn/wv"), {d, d});
      zeros(layer_key(i, "attn/bv"), {d});
      weight(layer_key(i, "attn/wo"), {d, d});
      zeros(layer_key(i, "attn/bo"), {d});
      ones(layer_key(i, "ln1/g"), {d});
      zeros(layer_key(i, "ln1/b"), {d});
      weight(layer_key(i, "ffn/w1"), {d, cfg.ffn});
      zeros(layer_key(i, "ffn/b1"), {cfg.ffn});
      weight(layer_key(i, "ffn/w2"), {cfg.ffn, d});
      zeros(layer_key(i, "ffn/b2"), {d});
      ones(layer_key(i, "ln2/g"), {d});
      zeros(layer_key(i, "ln2/b"), {d});
    }
    weight("out/w", {d, vocab_size});
    zeros("out/b", {vocab_size});
    weight("rate/w1", {d, cfg.rating_hidden});
    zeros("rate/b1", {cfg.rating_hidden});
    weight("rate/w2", {cfg.rating_hidden, 1});
    zeros("rate/b2", {1});
    weight("ctx/w", {d, vocab_size});
    zeros("ctx/b", {vocab_size});
  } else {
    const int d = cfg.rnn_emb, h = cfg.rnn_hidden;
    const int z = (cfg.use_attribute ? cfg.attr_emb : 0) + 2 * d;
    weight("emb/word", {vocab_size, d});
    weight("emb/user", {n_users, d});
    weight("emb/item", {n_items, d});
    if (cfg.use_attribute) weight("emb/attr", {n_attrs, cfg.attr_emb});
    weight("rnn/h0/w", {z, h});
    zeros("rnn/h0/b", {h});
    weight("rnn/xr", {d, h});
    weight("rnn/hr", {h, h});
    zeros("rnn/br", {h});
    weight("rnn/xz", {d, h});
    weight("rnn/hz", {h, h});
    zeros("rnn/bz", {h});
    weight("rnn/xn", {d, h});
    weight("rnn/hn", {h, h});
    zeros("rnn/bxn", {h});
    zeros("rnn/bhn", {h});
    weight("out/w", {h, vocab_size});
    zeros("out/b", {vocab_size});
    weight("rate/w1", {z, cfg.rating_hidden});
    zeros("rate/b1", {cfg.rating_hidden});
    weight("rate/w2", {cfg.rating_hidden, 1});
    zeros("rate/b2", {1});
    weight("ctx/w", {z, vocab_size});
    zeros("ctx/b", {vocab_size});
  }
  return m;
}

void GeneratorModel::disable_attr_attention() {
  if (!cfg_.use_attribute)
    throw DomainError("model has no attribute position to disable");
  if (cfg_.arch != Arch::transformer)
    throw DomainError("attention masking applies to the transformer only");
  attr_attention_disabled_ = true;
}

GeneratorModel GeneratorModel::clone() const {
  GeneratorModel m;
  m.cfg_ = cfg_;
  m.vocab_ = vocab_;
  m.users_ = users_;
  m.items_ = items_;
  m.attrs_ = attrs_;
  m.attr_attention_disabled_ = attr_attention_disabled_;
  for (const auto& [name, t] : params_.items()) {
    Tensor copy = t.clone();
    copy.set_requires_grad(t.requires_grad());
    m.params_.add(name, copy);
  }
  return m;
}

int GeneratorModel::resolve_attr(const EncodedRecord& rec,
                                 const ForwardOptions& opt) const {
  if (!cfg_.use_attribute) return -1;
  const int a = opt.attr_override >= 0 ? opt.attr_override : rec.attr;
  if (a < 0 || a >= attrs_)
    throw IndexError("attribute id out of range: " + std::to_string(a));
  return a;
}

ModelOutput GeneratorModel::forward(Tape& tape, const EncodedRecord& rec,
                                    const ForwardOptions& opt) const {
  if (static_cast<int>(rec.words.size()) > cfg_.max_len)
    throw ContractError("explanation longer than max_len");
  if (rec.user < 0 || rec.user >= users_)
    throw IndexError("user id out of range");
  if (rec.item < 0 || rec.item >= items_)
    throw IndexError("item id out of range");
  for (int w : rec.words)
    if (w < 0 || w >= vocab_) throw IndexError("word id out of range");
  if (opt.training && opt.dropout_rng == nullptr)
    throw ContractError("training forward needs a dropout rng");
  return cfg_.arch == Arch::transformer ? forward_transformer(tape, rec, opt)
                                        : forward_recurrent(tape, rec, opt);
}

ModelOutput GeneratorModel::forward_transformer(Tape& tape,
                                                const EncodedRecord& rec,
                                                const ForwardOptions& opt) const {
  const auto& P = params_;
  const int attr = resolve_attr(rec, opt);
  const int ns = cfg_.use_attribute ? 3 : 2;
  std::vector<int> words_in;
  words_in.reserve(rec.words.size() + 1);
  words_in.push_back(Vocabulary::kBos);
  words_in.insert(words_in.end(), rec.words.begin(), rec.words.end());
  const int nw = static_cast<int>(words_in.size());
  const int t_total = ns + nw;

  Tensor user_e = tape.gather_rows(P.at("emb/user"), {rec.user});
  Tensor item_e = tape.gather_rows(P.at("emb/item"), {rec.item});
  Tensor specials = user_e;
  if (cfg_.use_attribute) {
    Tensor attr_e = tape.gather_rows(P.at("emb/attr"), {attr});
    specials = tape.concat_rows(attr_e, user_e);
  }
  specials = tape.concat_rows(specials, item_e);
  Tensor words_e = tape.gather_rows(P.at("emb/word"), words_in);
  Tensor x = tape.concat_rows(specials, words_e);

  std::vector<int> sp_pos(ns), w_pos(nw);
  for (int i = 0; i < ns; ++i) sp_pos[i] = i;
  for (int i = 0; i < nw; ++i) w_pos[i] = i;
  Tensor pos = tape.concat_rows(tape.gather_rows(P.at("pos/special"), sp_pos),
                                tape.gather_rows(P.at("pos/word"), w_pos));
  x = tape.add(x, pos);
  if (opt.training)
    x = tape.dropout(x, cfg_.dropout, *opt.dropout_rng, true);

  // Additive attention bias: 0 where visible, a huge negative constant where
  // hidden so the softmax weight underflows to exactly zero.
  Tensor vis = peter_mask(ns, nw);  // word positions include the begin marker
  Tensor bias = Tensor::zeros({t_total, t_total});
  for (int i = 0; i < t_total; ++i)
    for (int j = 0; j < t_total; ++j) {
      bool visible = vis.at(i, j) > 0.5;
      if (attr_attention_disabled_ && cfg_.use_attribute && j == 0 && i != 0)
        visible = false;
      if (!visible) bias.set(i, j, kMaskedBias);
    }

  const int d = cfg_.emb;
  const int dh = d / cfg_.heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int l = 0; l < cfg_.layers; ++l) {
    Tensor q = tape.add_row(tape.matmul(x, P.at(layer_key(l, "attn/wq"))),
                            P.at(layer_key(l, "attn/bq")));
    Tensor k = tape.add_row(tape.matmul(x, P.at(layer_key(l, "attn/wk"))),
                            P.at(layer_key(l, "attn/bk")));
    Tensor v = tape.add_row(tape.matmul(x, P.at(layer_key(l, "attn/wv"))),
                            P.at(layer_key(l, "attn/bv")));
    Tensor heads_out;
    for (int h = 0; h < cfg_.heads; ++h) {
      Tensor qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
      Tensor kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
      Tensor vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
      Tensor scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt_dh);
      scores = tape.add(scores, bias);
      Tensor attn = tape.softmax(scores, -1);
      Tensor oh = tape.matmul(attn, vh);
      heads_out = h == 0 ? oh : tape.concat_cols(heads_out, oh);
    }
    Tensor o = tape.add_row(tape.matmul(heads_out, P.at(layer_key(l, "attn/wo"))),
                            P.at(layer_key(l, "attn/bo")));
    if (opt.training)
      o = tape.dropout(o, cfg_.dropout, *opt.dropout_rng, true);
    x = tape.layer_norm(tape.add(x, o), P.at(layer_key(l, "ln1/g")),
                        P.at(layer_key(l, "ln1/b")));
    Tensor f = tape.add_row(
        tape.matmul(tape.relu(tape.add_row(tape.matmul(x, P.at(layer_key(l, "ffn/w1"))),
                                           P.at(layer_key(l, "ffn/b1")))),
                    P.at(layer_key(l, "ffn/w2"))),
        P.at(layer_key(l, "ffn/b2")));
    if (opt.training)
      f = tape.dropout(f, cfg_.dropout, *opt.dropout_rng, true);
    x = tape.layer_norm(tape.add(x, f), P.at(layer_key(l, "ln2/g")),
                        P.at(layer_key(l, "ln2/b")));
  }

  ModelOutput out;
  Tensor words_x = tape.slice_rows(x, ns, t_total);
  out.word_logits = tape.add_row(tape.matmul(words_x, P.at("out/w")), P.at("out/b"));
  Tensor user_x = tape.slice_rows(x, ns - 2, ns - 1);
  Tensor hidden = tape.tanh(
      tape.add_row(tape.matmul(user_x, P.at("rate/w1")), P.at("rate/b1")));
  out.rating = tape.reshape(
      tape.add_row(tape.matmul(hidden, P.at("rate/w2")), P.at("rate/b2")), {1});
  Tensor item_x = tape.slice_rows(x, ns - 1, ns);
  out.context_logits = tape.add_row(tape.matmul(item_x, P.at("ctx/w")), P.at("ctx/b"));
  return out;
}

ModelOutput GeneratorModel::forward_recurrent(Tape& tape,
                                              const EncodedRecord& rec,
                                              const ForwardOptions& opt) const {
  const auto& P = params_;
  const int attr = resolve_attr(rec, opt);

  Tensor user_e = tape.gather_rows(P.at("emb/user"), {rec.user});
  Tensor item_e = tape.gather_rows(P.at("emb/item"), {rec.item});
  Tensor z = tape.concat_cols(user_e, item_e);
  if (cfg_.use_attribute) {
    Tensor attr_e = tape.gather_rows(P.at("emb/attr"), {attr});
    z = tape.concat_cols(attr_e, z);
  }

  ModelOutput out;
  Tensor rate_h = tape.tanh(
      tape.add_row(tape.matmul(z, P.at("rate/w1")), P.at("rate/b1")));
  out.rating = tape.reshape(
      tape.add_row(tape.matmul(rate_h, P.at("rate/w2")), P.at("rate/b2")), {1});
  out.context_logits = tape.add_row(tape.matmul(z, P.at("ctx/w")), P.at("ctx/b"));

  Tensor h = tape.tanh(tape.add_row(tape.matmul(z, P.at("rnn/h0/w")),
                                    P.at("rnn/h0/b")));

  std::vector<int> words_in;
  words_in.reserve(rec.words.size() + 1);
  words_in.push_back(Vocabulary::kBos);
  words_in.insert(words_in.end(), rec.words.begin(), rec.words.end());
  Tensor xs = tape.gather_rows(P.at("emb/word"), words_in);
  if (opt.training)
    xs = tape.dropout(xs, cfg_.rnn_dropout, *opt.dropout_rng, true);

  Tensor logits;
  const int nw = static_cast<int>(words_in.size());
  for (int t = 0; t < nw; ++t) {
    Tensor xt = tape.slice_rows(xs, t, t + 1);
    Tensor r = tape.sigmoid(
        tape.add(tape.add_row(tape.matmul(xt, P.at("rnn/xr")), P.at("rnn/br")),
                 tape.matmul(h, P.at("rnn/hr"))));
    Tensor zg = tape.sigmoid(
        tape.add(tape.add_row(tape.matmul(xt, P.at("rnn/xz")), P.at("rnn/bz")),
                 tape.matmul(h, P.at("rnn/hz"))));
    Tensor cand = tape.tanh(tape.add(
        tape.add_row(tape.matmul(xt, P.at("rnn/xn")), P.at("rnn/bxn")),
        tape.mul(r, tape.add_row(tape.matmul(h, P.at("rnn/hn")),
                                 P.at("rnn/bhn")))));
    // h' = (1 - zg) * cand + zg * h
    h = tape.add(tape.sub(cand, tape.mul(zg, cand)), tape.mul(zg, h));
    Tensor ho = h;
    if (opt.training)
      ho = tape.dropout(ho, cfg_.rnn_dropout, *opt.dropout_rng, true);
    Tensor row = tape.add_row(tape.matmul(ho, P.at("out/w")), P.at("out/b"));
    logits = t == 0 ? row : tape.concat_rows(logits, row);
  }
  out.word_logits = logits;
  return out;
}

std::vector<ModelOutput> forward_logits(const GeneratorModel& model,
                                        const std::vector<EncodedRecord>& recs) {
  std::vector<ModelOutput> out;
  out.reserve(recs.size());
  for (const auto& r : recs) {
    Tape tape;
    out.push_back(model.forward(tape, r));
  }
  return out;
}

EncodedRecord counterfactual_view(const GeneratorModel& model,
                                  const EncodedRecord& rec, int attr_value) {
  if (!model.has_attribute())
    throw DomainError("counterfactual_view: model has no attribute table");
  if (attr_value < 0 || attr_value >= model.n_attrs())
    throw DomainError("counterfactual_view: attribute value out of range");
  EncodedRecord cf = rec;
  cf.attr = attr_value;
  return cf;
}

Tensor nll_loss(Tape& tape, const ModelOutput& out, const EncodedRecord& rec) {
  std::vector<int> targets = rec.words;
  targets.push_back(Vocabulary::kEos);
  if (out.word_logits.rows() != static_cast<int>(targets.size()))
    throw ShapeError("nll_loss: logits rows do not match target count");
  Tensor lp = tape.log_softmax(out.word_logits, -1);
  return tape.scale(tape.mean(tape.gather_elements(lp, targets)), -1.0);
}

Tensor context_loss(Tape& tape, const ModelOutput& out,
                    const EncodedRecord& rec) {
  if (rec.words.empty())
    throw ContractError("context_loss: record has no explanation words");
  Tensor lp = tape.log_softmax(out.context_logits, -1);
  return tape.scale(tape.mean(tape.gather_cols(lp, rec.words)), -1.0);
}

Tensor rating_loss(Tape& tape, const ModelOutput& out,
                   const EncodedRecord& rec) {
  return tape.squared_error(out.rating, Tensor::from({1}, {rec.rating}));
}

LossBreakdown loss_breakdown(const GeneratorModel& model,
                             const std::vector<EncodedRecord>& recs) {
  if (recs.empty()) throw DomainError("loss_breakdown: empty record list");
  LossBreakdown b;
  for (const auto& r : recs) {
    Tape tape;
    ModelOutput out = model.forward(tape, r);
    b.nll += nll_loss(tape, out, r).value();
    b.context += context_loss(tape, out, r).value();
    b.rating_mse += rating_loss(tape, out, r).value();
  }
  const double n = static_cast<double>(recs.size());
  b.nll /= n;
  b.context /= n;
  b.rating_mse /= n;
  b.total = b.nll + b.context + b.rating_mse;
  return b;
}

std::vector<int> topk_candidates(const std::vector<double>& logits, int k,
                                 bool allow_eos) {
  if (k < 1) throw DomainError("top-k sampling needs k >= 1");
  std::vector<int> ids;
  ids.reserve(logits.size());
  for (int i = 0; i < static_cast<int>(logits.size()); ++i) {
    if (i == Vocabulary::kBos || i == Vocabulary::kUnk || i == Vocabulary::kPad)
      continue;
    if (i == Vocabulary::kEos && !allow_eos) continue;
    if (!std::isfinite(logits[i]))
      throw NumericError("non-finite logit during decoding");
    ids.push_back(i);
  }
  if (ids.empty()) throw ContractError("no candidate tokens to sample from");
  const int kk = std::min<int>(k, static_cast<int>(ids.size()));
  std::partial_sort(ids.begin(), ids.begin() + kk, ids.end(),
                    [&](int a, int b) {
                      if (logits[a] != logits[b]) return logits[a] > logits[b];
                      return a < b;
                    });
  ids.resize(kk);
  return ids;
}

namespace {

std::vector<double> logits_row(const Tensor& logits, int row) {
  const int v = logits.cols();
  std::vector<double> out(v);
  for (int j = 0; j < v; ++j) out[j] = logits.at(row, j);
  return out;
}

}  // namespace

SampleResult sample(const GeneratorModel& model, const EncodedRecord& rec,
                    const DecodeConfig& dc, std::uint64_t seed,
                    int attr_override) {
  if (dc.max_len < 1) throw DomainError("decode max_len must be >= 1");
  if (dc.top_k < 1) throw DomainError("decode top_k must be >= 1");
  Rng rng(Rng::mix({seed, kSampleStream}));
  EncodedRecord prefix = rec;
  prefix.words.clear();
  ForwardOptions opt;
  opt.attr_override = attr_override;

  SampleResult res;
  for (int t = 0; t < dc.max_len; ++t) {
    Tape tape;
    ModelOutput out = model.forward(tape, prefix, opt);
    const std::vector<double> row = logits_row(out.word_logits, t);
    const std::vector<int> cands = topk_candidates(row, dc.top_k, t > 0);
    double mx = row[cands[0]];
    for (int c : cands) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (int c : cands) z += std::exp(row[c] - mx);
    const double u = rng.uniform();
    int chosen = cands.back();
    double acc = 0.0;
    for (int c : cands) {
      acc += std::exp(row[c] - mx) / z;
      if (u < acc) {
        chosen = c;
        break;
      }
    }
    res.logprob += (row[chosen] - mx) - std::log(z);
    if (chosen == Vocabulary::kEos) {
      res.hit_eos = true;
      break;
    }
    prefix.words.push_back(chosen);
    res.ids.push_back(chosen);
  }
  return res;
}

Tensor sequence_logprob(Tape& tape, const GeneratorModel& model,
                        const EncodedRecord& rec, const SampleResult& sr,
                        const DecodeConfig& dc, int attr_override) {
  const int n_steps = static_cast<int>(sr.ids.size()) + (sr.hit_eos ? 1 : 0);
  if (n_steps < 1) throw ContractError("sequence_logprob: empty sample");
  EncodedRecord full = rec;
  full.words = sr.ids;
  ForwardOptions opt;
  opt.attr_override = attr_override;
  ModelOutput out = model.forward(tape, full, opt);

  Tensor total;
  for (int t = 0; t < n_steps; ++t) {
    const int realized =
        t < static_cast<int>(sr.ids.size()) ? sr.ids[t] : Vocabulary::kEos;
    const std::vector<double> raw = logits_row(out.word_logits, t);
    const std::vector<int> cands = topk_candidates(raw, dc.top_k, t > 0);
    int idx = -1;
    for (int i = 0; i < static_cast<int>(cands.size()); ++i)
      if (cands[i] == realized) {
        idx = i;
        break;
      }
    if (idx < 0)
      throw ContractError("realized token fell outside the top-k candidates");
    Tensor row = tape.slice_rows(out.word_logits, t, t + 1);
    Tensor sel = tape.gather_cols(row, cands);
    Tensor lp = tape.log_softmax(sel, -1);
    Tensor term = tape.pick(lp, idx);
    total = t == 0 ? term : tape.add(total, term);
  }
  return total;
}

}  // namespace fairgen
