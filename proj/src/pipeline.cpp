// SPDX-License-Identifier: Apache-2.0
#include "fairgen/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "fairgen/io.hpp"
#include "fairgen/rng.hpp"

namespace fairgen {

namespace {

constexpr std::uint64_t kSynthStream = 0x53594e54ull;  // "SYNT"
constexpr std::uint64_t kSplitStream = 0x53504c54ull;  // "SPLT"
constexpr std::uint64_t kModelInit = 0x4d494e49ull;    // "MINI"
constexpr std::uint64_t kDiscInit = 0x44495343ull;     // "DISC"
constexpr std::uint64_t kNattrSeed = 0x4e415454ull;    // "NATT"

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': not a number: '" + value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    if (v < -2147483648LL || v > 2147483647LL)
      throw std::out_of_range(value);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': not an integer: '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': not an unsigned integer: '" +
                      value + "'");
  }
}

std::vector<double> parse_double_list(const std::string& key,
                                      const std::string& value) {
  std::vector<double> out;
  for (const std::string& part : split_on(value, ',')) {
    const std::string t = trim(part);
    if (t.empty())
      throw ConfigError("key '" + key + "': empty list entry in '" + value +
                        "'");
    out.push_back(parse_double(key, t));
  }
  return out;
}

std::unordered_set<std::string> as_set(const std::vector<std::string>& v) {
  return {v.begin(), v.end()};
}

}  // namespace

BaselinePlan baseline_plan(const std::string& name) {
  BaselinePlan p;
  if (name == "raw") return p;
  if (name == "attr") {
    p.use_attribute = p.counterfactual_eval = true;
    return p;
  }
  if (name == "adv") {
    p.discriminator = true;
    return p;
  }
  if (name == "norm") {
    p.norm_data = true;
    return p;
  }
  if (name == "nattr") {
    p.use_attribute = p.nattr_eval = true;
    return p;
  }
  if (name == "coffee") {
    p.use_attribute = p.discriminator = p.counterfactual_eval = true;
    return p;
  }
  throw ConfigError("unknown baseline '" + name +
                    "' (raw|attr|adv|norm|nattr|coffee)");
}

void RunConfig::validate() const {
  (void)baseline_plan(baseline);
  (void)arch_from_name(arch);
  if (measure != "L" && measure != "F" && measure != "LF")
    throw ConfigError("measure must be L, F, or LF");
  if (alternation != "epoch" && alternation != "batch")
    throw ConfigError("alternation must be 'epoch' or 'batch'");
  if (vocab_size <= Vocabulary::kNumSpecials)
    throw ConfigError("vocab_size must exceed the special tokens");
  double rsum = 0.0;
  for (double r : ratios) {
    if (r < 0.0 || !std::isfinite(r))
      throw ConfigError("split ratios must be non-negative");
    rsum += r;
  }
  if (std::abs(rsum - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1");
  if (data_dir.empty() || out_dir.empty())
    throw ConfigError("data_dir and out_dir must be set");
  if (max_epochs < 0 || ft_epochs < 0)
    throw ConfigError("epoch counts must be >= 0");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0) || !(ft_lr > 0.0))
    throw ConfigError("learning rates must be positive");
  if (lambda_disc < 0.0 || lambda < 0.0)
    throw ConfigError("loss weights must be >= 0");
  if (eta < 0.0 || eta > 1.0) throw ConfigError("eta must be in [0,1]");
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (disc_hidden < 1 || gen_units < 1 || disc_units < 1)
    throw ConfigError("adversarial sizes must be >= 1");
  if (norm_threshold <= 0.0 || norm_threshold >= 1.0)
    throw ConfigError("norm_threshold must lie in (0,1)");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (lambdas.empty()) throw ConfigError("lambdas must not be empty");
  for (double l : lambdas)
    if (l < 0.0 || !std::isfinite(l))
      throw ConfigError("lambdas must be finite and >= 0");
  model_config().validate();
  synthesis_spec().validate();
}

ModelConfig RunConfig::model_config() const {
  ModelConfig mc;
  mc.arch = arch_from_name(arch);
  mc.use_attribute = plan().use_attribute;
  mc.emb = emb_dim;
  mc.ffn = ffn_dim;
  mc.layers = n_layers;
  mc.heads = n_heads;
  mc.dropout = dropout;
  mc.rnn_emb = rnn_emb_dim;
  mc.rnn_hidden = rnn_hidden_dim;
  mc.attr_emb = attr_emb_dim;
  mc.rnn_dropout = rnn_dropout;
  mc.rating_hidden = rating_hidden_dim;
  mc.max_len = max_len;
  return mc;
}

SynthesisSpec RunConfig::synthesis_spec() const {
  SynthesisSpec spec = SynthesisSpec::defaults();
  spec.attribute_name = attribute;
  spec.n_users = n_users;
  spec.n_items = n_items;
  spec.n_records = n_records;
  spec.max_len = max_len;
  spec.rating_mean = rating_mean;
  spec.rating_sd = rating_sd;
  if (!groups.empty()) {
    spec.groups.clear();
    for (const std::string& part : split_on(groups, ',')) {
      const auto fields = split_on(trim(part), ':');
      if (fields.size() != 4)
        throw ConfigError("key 'groups': expected value:prob:mean_len:"
                          "mean_features, got '" + part + "'");
      GroupProfile g;
      g.value = trim(fields[0]);
      if (g.value.empty())
        throw ConfigError("key 'groups': empty group value in '" + part + "'");
      g.prob = parse_double("groups", trim(fields[1]));
      g.mean_len = parse_double("groups", trim(fields[2]));
      g.mean_features = parse_double("groups", trim(fields[3]));
      spec.groups.push_back(std::move(g));
    }
  }
  return spec;
}

RunConfig parse_run_config_text(const std::string& text,
                                const std::string& where) {
  RunConfig cfg;
  std::unordered_set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string at = where + ": line " + std::to_string(ln);

    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(at + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(at + ": empty key");
    if (value.empty()) throw ConfigError(at + ": key '" + key + "' has no value");
    if (!seen.insert(key).second)
      throw ConfigError(at + ": key '" + key + "' set twice");

    if (key == "attribute") cfg.attribute = value;
    else if (key == "groups") cfg.groups = value;
    else if (key == "n_users") cfg.n_users = parse_int(key, value);
    else if (key == "n_items") cfg.n_items = parse_int(key, value);
    else if (key == "n_records") cfg.n_records = parse_int(key, value);
    else if (key == "rating_mean") cfg.rating_mean = parse_double(key, value);
    else if (key == "rating_sd") cfg.rating_sd = parse_double(key, value);
    else if (key == "vocab_size") cfg.vocab_size = parse_int(key, value);
    else if (key == "train_ratio") cfg.ratios[0] = parse_double(key, value);
    else if (key == "valid_ratio") cfg.ratios[1] = parse_double(key, value);
    else if (key == "test_ratio") cfg.ratios[2] = parse_double(key, value);
    else if (key == "data_dir") cfg.data_dir = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "checkpoint") cfg.checkpoint = value;
    else if (key == "arch") cfg.arch = value;
    else if (key == "baseline") cfg.baseline = value;
    else if (key == "measure") cfg.measure = value;
    else if (key == "max_len") cfg.max_len = parse_int(key, value);
    else if (key == "emb_dim") cfg.emb_dim = parse_int(key, value);
    else if (key == "ffn_dim") cfg.ffn_dim = parse_int(key, value);
    else if (key == "n_layers") cfg.n_layers = parse_int(key, value);
    else if (key == "n_heads") cfg.n_heads = parse_int(key, value);
    else if (key == "dropout") cfg.dropout = parse_double(key, value);
    else if (key == "rnn_emb_dim") cfg.rnn_emb_dim = parse_int(key, value);
    else if (key == "rnn_hidden_dim") cfg.rnn_hidden_dim = parse_int(key, value);
    else if (key == "attr_emb_dim") cfg.attr_emb_dim = parse_int(key, value);
    else if (key == "rnn_dropout") cfg.rnn_dropout = parse_double(key, value);
    else if (key == "rating_hidden_dim")
      cfg.rating_hidden_dim = parse_int(key, value);
    else if (key == "max_epochs") cfg.max_epochs = parse_int(key, value);
    else if (key == "patience") cfg.patience = parse_int(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_int(key, value);
    else if (key == "lr") cfg.lr = parse_double(key, value);
    else if (key == "lambda_disc") cfg.lambda_disc = parse_double(key, value);
    else if (key == "disc_hidden") cfg.disc_hidden = parse_int(key, value);
    else if (key == "gen_units") cfg.gen_units = parse_int(key, value);
    else if (key == "disc_units") cfg.disc_units = parse_int(key, value);
    else if (key == "alternation") cfg.alternation = value;
    else if (key == "ft_epochs") cfg.ft_epochs = parse_int(key, value);
    else if (key == "ft_lr") cfg.ft_lr = parse_double(key, value);
    else if (key == "lambda") cfg.lambda = parse_double(key, value);
    else if (key == "eta") cfg.eta = parse_double(key, value);
    else if (key == "n_samples") cfg.n_samples = parse_int(key, value);
    else if (key == "top_k") cfg.top_k = parse_int(key, value);
    else if (key == "lambdas") cfg.lambdas = parse_double_list(key, value);
    else if (key == "norm_threshold")
      cfg.norm_threshold = parse_double(key, value);
    else if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "threads") cfg.threads = parse_int(key, value);
    else throw ConfigError(at + ": unknown key '" + key + "'");
  }
  return cfg;
}

RunConfig parse_run_config(const std::filesystem::path& path) {
  return parse_run_config_text(read_file(path), path.string());
}

QualityOracle resolve_oracle(const std::string& measure,
                             const std::vector<std::string>& lexicon) {
  if (measure == "L") return QualityOracle::length();
  if (measure == "F") return QualityOracle::feature_count(as_set(lexicon));
  if (measure == "LF") return QualityOracle::composite(as_set(lexicon));
  throw ConfigError("measure must be L, F, or LF");
}

PipelineData load_pipeline_data(const RunConfig& cfg) {
  const SynthesisSpec spec = cfg.synthesis_spec();
  AttributeSpace space;
  space.name = spec.attribute_name;
  for (const GroupProfile& g : spec.groups) space.values.push_back(g.value);

  PipelineData data;
  data.dataset = load_dataset(cfg.dataset_path(), space);
  split(data.dataset, cfg.ratios, Rng::mix({cfg.seed, kSplitStream}));
  data.lexicon = load_lexicon(cfg.lexicon_path());

  // the train split as records, gap-trimmed when the baseline asks for it
  std::vector<Record> train_records;
  for (int i : data.dataset.train_idx)
    train_records.push_back(data.dataset.records[i]);
  if (cfg.plan().norm_data) {
    NormSpec norm;
    norm.oracle = resolve_oracle(cfg.measure, data.lexicon);
    norm.threshold = cfg.norm_threshold;
    NormResult res = norm_preprocess(train_records, space, norm);
    data.norm_removed = static_cast<int>(res.removed.size());
    train_records = std::move(res.records);
  }

  std::vector<std::vector<std::string>> streams;
  for (const Record& r : train_records) streams.push_back(r.explanation);
  data.vocab = build_vocab(streams, cfg.vocab_size);
  data.vocab.set_feature_lexicon(data.lexicon);

  for (const Record& r : train_records)
    data.train.push_back(encode_record(data.dataset, data.vocab, r));
  data.valid = encode_records(data.dataset, data.vocab, data.dataset.valid_idx);
  data.test = encode_records(data.dataset, data.vocab, data.dataset.test_idx);
  return data;
}

void run_corpus(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const SynthesisSpec spec = cfg.synthesis_spec();
  Dataset ds = synthesize(spec, Rng::mix({cfg.seed, kSynthStream}));
  split(ds, cfg.ratios, Rng::mix({cfg.seed, kSplitStream}));

  std::filesystem::create_directories(cfg.data_dir);
  save_dataset(ds, cfg.dataset_path());
  save_lexicon(spec.features, cfg.lexicon_path());

  log << "wrote " << ds.records.size() << " records to "
      << cfg.dataset_path().string() << " (train " << ds.train_idx.size()
      << ", valid " << ds.valid_idx.size() << ", test " << ds.test_idx.size()
      << ")\n";
  const auto groups = summarize_groups(ds, as_set(spec.features));
  double lo_len = 0.0, hi_len = 0.0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const GroupSummary& g = groups[i];
    log << "group " << g.value << ": " << g.n_records << " records, mean length "
        << format_g9(g.mean_len) << ", mean features "
        << format_g9(g.mean_feat) << "\n";
    lo_len = i == 0 ? g.mean_len : std::min(lo_len, g.mean_len);
    hi_len = i == 0 ? g.mean_len : std::max(hi_len, g.mean_len);
  }
  log << "ground-truth length gap: " << format_g9(hi_len - lo_len) << "\n";
}

void run_pretrain(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const BaselinePlan plan = cfg.plan();
  PipelineData data = load_pipeline_data(cfg);
  if (data.norm_removed > 0)
    log << "norm preprocessing removed " << data.norm_removed
        << " train records\n";

  const ModelConfig mc = cfg.model_config();
  const Dataset& ds = data.dataset;
  std::filesystem::create_directories(cfg.out_dir);

  GeneratorModel model;
  Discriminator disc;
  AdamState opt;
  const bool resume = !cfg.checkpoint.empty();
  if (resume) {
    model = load_model_checkpoint(cfg.checkpoint, mc, data.vocab.size(),
                                  ds.n_users(), ds.n_items(),
                                  ds.attribute_space.size(),
                                  data.vocab.fingerprint(),
                                  plan.discriminator ? &disc : nullptr, &opt);
    log << "resumed from " << cfg.checkpoint.string() << " at step "
        << opt.step_count() << "\n";
  } else {
    model = GeneratorModel::build(mc, data.vocab.size(), ds.n_users(),
                                  ds.n_items(), ds.attribute_space.size(),
                                  Rng::mix({cfg.seed, kModelInit}));
  }

  TrainConfig tc;
  tc.max_epochs = cfg.max_epochs;
  tc.patience = cfg.patience;
  tc.batch_size = cfg.batch_size;
  tc.lr = cfg.lr;
  tc.lambda_disc = plan.discriminator ? cfg.lambda_disc : 0.0;
  tc.gen_units = cfg.gen_units;
  tc.disc_units = cfg.disc_units;
  tc.batch_granularity = cfg.alternation == "batch";
  tc.seed = cfg.seed;
  tc.log_path = cfg.out_dir / "pretrain_log.csv";

  Discriminator* disc_ptr = nullptr;
  if (plan.discriminator) {
    if (disc.input_dim() == 0) {
      const int repr = mc.arch == Arch::transformer ? mc.emb : mc.rnn_emb;
      disc = Discriminator::build(repr, cfg.disc_hidden,
                                  ds.attribute_space.size(),
                                  Rng::mix({cfg.seed, kDiscInit}));
    }
    disc_ptr = &disc;
  }

  TrainResult res = pretrain(model, disc_ptr, data.train, data.valid, tc, &opt);
  save_model_checkpoint(cfg.pretrain_ckpt(), model, disc_ptr, &opt,
                        data.vocab.fingerprint());

  log << "pretrained " << cfg.baseline << "/" << cfg.arch << " for "
      << res.epochs_run << " epochs (best " << res.best_epoch << ", valid "
      << format_g9(res.best_valid) << (res.stopped_early ? ", early stop" : "")
      << ")\n";
  log << "checkpoint: " << cfg.pretrain_ckpt().string() << "\n";
  log << "loss curve: " << tc.log_path.string() << "\n";
}

void run_finetune(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  PipelineData data = load_pipeline_data(cfg);
  const Dataset& ds = data.dataset;

  // an attribute-free checkpoint cannot be counterfactually fine-tuned
  Checkpoint raw = load_checkpoint(cfg.input_ckpt());
  if (!raw.has("model/emb/attr"))
    throw ArtifactError(cfg.input_ckpt().string() +
                        ": checkpoint has no attribute table");

  GeneratorModel model = load_model_checkpoint(
      cfg.input_ckpt(), cfg.model_config(), data.vocab.size(), ds.n_users(),
      ds.n_items(), ds.attribute_space.size(), data.vocab.fingerprint());

  FinetuneConfig fc;
  fc.epochs = cfg.ft_epochs;
  fc.batch_size = cfg.batch_size;
  fc.lr = cfg.ft_lr;
  fc.lambda = cfg.lambda;
  fc.eta = cfg.eta;
  fc.n_samples = cfg.n_samples;
  fc.decode.top_k = cfg.top_k;
  fc.decode.max_len = cfg.max_len;
  fc.seed = cfg.seed;
  std::filesystem::create_directories(cfg.out_dir);
  fc.log_path = cfg.out_dir / "finetune_log.csv";

  const QualityOracle oracle = resolve_oracle(cfg.measure, data.lexicon);
  AdamState opt;
  FinetuneResult res = finetune(model, data.train, oracle, data.vocab, fc, &opt);
  save_model_checkpoint(cfg.finetune_ckpt(), model, nullptr, &opt,
                        data.vocab.fingerprint());

  log << "fine-tuned for " << res.steps << " steps over " << res.epochs_run
      << " epoch(s); mean |delta| " << format_g9(res.mean_abs_delta) << "\n";
  log << "checkpoint: " << cfg.finetune_ckpt().string() << "\n";
  log << "step log: " << fc.log_path.string() << "\n";
}

namespace {

EvalConfig eval_config(const RunConfig& cfg, const PipelineData& data,
                       bool counterfactuals) {
  EvalConfig ec;
  ec.n_samples = cfg.n_samples;
  ec.n_attrs = data.dataset.attribute_space.size();
  ec.seed = cfg.seed;
  ec.decode.top_k = cfg.top_k;
  ec.decode.max_len = cfg.max_len;
  ec.counterfactuals = counterfactuals;
  ec.oracles = {resolve_oracle(cfg.measure, data.lexicon)};
  ec.threads = cfg.threads;
  ec.model_tag = cfg.baseline;
  ec.dataset_tag = cfg.data_dir.filename().string();
  return ec;
}

}  // namespace

void run_eval(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const BaselinePlan plan = cfg.plan();
  PipelineData data = load_pipeline_data(cfg);
  const Dataset& ds = data.dataset;

  GeneratorModel model = load_model_checkpoint(
      cfg.input_ckpt(), cfg.model_config(), data.vocab.size(), ds.n_users(),
      ds.n_items(), ds.attribute_space.size(), data.vocab.fingerprint());
  if (plan.nattr_eval)
    model = nattr_transform(model, Rng::mix({cfg.seed, kNattrSeed}));

  const EvalConfig ec = eval_config(cfg, data, plan.counterfactual_eval);
  if (ec.counterfactuals) {
    std::vector<int> counts(ds.attribute_space.size(), 0);
    for (const EncodedRecord& r : data.test) ++counts[r.attr];
    for (std::size_t a = 0; a < counts.size(); ++a)
      if (counts[a] == 0)
        log << "warning: group '" << ds.attribute_space.values[a]
            << "' has no test records; group normalization adjusted\n";
  }

  const auto worlds = generate_worlds(model, data.test, data.vocab, ec);
  const EvalReport rep =
      report_from_worlds(worlds, model, data.test, data.vocab, ec);

  std::filesystem::create_directories(cfg.out_dir);
  write_report_csv(cfg.out_dir / "report.csv", {rep});
  write_report_json(cfg.out_dir / "report.json", {rep});
  write_length_histogram(cfg.out_dir / "hist.csv", worlds,
                         ds.attribute_space);

  for (const MeasureRow& row : rep.measures) {
    log << "measure " << row.measure << ": ";
    if (row.cf_defined)
      log << "ind_cf " << format_g9(row.ind_cf) << ", grp_cf "
          << format_g9(row.grp_cf) << ", ";
    log << "ddp " << format_g9(row.ddp) << "\n";
  }
  log << "bleu1 " << format_g9(100.0 * rep.bleu1) << ", bleu4 "
      << format_g9(100.0 * rep.bleu4) << ", rougeL "
      << format_g9(100.0 * rep.rougel) << ", rmse "
      << format_g9(rep.rating_rmse) << "\n";
  log << "report: " << (cfg.out_dir / "report.csv").string() << "\n";
}

void run_sweep(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  PipelineData data = load_pipeline_data(cfg);
  const Dataset& ds = data.dataset;

  Checkpoint raw = load_checkpoint(cfg.input_ckpt());
  if (!raw.has("model/emb/attr"))
    throw ArtifactError(cfg.input_ckpt().string() +
                        ": checkpoint has no attribute table");
  const GeneratorModel base = load_model_checkpoint(
      cfg.input_ckpt(), cfg.model_config(), data.vocab.size(), ds.n_users(),
      ds.n_items(), ds.attribute_space.size(), data.vocab.fingerprint());

  // the lambda = 0 reference row is always swept
  std::vector<double> grid{0.0};
  for (double l : cfg.lambdas)
    if (std::find(grid.begin(), grid.end(), l) == grid.end()) grid.push_back(l);

  const QualityOracle oracle = resolve_oracle(cfg.measure, data.lexicon);
  const EvalConfig ec = eval_config(cfg, data, true);

  struct SweepRow {
    double lambda, ind_cf, bleu1;
  };
  std::vector<SweepRow> rows;
  for (double l : grid) {
    GeneratorModel model = base.clone();
    FinetuneConfig fc;
    fc.epochs = cfg.ft_epochs;
    fc.batch_size = cfg.batch_size;
    fc.lr = cfg.ft_lr;
    fc.lambda = l;
    fc.eta = cfg.eta;
    fc.n_samples = cfg.n_samples;
    fc.decode.top_k = cfg.top_k;
    fc.decode.max_len = cfg.max_len;
    fc.seed = cfg.seed;
    finetune(model, data.train, oracle, data.vocab, fc);

    const EvalReport rep = evaluate(model, data.test, data.vocab, ec);
    rows.push_back({l, rep.measures.at(0).ind_cf, rep.bleu1});
    log << "lambda " << format_g9(l) << ": ind_cf "
        << format_g9(rows.back().ind_cf) << ", bleu1 "
        << format_g9(100.0 * rows.back().bleu1) << "\n";
  }

  const SweepRow& ref = rows.front();
  auto ratio = [](double v, double r) {
    if (r != 0.0) return v / r;
    return v == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  };
  std::ostringstream out;
  out << "lambda,ind_cf_ratio,bleu1_ratio,ind_cf,bleu1\n";
  for (const SweepRow& row : rows)
    out << format_g9(row.lambda) << ',' << format_g9(ratio(row.ind_cf, ref.ind_cf))
        << ',' << format_g9(ratio(row.bleu1, ref.bleu1)) << ','
        << format_g9(row.ind_cf) << ',' << format_g9(100.0 * row.bleu1) << '\n';
  std::filesystem::create_directories(cfg.out_dir);
  atomic_write(cfg.out_dir / "sweep.csv", out.str());
  log << "sweep table: " << (cfg.out_dir / "sweep.csv").string() << "\n";
}

}  // namespace fairgen
