// SPDX-License-Identifier: Apache-2.0
#include "fairgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <thread>

#include "fairgen/io.hpp"
#include "fairgen/policy.hpp"
#include "fairgen/rng.hpp"
#include "json.hpp"

namespace fairgen {

namespace {

constexpr std::uint64_t kEvalSample = 0x45534d50ull;  // "ESMP"
constexpr std::uint64_t kEvalPick = 0x45504943ull;    // "EPIC"

using Counts = std::map<std::vector<std::string>, int>;

Counts ngram_counts(const std::vector<std::string>& tokens, int n) {
  Counts out;
  if (static_cast<int>(tokens.size()) < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++out[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  return out;
}

int lcs_length(const std::vector<std::string>& a,
               const std::vector<std::string>& b) {
  std::vector<int> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double f1(double match, double n_cand, double n_ref) {
  if (match <= 0.0 || n_cand <= 0.0 || n_ref <= 0.0) return 0.0;
  const double p = match / n_cand;
  const double r = match / n_ref;
  return 2.0 * p * r / (p + r);
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// group index -> record indices; empty groups keep empty lists
std::vector<std::vector<int>> group_by_attr(
    const std::vector<WorldQuality>& worlds, int n_attrs) {
  std::vector<std::vector<int>> groups(n_attrs);
  for (int i = 0; i < static_cast<int>(worlds.size()); ++i) {
    const int a = worlds[i].attr;
    if (a < 0 || a >= n_attrs)
      throw DomainError("attribute id " + std::to_string(a) +
                        " outside the attribute space");
    groups[a].push_back(i);
  }
  return groups;
}

}  // namespace

double bleu(const std::vector<std::vector<std::string>>& candidates,
            const std::vector<std::vector<std::string>>& references, int n) {
  if (n != 1 && n != 4) throw DomainError("bleu order must be 1 or 4");
  if (candidates.size() != references.size())
    throw ContractError("bleu needs aligned candidate/reference lists");
  if (candidates.empty()) throw DomainError("bleu over an empty corpus");

  std::size_t c_len = 0, r_len = 0;
  for (const auto& c : candidates) c_len += c.size();
  for (const auto& r : references) r_len += r.size();
  if (c_len == 0) return 0.0;

  double log_sum = 0.0;
  for (int order = 1; order <= n; ++order) {
    long long clipped = 0, total = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      Counts cand = ngram_counts(candidates[i], order);
      Counts ref = ngram_counts(references[i], order);
      for (const auto& [gram, count] : cand) {
        total += count;
        auto it = ref.find(gram);
        if (it != ref.end()) clipped += std::min(count, it->second);
      }
    }
    if (clipped == 0 || total == 0) return 0.0;
    log_sum += std::log(static_cast<double>(clipped) /
                        static_cast<double>(total));
  }

  const double bp =
      c_len < r_len ? std::exp(1.0 - static_cast<double>(r_len) /
                                         static_cast<double>(c_len))
                    : 1.0;
  return bp * std::exp(log_sum / n);
}

double rouge(const std::vector<std::string>& candidate,
             const std::vector<std::string>& reference, char variant) {
  switch (variant) {
    case '1':
    case '2': {
      const int n = variant - '0';
      Counts cand = ngram_counts(candidate, n);
      Counts ref = ngram_counts(reference, n);
      double match = 0, n_cand = 0, n_ref = 0;
      for (const auto& [gram, count] : cand) {
        n_cand += count;
        auto it = ref.find(gram);
        if (it != ref.end()) match += std::min(count, it->second);
      }
      for (const auto& [gram, count] : ref) n_ref += count;
      return f1(match, n_cand, n_ref);
    }
    case 'L':
      return f1(lcs_length(candidate, reference),
                static_cast<double>(candidate.size()),
                static_cast<double>(reference.size()));
    default:
      throw DomainError(std::string("unknown rouge variant '") + variant +
                        "'");
  }
}

double rouge_mean(const std::vector<std::vector<std::string>>& candidates,
                  const std::vector<std::vector<std::string>>& references,
                  char variant) {
  if (candidates.size() != references.size())
    throw ContractError("rouge needs aligned candidate/reference lists");
  if (candidates.empty()) throw DomainError("rouge over an empty corpus");
  double s = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    s += rouge(candidates[i], references[i], variant);
  return s / static_cast<double>(candidates.size());
}

double rmse(const std::vector<double>& predicted,
            const std::vector<double>& truth) {
  if (predicted.size() != truth.size())
    throw ContractError("rmse needs aligned vectors");
  if (predicted.empty()) throw DomainError("rmse over an empty set");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - truth[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(predicted.size()));
}

double ind_cf_value(const std::vector<WorldQuality>& worlds) {
  if (worlds.empty()) throw DomainError("ind_cf over an empty set");
  double s = 0.0;
  for (const WorldQuality& w : worlds) {
    if (w.designated_cf < 0 ||
        w.designated_cf >= static_cast<int>(w.cf.size()) ||
        w.cf[w.designated_cf].empty())
      throw ContractError("record carries no designated counterfactual");
    s += std::abs(mean_of(w.fact) - mean_of(w.cf[w.designated_cf]));
  }
  return s / static_cast<double>(worlds.size());
}

double grp_cf_value(const std::vector<WorldQuality>& worlds, int n_attrs) {
  if (worlds.empty()) throw DomainError("grp_cf over an empty set");
  if (n_attrs < 2) throw DomainError("grp_cf needs at least two groups");
  const auto groups = group_by_attr(worlds, n_attrs);

  int non_empty = 0;
  double sum = 0.0;
  for (int a = 0; a < n_attrs; ++a) {
    if (groups[a].empty()) continue;  // skipped; normalization adjusts below
    ++non_empty;
    for (int b = 0; b < n_attrs; ++b) {
      if (b == a) continue;
      double fact = 0.0, cf = 0.0;
      for (int i : groups[a]) {
        const WorldQuality& w = worlds[i];
        if (b >= static_cast<int>(w.cf.size()) || w.cf[b].empty())
          throw ContractError("record lacks samples under attribute " +
                              std::to_string(b));
        fact += mean_of(w.fact);
        cf += mean_of(w.cf[b]);
      }
      sum += std::abs(fact - cf) / static_cast<double>(groups[a].size());
    }
  }
  if (non_empty == 0) throw DomainError("grp_cf with every group empty");
  return sum / (static_cast<double>(non_empty) *
                static_cast<double>(n_attrs - 1));
}

double ddp_value(const std::vector<WorldQuality>& worlds, int n_attrs) {
  if (n_attrs < 2) throw DomainError("ddp needs at least two groups");
  const auto groups = group_by_attr(worlds, n_attrs);

  std::vector<double> means;
  for (int a = 0; a < n_attrs; ++a) {
    if (groups[a].empty()) continue;
    double s = 0.0;
    for (int i : groups[a]) s += mean_of(worlds[i].fact);
    means.push_back(s / static_cast<double>(groups[a].size()));
  }
  if (means.size() < 2)
    throw DomainError("ddp needs at least two non-empty groups");

  double sum = 0.0;
  int pairs = 0;
  for (std::size_t a = 0; a < means.size(); ++a)
    for (std::size_t b = a + 1; b < means.size(); ++b) {
      sum += std::abs(means[a] - means[b]);
      ++pairs;
    }
  return sum / pairs;
}

void EvalConfig::validate() const {
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  if (n_attrs < 2) throw ConfigError("the attribute space needs >= 2 values");
  if (decode.top_k < 1) throw ConfigError("top_k must be >= 1");
  if (decode.max_len < 1) throw ConfigError("decode max_len must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (oracles.empty()) throw ConfigError("at least one quality measure");
}

std::vector<GeneratedWorlds> generate_worlds(
    const GeneratorModel& model, const std::vector<EncodedRecord>& records,
    const Vocabulary& vocab, const EvalConfig& cfg) {
  cfg.validate();
  if (records.empty()) throw DomainError("nothing to evaluate");
  if (cfg.counterfactuals && (!model.has_attribute() || model.n_attrs() < 2))
    throw DomainError(
        "counterfactual evaluation needs an attribute-conditioned model");
  if (cfg.counterfactuals && model.n_attrs() != cfg.n_attrs)
    throw ContractError("model attribute table disagrees with n_attrs");

  const int n = static_cast<int>(records.size());
  std::vector<GeneratedWorlds> out(n);

  auto run_record = [&](int i) {
    const EncodedRecord& rec = records[i];
    GeneratedWorlds& gw = out[i];
    gw.attr = rec.attr;
    if (cfg.counterfactuals) {
      gw.designated_cf = draw_cf_attr(
          rec.attr, model.n_attrs(),
          Rng::mix({cfg.seed, kEvalPick, static_cast<std::uint64_t>(i)}));
      gw.cf.resize(model.n_attrs());
    }
    for (int k = 0; k < cfg.n_samples; ++k) {
      // one noise stream per (record, sample), shared by every world
      const std::uint64_t s =
          Rng::mix({cfg.seed, kEvalSample, static_cast<std::uint64_t>(i),
                    static_cast<std::uint64_t>(k)});
      gw.fact.push_back(vocab.decode(sample(model, rec, cfg.decode, s).ids));
      if (cfg.counterfactuals)
        for (int a = 0; a < model.n_attrs(); ++a) {
          if (a == rec.attr) continue;
          gw.cf[a].push_back(
              vocab.decode(sample(model, rec, cfg.decode, s, a).ids));
        }
    }
  };

  const int threads = std::min(cfg.threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) run_record(i);
  } else {
    // slot-strided partition: output identity is independent of the split
    std::vector<std::thread> pool;
    for (int slot = 0; slot < threads; ++slot)
      pool.emplace_back([&, slot] {
        for (int i = slot; i < n; i += threads) run_record(i);
      });
    for (std::thread& t : pool) t.join();
  }
  return out;
}

std::vector<WorldQuality> score_worlds(
    const std::vector<GeneratedWorlds>& worlds, const QualityOracle& oracle) {
  std::vector<WorldQuality> out;
  out.reserve(worlds.size());
  for (const GeneratedWorlds& gw : worlds) {
    WorldQuality wq;
    wq.attr = gw.attr;
    wq.designated_cf = gw.designated_cf;
    for (const auto& tokens : gw.fact) wq.fact.push_back(oracle(tokens));
    wq.cf.resize(gw.cf.size());
    for (std::size_t a = 0; a < gw.cf.size(); ++a)
      for (const auto& tokens : gw.cf[a]) wq.cf[a].push_back(oracle(tokens));
    out.push_back(std::move(wq));
  }
  return out;
}

EvalReport report_from_worlds(const std::vector<GeneratedWorlds>& worlds,
                              const GeneratorModel& model,
                              const std::vector<EncodedRecord>& records,
                              const Vocabulary& vocab, const EvalConfig& cfg) {
  cfg.validate();
  if (worlds.size() != records.size())
    throw ContractError("worlds/records misaligned");
  if (records.empty()) throw DomainError("nothing to evaluate");

  EvalReport rep;
  rep.model_tag = cfg.model_tag;
  rep.dataset_tag = cfg.dataset_tag;
  rep.n_samples = cfg.n_samples;
  rep.seed = cfg.seed;

  for (const QualityOracle& oracle : cfg.oracles) {
    const auto table = score_worlds(worlds, oracle);
    MeasureRow row;
    row.measure = oracle.name();
    row.cf_defined = cfg.counterfactuals;
    row.ddp = ddp_value(table, cfg.n_attrs);
    if (cfg.counterfactuals) {
      row.ind_cf = ind_cf_value(table);
      row.grp_cf = grp_cf_value(table, cfg.n_attrs);
    }
    rep.measures.push_back(std::move(row));
  }

  std::vector<std::vector<std::string>> cands, refs;
  std::vector<double> pred, truth;
  for (std::size_t i = 0; i < records.size(); ++i) {
    cands.push_back(worlds[i].fact.at(0));
    refs.push_back(vocab.decode(records[i].words));
    Tape tape;
    pred.push_back(model.forward(tape, records[i]).rating.value());
    truth.push_back(records[i].rating);
  }
  rep.bleu1 = bleu(cands, refs, 1);
  rep.bleu4 = bleu(cands, refs, 4);
  rep.rouge1 = rouge_mean(cands, refs, '1');
  rep.rouge2 = rouge_mean(cands, refs, '2');
  rep.rougel = rouge_mean(cands, refs, 'L');
  rep.rating_rmse = rmse(pred, truth);
  return rep;
}

EvalReport evaluate(const GeneratorModel& model,
                    const std::vector<EncodedRecord>& records,
                    const Vocabulary& vocab, const EvalConfig& cfg) {
  return report_from_worlds(generate_worlds(model, records, vocab, cfg),
                            model, records, vocab, cfg);
}

void write_report_csv(const std::filesystem::path& path,
                      const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  out << "model,dataset,measure,ind_cf,grp_cf,ddp,bleu1,bleu4,rouge1,rouge2,"
         "rougeL,bertscore,rmse\n";
  for (const EvalReport& rep : reports)
    for (const MeasureRow& row : rep.measures) {
      out << rep.model_tag << ',' << rep.dataset_tag << ',' << row.measure
          << ',';
      if (row.cf_defined)
        out << format_g9(row.ind_cf) << ',' << format_g9(row.grp_cf) << ',';
      else
        out << "-,-,";
      out << format_g9(row.ddp) << ',' << format_g9(100.0 * rep.bleu1) << ','
          << format_g9(100.0 * rep.bleu4) << ','
          << format_g9(100.0 * rep.rouge1) << ','
          << format_g9(100.0 * rep.rouge2) << ','
          << format_g9(100.0 * rep.rougel) << ",not computed,"
          << format_g9(rep.rating_rmse) << '\n';
    }
  atomic_write(path, out.str());
}

void write_report_json(const std::filesystem::path& path,
                       const std::vector<EvalReport>& reports) {
  nlohmann::ordered_json all = nlohmann::ordered_json::array();
  for (const EvalReport& rep : reports) {
    nlohmann::ordered_json j;
    j["model"] = rep.model_tag;
    j["dataset"] = rep.dataset_tag;
    j["n_samples"] = rep.n_samples;
    j["seed"] = rep.seed;
    j["measures"] = nlohmann::ordered_json::array();
    for (const MeasureRow& row : rep.measures) {
      nlohmann::ordered_json m;
      m["measure"] = row.measure;
      if (row.cf_defined) {
        m["ind_cf"] = row.ind_cf;
        m["grp_cf"] = row.grp_cf;
      } else {
        m["ind_cf"] = nullptr;
        m["grp_cf"] = nullptr;
      }
      m["ddp"] = row.ddp;
      j["measures"].push_back(m);
    }
    j["bleu1"] = 100.0 * rep.bleu1;
    j["bleu4"] = 100.0 * rep.bleu4;
    j["rouge1"] = 100.0 * rep.rouge1;
    j["rouge2"] = 100.0 * rep.rouge2;
    j["rougeL"] = 100.0 * rep.rougel;
    j["bertscore"] = "not computed";
    j["rmse"] = rep.rating_rmse;
    all.push_back(j);
  }
  atomic_write(path, all.dump(2) + "\n");
}

void write_length_histogram(const std::filesystem::path& path,
                            const std::vector<GeneratedWorlds>& worlds,
                            const AttributeSpace& attrs) {
  // (group, world, length) -> count; world 0 factual, 1 designated cf
  std::map<std::tuple<int, int, std::size_t>, long long> hist;
  for (const GeneratedWorlds& gw : worlds) {
    for (const auto& tokens : gw.fact) ++hist[{gw.attr, 0, tokens.size()}];
    if (gw.designated_cf >= 0)
      for (const auto& tokens : gw.cf[gw.designated_cf])
        ++hist[{gw.attr, 1, tokens.size()}];
  }
  std::ostringstream out;
  out << "group,world,length,count\n";
  for (const auto& [key, count] : hist) {
    const auto& [group, world, length] = key;
    if (group < 0 || group >= attrs.size())
      throw DomainError("histogram group outside the attribute space");
    out << attrs.values[group] << ','
        << (world == 0 ? "factual" : "counterfactual") << ',' << length << ','
        << count << '\n';
  }
  atomic_write(path, out.str());
}

}  // namespace fairgen
