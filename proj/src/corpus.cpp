// SPDX-License-Identifier: Apache-2.0
#include "fairgen/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "fairgen/io.hpp"
#include "fairgen/rng.hpp"
#include "json.hpp"

namespace fairgen {

namespace {
constexpr std::uint64_t kSynthStream = 0x53594e5448ull;
constexpr std::uint64_t kSplitStream = 0x53504c4954ull;
}  // namespace

// ---- AttributeSpace ----

void AttributeSpace::validate() const {
  if (values.size() < 2)
    throw DomainError("attribute space needs at least two values");
  std::set<std::string> seen(values.begin(), values.end());
  if (seen.size() != values.size())
    throw DomainError("attribute space values must be unique");
}

int AttributeSpace::index_of(const std::string& value) const {
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] == value) return static_cast<int>(i);
  throw DomainError("attribute value '" + value + "' not in space '" + name + "'");
}

// ---- Vocabulary ----

Vocabulary::Vocabulary() {
  for (const char* t : {bos_token(), eos_token(), unk_token(), pad_token()})
    add(t);
}

bool Vocabulary::contains(const std::string& token) const {
  return ids_.count(token) > 0;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size())
    throw IndexError("vocabulary id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::add(const std::string& token) {
  if (ids_.emplace(token, size()).second) tokens_.push_back(token);
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id_of(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> tokens;
  tokens.reserve(ids.size());
  for (int id : ids) tokens.push_back(token_of(id));
  return tokens;
}

void Vocabulary::set_feature_lexicon(const std::vector<std::string>& lexicon) {
  lexicon_.clear();
  for (const auto& t : lexicon)
    if (contains(t)) lexicon_.push_back(t);
  std::sort(lexicon_.begin(), lexicon_.end());
  lexicon_.erase(std::unique(lexicon_.begin(), lexicon_.end()), lexicon_.end());
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& t : tokens_) {
    h = Rng::fnv1a(t.data(), t.size(), h);
    h = Rng::fnv1a("\n", 1, h);
  }
  return h;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  atomic_write(path, [&](std::ostream& out) {
    for (const auto& t : tokens_) out << t << '\n';
  });
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  Vocabulary v;
  auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i < static_cast<std::size_t>(kNumSpecials)) {
      if (lines[i] != v.tokens_[i])
        throw ParseError(path.string() + ": line " + std::to_string(i + 1) +
                         ": expected reserved token " + v.tokens_[i]);
      continue;
    }
    if (lines[i].empty())
      throw ParseError(path.string() + ": line " + std::to_string(i + 1) +
                       ": empty token");
    v.add(lines[i]);
  }
  if (v.size() != static_cast<int>(lines.size()))
    throw ParseError(path.string() + ": duplicate tokens");
  return v;
}

// ---- Dataset ----

void Dataset::rebuild_indices() {
  attribute_space.validate();
  group_records.assign(attribute_space.values.size(), {});
  std::set<std::string> users, items;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Record& r = records[i];
    group_records[attribute_space.index_of(r.attribute)].push_back(
        static_cast<int>(i));
    users.insert(r.user);
    items.insert(r.item);
  }
  user_ids.assign(users.begin(), users.end());
  item_ids.assign(items.begin(), items.end());
  user_index.clear();
  item_index.clear();
  for (std::size_t i = 0; i < user_ids.size(); ++i)
    user_index[user_ids[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < item_ids.size(); ++i)
    item_index[item_ids[i]] = static_cast<int>(i);
}

const std::vector<int>& Dataset::group(const std::string& value) const {
  return group_records[attribute_space.index_of(value)];
}

// ---- SynthesisSpec ----

SynthesisSpec SynthesisSpec::defaults() {
  SynthesisSpec s;
  s.groups = {{"male", 0.5, 20.0, 2.0}, {"female", 0.5, 8.0, 1.0}};
  s.features = {"graphics", "battery", "screen", "sound",   "controls",
                "story",    "camera",  "keyboard", "price", "design"};
  s.adjectives = {"great", "sharp", "crisp", "sturdy",
                  "smooth", "bright", "loud", "clean"};
  s.fillers = {"overall", "fine",  "nice",  "good",  "solid",  "well",
               "pretty",  "quite", "really", "decent", "happy", "useful",
               "handy",   "fun",   "easy",  "fast",  "light",  "small",
               "simple",  "strong", "fresh", "neat",  "okay",  "plain"};
  return s;
}

void SynthesisSpec::validate() const {
  if (groups.size() < 2) throw DomainError("synthesis needs at least two groups");
  double psum = 0.0;
  for (const auto& g : groups) {
    if (g.prob < 0) throw DomainError("negative group probability");
    if (g.mean_len < 3.0 || g.mean_len > max_len)
      throw DomainError("group '" + g.value + "': mean length " +
                        std::to_string(g.mean_len) + " outside [3," +
                        std::to_string(max_len) + "]");
    if (g.mean_features < 0)
      throw DomainError("group '" + g.value + "': negative mean feature count");
    psum += g.prob;
  }
  if (std::abs(psum - 1.0) > 1e-9)
    throw DomainError("group probabilities must sum to 1");
  if (n_users <= 0 || n_items <= 0 || n_records <= 0)
    throw DomainError("synthesis sizes must be positive");
  if (features.empty() || adjectives.empty() || fillers.empty())
    throw DomainError("synthesis grammar lists must be non-empty");
}

// ---- synthesize ----

namespace {

std::string padded_id(char prefix, int n, int width) {
  std::ostringstream ss;
  ss << prefix;
  std::string digits = std::to_string(n);
  for (int i = static_cast<int>(digits.size()); i < width; ++i) ss << '0';
  ss << digits;
  return ss.str();
}

}  // namespace

Dataset synthesize(const SynthesisSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(Rng::mix({seed, kSynthStream}));

  const int uw = static_cast<int>(std::to_string(spec.n_users - 1).size());
  const int iw = static_cast<int>(std::to_string(spec.n_items - 1).size());

  // Attribute is a per-user property; every record of a user shares it.
  std::vector<int> user_group(spec.n_users);
  for (int u = 0; u < spec.n_users; ++u) {
    double r = rng.uniform();
    double acc = 0.0;
    int g = static_cast<int>(spec.groups.size()) - 1;
    for (std::size_t k = 0; k < spec.groups.size(); ++k) {
      acc += spec.groups[k].prob;
      if (r < acc) {
        g = static_cast<int>(k);
        break;
      }
    }
    user_group[u] = g;
  }

  Dataset ds;
  ds.attribute_space.name = spec.attribute_name;
  for (const auto& g : spec.groups) ds.attribute_space.values.push_back(g.value);

  const int n_features = static_cast<int>(spec.features.size());
  ds.records.reserve(spec.n_records);
  for (int k = 0; k < spec.n_records; ++k) {
    const int u = rng.uniform_int(spec.n_users);
    const int it = rng.uniform_int(spec.n_items);
    const GroupProfile& g = spec.groups[user_group[u]];

    const int len = std::clamp(rng.poisson(g.mean_len), 3, spec.max_len);
    int n_feat = std::min(rng.poisson(g.mean_features), n_features);

    // Distinct features via partial Fisher-Yates over indices.
    std::vector<int> pool(n_features);
    std::iota(pool.begin(), pool.end(), 0);
    std::vector<std::string> expl;
    for (int f = 0; f < n_feat; ++f) {
      const int pick = f + rng.uniform_int(n_features - f);
      std::swap(pool[f], pool[pick]);
      const std::string& feat = spec.features[pool[f]];
      const std::string& adj =
          spec.adjectives[rng.uniform_int(static_cast<int>(spec.adjectives.size()))];
      expl.insert(expl.end(), {"the", feat, "is", adj, "."});
    }
    while (static_cast<int>(expl.size()) < len) {
      const std::string& f1 =
          spec.fillers[rng.uniform_int(static_cast<int>(spec.fillers.size()))];
      const std::string& f2 =
          spec.fillers[rng.uniform_int(static_cast<int>(spec.fillers.size()))];
      expl.insert(expl.end(), {"it", "is", f1, "and", f2, "."});
    }
    expl.resize(len);

    Record rec;
    rec.user = padded_id('u', u, uw);
    rec.item = padded_id('i', it, iw);
    rec.attribute = g.value;
    rec.rating = std::clamp(rng.normal(spec.rating_mean, spec.rating_sd), 1.0, 5.0);
    rec.explanation = std::move(expl);
    ds.records.push_back(std::move(rec));
  }
  ds.rebuild_indices();
  return ds;
}

// ---- text ops ----

std::vector<std::string> tokenize(const std::string& text) {
  static const std::string kPunct = ".,!?'\"()";
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
      continue;
    }
    const char lc = static_cast<char>(std::tolower(c));
    if (kPunct.find(lc) != std::string::npos) {
      flush();
      out.emplace_back(1, lc);
    } else {
      cur += lc;
    }
  }
  flush();
  return out;
}

std::vector<std::vector<std::string>> extract_explanations(
    const std::vector<std::string>& raw_reviews,
    const std::unordered_set<std::string>& feature_lexicon) {
  if (feature_lexicon.empty())
    throw DomainError("extract_explanations: empty feature lexicon");
  std::vector<std::vector<std::string>> out;
  for (const auto& review : raw_reviews) {
    const std::vector<std::string> tokens = tokenize(review);
    std::vector<std::string> kept, sentence;
    bool match = false;
    auto close = [&] {
      if (match) kept.insert(kept.end(), sentence.begin(), sentence.end());
      sentence.clear();
      match = false;
    };
    for (const auto& t : tokens) {
      sentence.push_back(t);
      if (feature_lexicon.count(t)) match = true;
      if (t == "." || t == "!" || t == "?") close();
    }
    close();  // trailing sentence without a terminator
    if (!kept.empty()) out.push_back(std::move(kept));
  }
  return out;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& streams,
                       int max_size) {
  if (max_size <= Vocabulary::kNumSpecials)
    throw DomainError("vocabulary maximum must exceed the reserved tokens");
  std::unordered_map<std::string, long long> counts;
  for (const auto& stream : streams)
    for (const auto& t : stream) ++counts[t];
  std::vector<std::pair<std::string, long long>> ranked(counts.begin(),
                                                        counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [token, n] : ranked) {
    if (v.size() >= max_size) break;
    v.add(token);
  }
  return v;
}

// ---- split ----

void split(Dataset& ds, const std::array<double, 3>& ratios, std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (r < 0) throw DomainError("split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("split ratios must sum to 1");

  const int n = static_cast<int>(ds.records.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(Rng::mix({seed, kSplitStream}));
  rng.shuffle(idx);

  int n_train = static_cast<int>(std::llround(ratios[0] * n));
  n_train = std::clamp(n_train, 0, n);
  int n_valid = static_cast<int>(std::llround(ratios[1] * n));
  n_valid = std::clamp(n_valid, 0, n - n_train);

  ds.train_idx.assign(idx.begin(), idx.begin() + n_train);
  ds.valid_idx.assign(idx.begin() + n_train, idx.begin() + n_train + n_valid);
  ds.test_idx.assign(idx.begin() + n_train + n_valid, idx.end());
  ds.rebuild_indices();

  // Repair: every user and item must have a train record. Users (then
  // items) are visited in sorted id order; the lowest-index record is moved.
  auto covered = [&](auto key_of) {
    std::unordered_set<std::string> seen;
    for (int i : ds.train_idx) seen.insert(key_of(ds.records[i]));
    return seen;
  };
  auto repair = [&](auto key_of, const std::vector<std::string>& all_keys) {
    auto seen = covered(key_of);
    for (const auto& key : all_keys) {
      if (seen.count(key)) continue;
      int best = -1;
      for (std::vector<int>* pool : {&ds.valid_idx, &ds.test_idx})
        for (int i : *pool)
          if (key_of(ds.records[i]) == key && (best == -1 || i < best)) best = i;
      if (best == -1) continue;  // key only existed via already-moved records
      for (std::vector<int>* pool : {&ds.valid_idx, &ds.test_idx})
        pool->erase(std::remove(pool->begin(), pool->end(), best), pool->end());
      ds.train_idx.push_back(best);
      seen.insert(key);
    }
  };
  repair([](const Record& r) { return r.user; }, ds.user_ids);
  repair([](const Record& r) { return r.item; }, ds.item_ids);

  std::sort(ds.train_idx.begin(), ds.train_idx.end());
  std::sort(ds.valid_idx.begin(), ds.valid_idx.end());
  std::sort(ds.test_idx.begin(), ds.test_idx.end());
}

// ---- persistence ----

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  atomic_write(path, [&](std::ostream& out) {
    for (const auto& r : ds.records) {
      nlohmann::ordered_json j;
      j["user"] = r.user;
      j["item"] = r.item;
      j["attribute"] = r.attribute;
      j["rating"] = r.rating;
      std::string text;
      for (std::size_t i = 0; i < r.explanation.size(); ++i) {
        if (i) text += ' ';
        text += r.explanation[i];
      }
      j["explanation"] = text;
      out << j.dump() << '\n';
    }
  });
}

Dataset load_dataset(const std::filesystem::path& path,
                     const AttributeSpace& space) {
  space.validate();
  Dataset ds;
  ds.attribute_space = space;
  const auto lines = read_lines(path);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const std::string where = path.string() + ": line " + std::to_string(ln + 1);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[ln]);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (!j.is_object()) throw ParseError(where + ": record is not an object");
    for (const char* field : {"user", "item", "attribute", "explanation"}) {
      if (!j.contains(field))
        throw ParseError(where + ": missing field '" + field + "'");
      if (!j[field].is_string())
        throw ParseError(where + ": field '" + field + "' must be a string");
    }
    if (!j.contains("rating"))
      throw ParseError(where + ": missing field 'rating'");
    if (!j["rating"].is_number())
      throw ParseError(where + ": field 'rating' must be a number");

    Record r;
    r.user = j["user"].get<std::string>();
    r.item = j["item"].get<std::string>();
    r.attribute = j["attribute"].get<std::string>();
    r.rating = j["rating"].get<double>();
    try {
      (void)space.index_of(r.attribute);
    } catch (const DomainError&) {
      throw DomainError(where + ": attribute '" + r.attribute +
                        "' not in declared attribute space");
    }
    if (r.rating < 1.0 || r.rating > 5.0)
      throw DomainError(where + ": rating " + std::to_string(r.rating) +
                        " outside [1,5]");
    r.explanation = tokenize(j["explanation"].get<std::string>());
    if (r.explanation.empty())
      throw DomainError(where + ": explanation is empty");
    ds.records.push_back(std::move(r));
  }
  ds.rebuild_indices();
  return ds;
}

std::vector<std::string> load_lexicon(const std::filesystem::path& path) {
  std::vector<std::string> lexicon;
  for (const auto& line : read_lines(path))
    if (!line.empty()) lexicon.push_back(line);
  if (lexicon.empty()) throw ArtifactError("empty feature lexicon: " + path.string());
  return lexicon;
}

void save_lexicon(const std::vector<std::string>& lexicon,
                  const std::filesystem::path& path) {
  atomic_write(path, [&](std::ostream& out) {
    for (const auto& t : lexicon) out << t << '\n';
  });
}

}  // namespace fairgen
