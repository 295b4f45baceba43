// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fairgen/error.hpp"

namespace fairgen {

struct Record {
  std::string user;
  std::string item;
  std::string attribute;  // one of the AttributeSpace values
  double rating = 0.0;    // in [1,5]
  std::vector<std::string> explanation;  // non-empty token list
};

struct AttributeSpace {
  std::string name;
  std::vector<std::string> values;  // ordered, distinct, >= 2

  void validate() const;
  // Index of a value; DomainError for unknown values.
  int index_of(const std::string& value) const;
  int size() const { return static_cast<int>(values.size()); }
};

class Vocabulary {
 public:
  static constexpr int kBos = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;
  static constexpr int kPad = 3;
  static constexpr int kNumSpecials = 4;
  static const char* bos_token() { return "<bos>"; }
  static const char* eos_token() { return "<eos>"; }
  static const char* unk_token() { return "<unk>"; }
  static const char* pad_token() { return "<pad>"; }

  Vocabulary();  // specials only

  int size() const { return static_cast<int>(tokens_.size()); }
  bool contains(const std::string& token) const;
  // kUnk for unknown tokens.
  int id_of(const std::string& token) const;
  const std::string& token_of(int id) const;
  void add(const std::string& token);  // no-op if present

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;
  static bool is_special(int id) { return id >= 0 && id < kNumSpecials; }

  // Feature tokens restricted to vocabulary members.
  void set_feature_lexicon(const std::vector<std::string>& lexicon);
  const std::vector<std::string>& feature_lexicon() const { return lexicon_; }

  std::uint64_t fingerprint() const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> lexicon_;
};

struct Dataset {
  std::vector<Record> records;
  AttributeSpace attribute_space;
  std::vector<int> train_idx, valid_idx, test_idx;

  // Derived lookups; call rebuild_indices() after mutating records.
  std::vector<std::vector<int>> group_records;  // by attribute value order
  std::vector<std::string> user_ids, item_ids;  // sorted unique
  std::unordered_map<std::string, int> user_index, item_index;

  void rebuild_indices();
  int n_users() const { return static_cast<int>(user_ids.size()); }
  int n_items() const { return static_cast<int>(item_ids.size()); }
  const std::vector<int>& group(const std::string& value) const;
};

struct GroupProfile {
  std::string value;
  double prob = 0.0;       // attribute assignment probability
  double mean_len = 10.0;  // Poisson mean of explanation length, tokens
  double mean_features = 1.0;
};

struct SynthesisSpec {
  std::string attribute_name = "gender";
  std::vector<GroupProfile> groups;
  int n_users = 100;
  int n_items = 50;
  int n_records = 2000;
  int max_len = 128;
  double rating_mean = 4.0;
  double rating_sd = 1.0;
  // Template grammar: feature words (the lexicon), adjectives used in
  // feature clauses, and filler words for padding clauses.
  std::vector<std::string> features, adjectives, fillers;

  static SynthesisSpec defaults();
  void validate() const;
};

// ---- operations ----

Dataset synthesize(const SynthesisSpec& spec, std::uint64_t seed);

// Sentence filter: keeps sentences containing at least one lexicon token;
// reviews with nothing kept are dropped from the output.
std::vector<std::vector<std::string>> extract_explanations(
    const std::vector<std::string>& raw_reviews,
    const std::unordered_set<std::string>& feature_lexicon);

// Lowercases, splits on whitespace, and makes . , ! ? ' " ( ) single tokens.
std::vector<std::string> tokenize(const std::string& text);

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& streams,
                       int max_size);

// Random split by ratios (sum to 1), then a repair pass that moves records
// into train until every user and item has at least one train record.
void split(Dataset& dataset, const std::array<double, 3>& ratios,
           std::uint64_t seed);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path,
                     const AttributeSpace& space);

std::vector<std::string> load_lexicon(const std::filesystem::path& path);
void save_lexicon(const std::vector<std::string>& lexicon,
                  const std::filesystem::path& path);

}  // namespace fairgen
