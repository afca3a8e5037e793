#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "trident/corpus.hpp"

namespace trident::tok {

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kNumSpecials = 4;

bool is_special(int id);

// Token <-> id mapping shared by all six directional models. Ids 0..3 are the
// specials; regular tokens start at 4.
class Vocab {
 public:
  Vocab() = default;
  explicit Vocab(std::vector<std::string> tokens);

  int size() const { return kNumSpecials + static_cast<int>(tokens_.size()); }
  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const { return index_.contains(token); }
  const std::string& token(int id) const;  // throws std::out_of_range
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Greedy pair-merge subword model. Zero merges means whole-word tokens.
// Non-final units carry the "@@" continuation suffix.
class SubwordMerges {
 public:
  SubwordMerges() = default;
  explicit SubwordMerges(std::vector<std::pair<std::string, std::string>> merges)
      : merges_(std::move(merges)) {}

  static SubwordMerges learn(const std::vector<corpus::Tokens>& sentences,
                             int merge_count);

  bool empty() const { return merges_.empty(); }
  const auto& merges() const { return merges_; }
  corpus::Tokens segment(const corpus::Tokens& words) const;

 private:
  std::vector<std::pair<std::string, std::string>> merges_;
};

// Joins "@@"-suffixed units back into whole words.
corpus::Tokens join_subwords(const corpus::Tokens& units);

// Counts tokens over every side of every pair; tokens with frequency >=
// min_freq get ids ordered by (frequency desc, token asc).
Vocab build_vocab(const corpus::TriCorpus& corpus, int min_freq,
                  const SubwordMerges& merges = {});

std::vector<int> encode(const Vocab& vocab, const corpus::Tokens& tokens);
// Specials are stripped. Ids outside the vocabulary throw std::out_of_range.
corpus::Tokens decode(const Vocab& vocab, std::span<const int> ids);

}  // namespace trident::tok
