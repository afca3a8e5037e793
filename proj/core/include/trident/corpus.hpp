#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "trident/rng.hpp"

namespace trident::corpus {

using Tokens = std::vector<std::string>;

// Parameters of the synthetic keyword-bidding corpus. Length means follow the
// production statistics: ads ~16 tokens, queries ~5, bidwords ~3.
struct GenSpec {
  int n_topics = 4;
  int concepts_per_topic = 4;
  int concept_vocab = 4;  // content tokens owned by each concept
  int topic_vocab = 6;    // content tokens shared by a topic's concepts
  int function_vocab = 10;
  int bidwords_per_concept = 3;
  int aq_pairs_per_topic = 500;
  int ab_pairs_per_topic = 500;
  int qb_pairs_per_topic = 500;
  double ad_mean_len = 16.0;
  double query_mean_len = 5.0;
  double bidword_mean_len = 3.0;
  double noise_prob = 0.3;
  double popularity_skew = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const GenSpec& spec);
void from_json(const nlohmann::json& j, GenSpec& spec);

enum class Split : std::uint8_t { kTrain, kValid, kTest };
enum class PairKind : std::uint8_t { kAQ, kAB, kQB };

const char* to_string(Split split);
const char* to_string(PairKind kind);

struct Pair {
  Tokens source;
  Tokens target;
  int topic = 0;
  bool noisy = false;
  Split split = Split::kTrain;

  friend bool operator==(const Pair&, const Pair&) = default;
};

// The three paired datasets. For aq pairs the source is the ad and the target
// the query; ab and qb pairs carry the bidword as target.
struct TriCorpus {
  std::vector<Pair> aq;
  std::vector<Pair> ab;
  std::vector<Pair> qb;

  std::vector<Pair>& pairs(PairKind kind);
  const std::vector<Pair>& pairs(PairKind kind) const;
  std::vector<Pair> select(PairKind kind, Split split) const;

  friend bool operator==(const TriCorpus&, const TriCorpus&) = default;
};

// Topic grammar: each topic owns disjoint content-token pools (topic words and
// per-concept words); function words are shared by every topic.
struct Grammar {
  struct Concept {
    Tokens words;
    std::vector<Tokens> bidwords;
  };
  struct Topic {
    Tokens words;
    std::vector<Concept> concepts;
  };

  std::vector<Topic> topics;
  Tokens function_words;
  std::unordered_map<std::string, int> token_topic;  // content tokens only

  // Topic owning `token`, or -1 for function words and unknown tokens.
  int topic_of(const std::string& token) const;
};

struct RankedBidword {
  Tokens tokens;
  int topic = 0;
};

Grammar build_grammar(const GenSpec& spec);

// All bidword phrases of the grammar in popularity order (index 0 is the most
// popular). The order is a seeded permutation, independent of topic.
std::vector<RankedBidword> popularity_ranking(const Grammar& grammar,
                                              std::uint64_t seed);

TriCorpus generate_corpus(const GenSpec& spec);

// With probability `noise_prob` replaces a pair's target by an off-topic
// bidword drawn with weight (rank + 1)^-skew from `ranking`, and flags it.
// An infinite skew always picks the most popular off-topic bidword.
std::vector<Pair> inject_noise(std::vector<Pair> pairs, double noise_prob,
                               double popularity_skew,
                               const std::vector<RankedBidword>& ranking,
                               Rng& rng);

// Assigns valid_n and test_n pairs of every kind to the valid/test splits by a
// seeded permutation; the rest become train.
TriCorpus split_corpus(TriCorpus corpus, std::size_t valid_n,
                       std::size_t test_n, std::uint64_t seed);

// {aq|ab|qb}.{train|valid|test}.tsv, one "source\ttarget\ttopic\tnoisy" per line.
void save_corpus(const TriCorpus& corpus, const std::filesystem::path& dir);
TriCorpus load_corpus(const std::filesystem::path& dir);

std::string join(const Tokens& tokens);
Tokens split_whitespace(const std::string& text);

}  // namespace trident::corpus
