#include <gtest/gtest.h>

#include <filesystem>

#include "trident/tokenizer.hpp"

using namespace trident;
using corpus::Pair;
using corpus::Tokens;
using corpus::TriCorpus;

namespace {

TriCorpus corpus_of(const std::vector<Tokens>& sides) {
  TriCorpus c;
  for (std::size_t i = 0; i + 1 < sides.size(); i += 2) {
    c.aq.push_back(Pair{sides[i], sides[i + 1]});
  }
  return c;
}

}  // namespace

TEST(BuildVocab, MinFrequencyFilter) {
  const auto c = corpus_of({{"a", "a", "a"}, {"a", "a", "b"}});  // a:5, b:1
  const auto v = tok::build_vocab(c, 2);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_FALSE(v.contains("b"));
  EXPECT_EQ(v.id("b"), tok::kUnk);
  EXPECT_EQ(v.size(), tok::kNumSpecials + 1);
  const auto all = tok::build_vocab(c, 1);
  EXPECT_TRUE(all.contains("a"));
  EXPECT_TRUE(all.contains("b"));
}

TEST(BuildVocab, FrequencyThenLexicographicOrder) {
  const auto c = corpus_of({{"zeta", "beta", "alpha"}, {"zeta", "beta", "alpha", "zeta"}});
  const auto v = tok::build_vocab(c, 1);
  EXPECT_EQ(v.id("zeta"), 4);
  EXPECT_EQ(v.id("alpha"), 5);
  EXPECT_EQ(v.id("beta"), 6);
  EXPECT_EQ(tok::build_vocab(c, 1), v);
  EXPECT_THROW(tok::build_vocab(TriCorpus{}, 1), std::invalid_argument);
}

TEST(BuildVocab, CountsEverySide) {
  TriCorpus c;
  c.aq.push_back(Pair{{"ad"}, {"query"}});
  c.ab.push_back(Pair{{"ad"}, {"bid"}});
  c.qb.push_back(Pair{{"query"}, {"word"}});
  const auto v = tok::build_vocab(c, 1);
  for (const char* w : {"ad", "query", "bid", "word"}) EXPECT_TRUE(v.contains(w)) << w;
}

TEST(EncodeDecode, RoundTripUnknownAndEmpty) {
  const tok::Vocab v({"red", "shoes", "cheap"});
  const Tokens s{"cheap", "red", "shoes", "red"};
  const auto ids = tok::encode(v, s);
  EXPECT_EQ(ids, (std::vector<int>{6, 4, 5, 4}));
  EXPECT_EQ(tok::decode(v, ids), s);
  EXPECT_EQ(tok::encode(v, {"blue"}), std::vector<int>{tok::kUnk});
  EXPECT_TRUE(tok::encode(v, {}).empty());
  EXPECT_TRUE(tok::decode(v, std::vector<int>{}).empty());
  const std::vector<int> with_specials{tok::kBos, 4, tok::kPad, 5, tok::kEos};
  EXPECT_EQ(tok::decode(v, with_specials), (Tokens{"red", "shoes"}));
  EXPECT_THROW(tok::decode(v, std::vector<int>{7}), std::out_of_range);
  EXPECT_THROW(v.token(-1), std::out_of_range);
}

TEST(EncodeDecode, InjectiveOnInVocabSequences) {
  const tok::Vocab v({"a", "b", "c"});
  const std::vector<Tokens> seqs{{"a"}, {"b"}, {"a", "b"}, {"b", "a"}, {"a", "a"}, {"c", "b", "a"}};
  for (std::size_t i = 0; i < seqs.size(); ++i)
    for (std::size_t j = i + 1; j < seqs.size(); ++j)
      EXPECT_NE(tok::encode(v, seqs[i]), tok::encode(v, seqs[j]));
}

TEST(Vocab, RejectsDuplicatesAndPersists) {
  EXPECT_THROW(tok::Vocab({"a", "a"}), std::invalid_argument);
  const tok::Vocab v({"x", "y@@", "z"});
  const auto path = std::filesystem::temp_directory_path() / "trident_vocab_test.txt";
  v.save(path);
  EXPECT_EQ(tok::Vocab::load(path), v);
  std::filesystem::remove(path);
  EXPECT_TRUE(tok::is_special(tok::kUnk));
  EXPECT_FALSE(tok::is_special(4));
}

TEST(Subwords, ZeroMergesKeepsWholeWords) {
  const auto m = tok::SubwordMerges::learn({{"lower", "low"}}, 0);
  EXPECT_TRUE(m.empty());
  EXPECT_EQ(m.segment({"lower", "low"}), (Tokens{"lower", "low"}));
}

TEST(Subwords, SegmentationJoinsBack) {
  const std::vector<Tokens> sentences{{"lower", "lowest", "low"}, {"newer", "new", "low"}};
  const auto m = tok::SubwordMerges::learn(sentences, 6);
  EXPECT_EQ(m.merges().size(), 6u);
  for (const auto& s : sentences) {
    const auto units = m.segment(s);
    EXPECT_GE(units.size(), s.size());
    EXPECT_EQ(tok::join_subwords(units), s);
  }
  // The most frequent pair is merged first.
  EXPECT_EQ(m.merges().front(), (std::pair<std::string, std::string>{"l", "o"}));
}
