#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "trident/baselines.hpp"

using namespace trident;
using baseline::Mode;
using corpus::Pair;
using corpus::Tokens;

namespace {

std::vector<Pair> toy_pairs() {
  return {
      {{"cheap", "red", "shoes"}, {"red", "shoes"}, 0, false},
      {{"cheap", "flights", "paris"}, {"paris", "flights"}, 1, false},
      {{"red", "running", "shoes"}, {"running", "shoes"}, 0, false},
      {{"paris", "hotel"}, {"paris", "hotel"}, 1, false},
  };
}

// Loop-level PPMI with the same within-sentence co-occurrence counting.
std::map<std::pair<std::string, std::string>, double> ppmi_oracle(
    const std::vector<Tokens>& sentences) {
  std::map<std::pair<std::string, std::string>, double> count;
  std::map<std::string, double> marg;
  double total = 0.0;
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (i == j) continue;
        count[{s[i], s[j]}] += 1.0;
        marg[s[i]] += 1.0;
        total += 1.0;
      }
    }
  }
  std::map<std::pair<std::string, std::string>, double> out;
  for (const auto& [k, c] : count) {
    out[k] = std::max(0.0, std::log(c * total / (marg[k.first] * marg[k.second])));
  }
  return out;
}

}  // namespace

TEST(TfIdf, HandComputedVectors) {
  const auto index = baseline::build_index(toy_pairs(), Mode::kTfIdf);
  // df: cheap 2, red 2, shoes 2, flights 1, paris 2, running 1, hotel 1; N = 4.
  const std::map<std::string, double> idf{{"cheap", std::log(2.0)}, {"red", std::log(2.0)},
                                          {"shoes", std::log(2.0)}, {"flights", std::log(4.0)},
                                          {"paris", std::log(2.0)}, {"running", std::log(4.0)},
                                          {"hotel", std::log(4.0)}};
  ASSERT_EQ(index.terms.size(), idf.size());
  for (const auto& [term, value] : idf) {
    EXPECT_NEAR(index.idf(index.term_index.at(term)), value, 1e-15) << term;
  }
  const auto v = baseline::vectorize(index, {"red", "red", "hotel", "unseen"});
  EXPECT_NEAR(v(index.term_index.at("red")), 2.0 * std::log(2.0), 1e-15);
  EXPECT_NEAR(v(index.term_index.at("hotel")), std::log(4.0), 1e-15);
  EXPECT_NEAR(v.sum(), 2.0 * std::log(2.0) + std::log(4.0), 1e-15);
}

TEST(TfIdf, RanksByCosine) {
  const auto index = baseline::build_index(toy_pairs(), Mode::kTfIdf);
  const auto r = baseline::match(index, {"running", "shoes"}, 4);
  ASSERT_EQ(r.entries.size(), 4u);
  EXPECT_EQ(r.entries.front(), 2u);
  EXPECT_EQ(r.bidwords.front(), (Tokens{"running", "shoes"}));
  for (std::size_t i = 1; i < r.scores.size(); ++i) EXPECT_LE(r.scores[i], r.scores[i - 1]);
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    const double want = baseline::cosine(baseline::vectorize(index, {"running", "shoes"}),
                                         index.vectors.row(r.entries[i]));
    EXPECT_DOUBLE_EQ(r.scores[i], want);
  }
  // Ties keep insertion order: both zero-similarity entries follow in order.
  EXPECT_EQ(r.entries[2], 1u);
  EXPECT_EQ(r.entries[3], 3u);
}

TEST(TfIdf, ZeroQueryReturnsNothing) {
  const auto index = baseline::build_index(toy_pairs(), Mode::kTfIdf);
  const auto r = baseline::match(index, {"unknown", "words"}, 3);
  EXPECT_TRUE(r.zero_query);
  EXPECT_TRUE(r.entries.empty());
  EXPECT_THROW(baseline::match(index, {"red"}, 0), std::invalid_argument);
}

TEST(Match, DistinctSkipsRepeatedBidwords) {
  auto pairs = toy_pairs();
  pairs.push_back({{"cheap", "red", "shoes"}, {"red", "shoes"}, 0, false});
  const auto index = baseline::build_index(pairs, Mode::kTfIdf);
  const Tokens q{"cheap", "red", "shoes"};
  const auto plain = baseline::match(index, q, 2);
  EXPECT_EQ(plain.bidwords[0], plain.bidwords[1]);
  const auto distinct = baseline::match(index, q, 2, true);
  EXPECT_NE(distinct.bidwords[0], distinct.bidwords[1]);
}

TEST(Cosine, ScaleInvarianceAndZero) {
  ad::RowVector a(3), b(3);
  a << 1.0, 2.0, -1.0;
  b << 0.5, -1.0, 4.0;
  EXPECT_NEAR(baseline::cosine(a, b), baseline::cosine(3.0 * a, 0.25 * b), 1e-15);
  EXPECT_NEAR(baseline::cosine(a, a), 1.0, 1e-15);
  EXPECT_EQ(baseline::cosine(a, ad::RowVector::Zero(3)), 0.0);
}

TEST(Ppmi, TwoWordFixture) {
  const auto e = baseline::ppmi_embeddings({{"x", "y"}}, 2);
  // PPMI = [[0, log 2], [log 2, 0]]: eigenvalues +-log 2, only the positive kept.
  const double s = std::sqrt(std::log(2.0) / 2.0);
  EXPECT_NEAR(e.vectors(e.index("x"), 0), s, 1e-12);
  EXPECT_NEAR(e.vectors(e.index("y"), 0), s, 1e-12);
  EXPECT_NEAR(e.vectors.col(1).norm(), 0.0, 1e-12);
  EXPECT_EQ(e.index("z"), -1);
}

TEST(Ppmi, ColumnsAreScaledEigenvectorsOfOracleMatrix) {
  const std::vector<Tokens> sentences{{"a", "b", "c"}, {"a", "b"}, {"c", "d", "e"},
                                      {"d", "e"},      {"a", "e"}, {"b", "c", "d"}};
  const auto e = baseline::ppmi_embeddings(sentences, 3);
  const auto oracle = ppmi_oracle(sentences);
  const auto v = static_cast<Eigen::Index>(e.words.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(v, v);
  for (const auto& [k, value] : oracle) m(e.index(k.first), e.index(k.second)) = value;

  double previous = INFINITY;
  for (Eigen::Index c = 0; c < 3; ++c) {
    const Eigen::VectorXd col = e.vectors.col(c);
    const double lambda = col.squaredNorm();  // |u| = 1 so |col|^2 = lambda
    EXPECT_LE(lambda, previous + 1e-12);
    previous = lambda;
    if (lambda > 1e-12) {
      EXPECT_TRUE((m * col).isApprox(lambda * col, 1e-9)) << "column " << c;
      Eigen::Index arg = 0;
      col.cwiseAbs().maxCoeff(&arg);
      EXPECT_GT(col(arg), 0.0);
    }
  }
  for (Eigen::Index a = 0; a < 3; ++a)
    for (Eigen::Index b = a + 1; b < 3; ++b)
      EXPECT_NEAR(e.vectors.col(a).dot(e.vectors.col(b)), 0.0, 1e-9);
}

TEST(Pooling, MaxDominatesMeanAndIgnoresUnknownWords) {
  const auto pairs = toy_pairs();
  std::vector<Tokens> sentences;
  for (const auto& p : pairs) sentences.push_back(p.source);
  const auto emb = baseline::ppmi_embeddings(sentences, 4);
  const auto mean = baseline::build_index(pairs, Mode::kMeanPool, emb);
  const auto max = baseline::build_index(pairs, Mode::kMaxPool, emb);
  const Tokens q{"cheap", "paris", "hotel", "unseen"};
  const auto vm = baseline::vectorize(mean, q);
  const auto vx = baseline::vectorize(max, q);
  EXPECT_TRUE((vx.array() >= vm.array() - 1e-15).all());
  ad::RowVector want = ad::RowVector::Zero(4);
  for (const auto& w : {"cheap", "paris", "hotel"}) want += emb.vectors.row(emb.index(w));
  EXPECT_TRUE(vm.isApprox(want / 3.0, 1e-12));
  EXPECT_TRUE(baseline::match(mean, {"unseen"}, 2).zero_query);
  EXPECT_THROW(baseline::build_index(pairs, Mode::kMeanPool), std::invalid_argument);
}

TEST(Modes, NamesRoundTrip) {
  for (auto m : {Mode::kTfIdf, Mode::kMeanPool, Mode::kMaxPool}) {
    EXPECT_EQ(baseline::mode_from_string(baseline::to_string(m)), m);
  }
  EXPECT_THROW(baseline::mode_from_string("bm25"), std::invalid_argument);
}

TEST(Persistence, ReloadedIndexRanksTheSame) {
  const auto dir = std::filesystem::temp_directory_path() / "trident_baseline_test";
  std::filesystem::create_directories(dir);
  const auto pairs = toy_pairs();
  std::vector<Tokens> sentences;
  for (const auto& p : pairs) sentences.push_back(p.source);
  for (auto mode : {Mode::kTfIdf, Mode::kMaxPool}) {
    const auto index = mode == Mode::kTfIdf
                           ? baseline::build_index(pairs, mode)
                           : baseline::build_index(pairs, mode, baseline::ppmi_embeddings(sentences, 4));
    const auto path = dir / (std::string(baseline::to_string(mode)) + ".idx");
    baseline::save_index(path, index);
    const auto loaded = baseline::load_index(path);
    EXPECT_EQ(loaded.mode, index.mode);
    EXPECT_EQ(loaded.bidwords, index.bidwords);
    for (const Tokens& q : {Tokens{"cheap", "shoes"}, Tokens{"paris"}, Tokens{"red", "hotel"}}) {
      const auto a = baseline::match(index, q, 3);
      const auto b = baseline::match(loaded, q, 3);
      EXPECT_EQ(a.entries, b.entries);
      ASSERT_EQ(a.scores.size(), b.scores.size());
      // Stored as float32.
      for (std::size_t i = 0; i < a.scores.size(); ++i) EXPECT_NEAR(a.scores[i], b.scores[i], 1e-6);
    }
  }
  std::filesystem::remove_all(dir);
}
