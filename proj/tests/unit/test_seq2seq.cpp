#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "finite_diff.hpp"
#include "reference_model.hpp"
#include "tiny.hpp"
#include "trident/seq2seq.hpp"
#include "trident/tokenizer.hpp"

using namespace trident;
using ad::Matrix;

TEST(Attention, SingleKeyReturnsItsValue) {
  Matrix q(1, 1), k(1, 1), v(1, 1);
  q << 1;
  k << 1;
  v << 2;
  EXPECT_DOUBLE_EQ(model::scaled_dot_attention(q, k, v, 1.0)(0, 0), 2.0);
}

TEST(Attention, IdenticalKeysAverageValues) {
  Matrix q = Matrix::Random(2, 3);
  Matrix k = Matrix::Ones(4, 3);
  Matrix v = Matrix::Random(4, 2);
  const Matrix out = model::scaled_dot_attention(q, k, v, 3.0);
  for (int r = 0; r < 2; ++r) EXPECT_TRUE(out.row(r).isApprox(v.colwise().mean()));
}

TEST(Attention, HandComputedSoftmaxBlend) {
  Matrix q(1, 2), k(2, 2), v(2, 2);
  q << 1, 0;
  k << 1, 0, 0, 1;
  v << 1, 0, 0, 1;
  const double a = std::exp(1.0 / std::sqrt(2.0));
  const double w0 = a / (a + 1.0);
  const Matrix out = model::scaled_dot_attention(q, k, v, 2.0);
  EXPECT_NEAR(out(0, 0), w0, 1e-12);
  EXPECT_NEAR(out(0, 1), 1.0 - w0, 1e-12);
}

TEST(Attention, ShapeMismatchThrows) {
  EXPECT_THROW(model::scaled_dot_attention(Matrix::Ones(1, 2), Matrix::Ones(2, 3),
                                           Matrix::Ones(2, 1), 2.0),
               std::invalid_argument);
  EXPECT_THROW(model::scaled_dot_attention(Matrix::Ones(1, 2), Matrix::Ones(2, 2),
                                           Matrix::Ones(3, 1), 2.0),
               std::invalid_argument);
}

TEST(MultiHead, IdentityProjectionsReduceToSingleHead) {
  model::AttentionParams p;
  for (auto* w : {&p.wq, &p.wk, &p.wv, &p.wo}) w->value = Matrix::Identity(3, 3);
  Matrix q = Matrix::Random(2, 3), k = Matrix::Random(4, 3), v = Matrix::Random(4, 3);
  EXPECT_TRUE(model::multi_head_attention(q, k, v, p, 1)
                  .isApprox(model::scaled_dot_attention(q, k, v, 3.0)));
}

TEST(MultiHead, ZeroValuesGiveZeroOutput) {
  auto m = tiny::model(6, 1);
  const auto& p = m.encoder[0].self_attn;
  EXPECT_TRUE(model::multi_head_attention(Matrix::Random(3, 8), Matrix::Random(2, 8),
                                          Matrix::Zero(2, 8), p, 2)
                  .isZero());
}

TEST(MultiHead, MatchesPerHeadComposition) {
  auto m = tiny::model(6, 2);
  const auto& p = m.decoder[0].cross_attn;
  Matrix q = Matrix::Random(3, 8), k = Matrix::Random(5, 8), v = Matrix::Random(5, 8);
  const Matrix qp = q * p.wq.value, kp = k * p.wk.value, vp = v * p.wv.value;
  Matrix concat(3, 8);
  for (int h = 0; h < 2; ++h) {
    Matrix s = qp.middleCols(4 * h, 4) * kp.middleCols(4 * h, 4).transpose() / 2.0;
    for (int r = 0; r < 3; ++r) {
      s.row(r) = (s.row(r).array() - s.row(r).maxCoeff()).exp();
      s.row(r) /= s.row(r).sum();
    }
    concat.middleCols(4 * h, 4) = s * vp.middleCols(4 * h, 4);
  }
  EXPECT_TRUE(model::multi_head_attention(q, k, v, p, 2).isApprox(concat * p.wo.value, 1e-12));
}

TEST(Model, UniformWhenOutputProjectionIsZero) {
  auto m = tiny::model(7, 3);
  m.output.value.setZero();
  const std::vector<int> src{4, 5}, tgt{6, 4};
  // Two target tokens plus EOS.
  EXPECT_NEAR(model::sequence_logprob(m, src, tgt), 3.0 * std::log(1.0 / 7.0), 1e-12);
  const auto dist = model::next_token_dist(m, src, tgt);
  for (Eigen::Index i = 0; i < dist.size(); ++i) EXPECT_NEAR(dist(i), 1.0 / 7.0, 1e-12);
}

TEST(Model, MatchesReferenceImplementation) {
  for (unsigned seed = 1; seed <= 5; ++seed) {
    auto m = tiny::model(9, seed);
    const std::vector<int> src{4, 7, 8, 5}, tgt{6, 4, 8};
    EXPECT_NEAR(model::sequence_logprob(m, src, tgt), ref::sequence_logprob(m, src, tgt), 1e-9);
    EXPECT_NEAR(model::prefix_logprob(m, src, tgt), ref::prefix_logprob(m, src, tgt), 1e-9);
  }
}

TEST(Model, ChainRuleOverNextTokenDistributions) {
  auto m = tiny::model(8, 4);
  const std::vector<int> src{4, 5, 6}, tgt{7, 5};
  double chain = 0.0;
  std::vector<int> prefix;
  for (int y : {7, 5, tok::kEos}) {
    const auto dist = model::next_token_dist(m, src, prefix);
    EXPECT_NEAR(dist.sum(), 1.0, 1e-6);
    EXPECT_GT(dist.minCoeff(), 0.0);
    chain += std::log(dist(y));
    prefix.push_back(y);
  }
  EXPECT_NEAR(model::sequence_logprob(m, src, tgt), chain, 1e-9);
  EXPECT_LE(model::sequence_logprob(m, src, tgt), 0.0);
}

TEST(Model, EmptySequencesThrow) {
  auto m = tiny::model(6, 5);
  const std::vector<int> some{4}, none;
  EXPECT_THROW(model::sequence_logprob(m, none, some), std::invalid_argument);
  EXPECT_THROW(model::sequence_logprob(m, some, none), std::invalid_argument);
}

TEST(Model, EmbeddingPathMatchesTokenPath) {
  auto m = tiny::model(8, 6);
  const std::vector<int> src{4, 6, 7}, tgt{5, 5};
  Matrix rows(3, 8);
  for (int i = 0; i < 3; ++i) rows.row(i) = m.embedding.value.row(src[i]);
  EXPECT_EQ(model::forward_from_embeddings(m, rows, tgt), model::sequence_logprob(m, src, tgt));
  const double zero = model::forward_from_embeddings(m, Matrix::Zero(2, 8), tgt);
  EXPECT_TRUE(std::isfinite(zero));
  EXPECT_THROW(model::forward_from_embeddings(m, Matrix::Zero(2, 5), tgt), std::invalid_argument);
}

TEST(Model, GradientsMatchFiniteDifferences) {
  auto m = tiny::model(7, 7);
  const std::vector<int> src{4, 5, 6}, tgt{6, 4};
  const auto report = fd::check(
      [&](ad::Tape& t) { return model::sequence_logprob(t, m, src, tgt); }, m.parameters(), 6);
  EXPECT_TRUE(report.ok()) << report.mismatches.size() << " of " << report.checked;
}

TEST(Model, EmbeddingInputGradientsMatchFiniteDifferences) {
  auto m = tiny::model(7, 8);
  ad::Parameter rows{"rows", Matrix::Random(3, 8), true};
  const std::vector<int> tgt{5, 6};
  const auto report = fd::check(
      [&](ad::Tape& t) { return model::forward_from_embeddings(t, m, t.bind(rows), tgt); },
      {&rows}, 100);
  EXPECT_TRUE(report.ok());
}

TEST(Model, ConfigValidation) {
  auto c = tiny::config(6);
  c.heads = 3;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = tiny::config(0);
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Checkpoint, RoundTripAtFloatPrecision) {
  auto b = tiny::bundle(9, 10);
  const auto path = std::filesystem::temp_directory_path() / "trident_ckpt_test.ckpt";
  const model::Direction dirs[] = {model::Direction::kAB, model::Direction::kBQ};
  model::save_checkpoint(path, b, dirs);
  model::ModelBundle loaded;
  const auto read = model::load_checkpoint(path, loaded);
  ASSERT_EQ(read.size(), 2u);
  EXPECT_EQ(loaded.config, b.config);
  for (auto d : dirs) {
    auto expected = b[d];
    model::round_to_checkpoint_precision(expected);
    const auto e = expected.parameters();
    const auto g = loaded[d].parameters();
    ASSERT_EQ(e.size(), g.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
      EXPECT_EQ(e[i]->name, g[i]->name);
      EXPECT_EQ(e[i]->value, g[i]->value);
    }
  }
  std::filesystem::remove(path);
}

TEST(Bundle, DirectionsHaveIndependentInitialisation) {
  const auto b = model::init_bundle(tiny::config(6), 3);
  EXPECT_NE(b[model::Direction::kAB].embedding.value, b[model::Direction::kBA].embedding.value);
  const auto again = model::init_bundle(tiny::config(6), 3);
  EXPECT_EQ(b[model::Direction::kAB].output.value, again[model::Direction::kAB].output.value);
  for (auto d : model::kAllDirections) {
    EXPECT_EQ(model::direction_from_string(model::to_string(d)), d);
  }
}
