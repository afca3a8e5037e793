#include <gtest/gtest.h>

#include <set>

#include "trident/rng.hpp"

using namespace trident;

TEST(DeriveSeed, StableAndStreamSpecific) {
  EXPECT_EQ(derive_seed(1, "corpus"), derive_seed(1, "corpus"));
  EXPECT_NE(derive_seed(1, "corpus"), derive_seed(2, "corpus"));
  std::set<std::uint64_t> seen;
  for (const char* s : {"corpus", "init/aq", "init/qa", "batch/phase1", "batch/phase2", "gumbel"}) {
    EXPECT_TRUE(seen.insert(derive_seed(7, s)).second) << s;
  }
}

TEST(DeriveSeed, StreamsAreIndependentOfConsumptionOrder) {
  Rng a = make_rng(5, "x");
  Rng b = make_rng(5, "y");
  const auto first = a();
  for (int i = 0; i < 100; ++i) b();
  Rng a2 = make_rng(5, "x");
  EXPECT_EQ(a2(), first);
}

TEST(OpenUniform, StrictlyInsideUnitInterval) {
  Rng rng(3);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = open_uniform(rng);
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  // Mean of U(0,1) within 4 standard errors.
  EXPECT_NEAR(sum / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
}
