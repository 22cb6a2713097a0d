#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "lift3d/random.hpp"

using lift3d::Rng;

// Known-answer vectors for Philox4x32-10 from the Random123 distribution.
TEST(Rng, PhiloxKnownAnswerZeroKey) {
  Rng rng(0, 0);
  EXPECT_EQ(rng.next_u32(), 0x6627e8d5u);
  EXPECT_EQ(rng.next_u32(), 0xe169c58du);
  EXPECT_EQ(rng.next_u32(), 0xbc57ac4cu);
  EXPECT_EQ(rng.next_u32(), 0x9b00dbd8u);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  Rng c(43);
  Rng d(42);
  int equal = 0;
  for (int i = 0; i < 100; ++i) equal += c.next_u64() == d.next_u64();
  EXPECT_LT(equal, 2);
}

TEST(Rng, StreamsDiffer) {
  Rng base(7);
  Rng s1 = base.fork(1), s2 = base.fork(2);
  int equal = 0;
  for (int i = 0; i < 100; ++i) equal += s1.next_u64() == s2.next_u64();
  EXPECT_LT(equal, 2);
}

TEST(Rng, UniformMoments) {
  Rng rng(1);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sum2 += u * u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
  EXPECT_NEAR(sum2 / n - (sum / n) * (sum / n), 1.0 / 12.0, 0.002);
}

TEST(Rng, NormalMoments) {
  Rng rng(2);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double z = rng.normal();
    sum += z;
    sum2 += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sum2 / n, 1.0, 0.015);
}

TEST(Rng, UniformIndexCoversRange) {
  Rng rng(3);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.uniform_index(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
  EXPECT_EQ(rng.uniform_index(1), 0u);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng rng(4);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  rng.shuffle(std::span<int>(v));
  std::set<int> s(v.begin(), v.end());
  EXPECT_EQ(s.size(), 10u);
}
