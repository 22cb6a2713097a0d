#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "engine_oracle.hpp"
#include "lift3d/engine.hpp"

using namespace lift3d;
using lift3d::oracle::default_ensemble;
using lift3d::oracle::expected_max_oracle;

namespace {

Demonstration demo(double q, std::uint64_t payload = 0) { return {0, payload, q, "test"}; }

}  // namespace

TEST(Annotator, EqualQualityIsEqual) {
  Rng rng(1);
  AnnotatorModel a;
  EXPECT_EQ(pairwise_choice(demo(0.4), demo(0.4), a, rng), Choice::equal);
  EXPECT_EQ(pairwise_choice(demo(0.4), demo(0.41), a, rng), Choice::equal);
  EXPECT_EQ(pairwise_choice(demo(0.4), demo(0.4), AnnotatorModel::perfect(), rng), Choice::equal);
}

TEST(Annotator, ZeroTemperatureIsArgmax) {
  Rng rng(2);
  AnnotatorModel a{0.0, 0.02, 0.0};
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(pairwise_choice(demo(0.7), demo(0.6), a, rng), Choice::left);
    EXPECT_EQ(pairwise_choice(demo(0.6), demo(0.7), a, rng), Choice::right);
  }
}

TEST(Annotator, LogisticWinRate) {
  Rng rng(3);
  AnnotatorModel a{0.1, 0.0, 0.0};
  int left = 0;
  const int trials = 10'000;
  for (int i = 0; i < trials; ++i) left += pairwise_choice(demo(0.6), demo(0.4), a, rng) == Choice::left;
  double expected = 1.0 / (1.0 + std::exp(-2.0));
  EXPECT_NEAR(double(left) / trials, expected, 0.01);
}

TEST(Knockout, NoiselessReturnsArgmaxForEveryOrder) {
  std::vector<double> q = {0.2, 0.9, 0.5, 0.7, 0.1};
  std::vector<std::size_t> perm(q.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(4);
  do {
    std::vector<Demonstration> c;
    for (auto i : perm) c.push_back(demo(q[i], i));
    Selection s = knockout_select(c, AnnotatorModel::perfect(), rng);
    EXPECT_EQ(c[s.best].payload, 1u);
    EXPECT_EQ(s.comparisons, q.size() - 1);
    EXPECT_EQ(s.rejected.size(), q.size() - 1);
    EXPECT_EQ(std::count(s.rejected.begin(), s.rejected.end(), s.best), 0);
  } while (std::next_permutation(perm.begin(), perm.end()));
}

TEST(Knockout, ComparisonCount) {
  Rng rng(5);
  for (int n : {2, 3, 8, 50}) {
    std::vector<Demonstration> c;
    for (int i = 0; i < n; ++i) c.push_back(demo(rng.uniform()));
    EXPECT_EQ(knockout_select(c, AnnotatorModel{}, rng).comparisons, std::size_t(n - 1));
  }
  std::vector<Demonstration> one = {demo(0.5)};
  EXPECT_THROW(knockout_select(one, AnnotatorModel{}, rng), Error);
}

TEST(Knockout, DeterministicPerSeed) {
  std::vector<Demonstration> c;
  for (int i = 0; i < 8; ++i) c.push_back(demo(0.1 * i + 0.05, i));
  Rng a(6), b(6);
  AnnotatorModel noisy{0.3, 0.02, 0.0};
  for (int t = 0; t < 20; ++t) {
    Selection x = knockout_select(c, noisy, a), y = knockout_select(c, noisy, b);
    EXPECT_EQ(x.best, y.best);
    EXPECT_EQ(x.rejected, y.rejected);
  }
}

TEST(Knockout, EqualKeepsEitherWithFairCoin) {
  Rng rng(7);
  std::vector<Demonstration> c = {demo(0.5, 0), demo(0.5, 1)};
  int first = 0;
  for (int i = 0; i < 10'000; ++i) first += knockout_select(c, AnnotatorModel{}, rng).best == 0;
  EXPECT_NEAR(first / 10'000.0, 0.5, 0.02);
}

TEST(Knockout, PairViolationRateFollowsLogisticModel) {
  Rng rng(8);
  AnnotatorModel a{0.1, 0.0, 0.0};
  std::vector<Demonstration> c = {demo(0.45), demo(0.55)};
  int violations = 0;
  const int trials = 20'000;
  for (int i = 0; i < trials; ++i) violations += c[knockout_select(c, a, rng).best].quality < 0.5;
  double p = 1.0 / (1.0 + std::exp(1.0));
  double se = std::sqrt(p * (1 - p) / trials);
  EXPECT_NEAR(double(violations) / trials, p, 4 * se);
}

TEST(RateAndGate, Examples) {
  Rng rng(9);
  AnnotatorModel a = AnnotatorModel::perfect();
  Rating r = rate_and_gate(demo(0.9), 0.8, a, rng);
  EXPECT_TRUE(r.accept);
  EXPECT_DOUBLE_EQ(r.value, 0.9);
  r = rate_and_gate(demo(0.7), 0.8, a, rng);
  EXPECT_FALSE(r.accept);
  EXPECT_DOUBLE_EQ(r.value, 0.7);
  EXPECT_TRUE(rate_and_gate(demo(0.8), 0.8, a, rng).accept);
  AnnotatorModel noisy{0.1, 0.0, 0.5};
  for (int i = 0; i < 200; ++i) {
    Rating x = rate_and_gate(demo(rng.uniform()), 0.0, noisy, rng);
    EXPECT_TRUE(x.accept);
    EXPECT_GE(x.value, 0.0);
    EXPECT_LE(x.value, 1.0);
  }
  EXPECT_THROW(rate_and_gate(demo(0.5), 1.5, a, rng), Error);
}

TEST(Tournament, NoiselessIsArgmaxWithBracketCount) {
  Rng rng(10);
  for (int n : {1, 2, 7, 50}) {
    std::vector<Demonstration> c;
    for (int i = 0; i < n; ++i) c.push_back(demo(rng.uniform(), i));
    Tournament t = tournament_rank(c, RewardModel{0.0}, rng);
    auto best = std::max_element(c.begin(), c.end(),
                                 [](auto &x, auto &y) { return x.quality < y.quality; });
    EXPECT_EQ(t.winner, std::size_t(best - c.begin()));
    EXPECT_EQ(t.comparisons, std::size_t(n - 1));
  }
  EXPECT_THROW(tournament_rank({}, RewardModel{}, rng), Error);
}

TEST(Tournament, StandardRegimeAgreement) {
  Rng rng(11);
  double agree = reward_agreement(RewardModel::standard(), default_ensemble(), 4.0, 100'000, rng);
  EXPECT_GE(agree, 0.65);
  EXPECT_LE(agree, 0.69);
  EXPECT_DOUBLE_EQ(reward_agreement(RewardModel{0.0}, default_ensemble(), 4.0, 1000, rng), 1.0);
}

TEST(Mixture, WeightsFollowMedianQuality) {
  auto w = mixture_weights(default_ensemble(), 4.0);
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-15);
  EXPECT_LT(w[0], w[2]);
  EXPECT_LT(w[2], w[1]);
  auto flat = mixture_weights(default_ensemble(), 0.0);
  for (double x : flat) EXPECT_NEAR(x, 1.0 / 3.0, 1e-15);
}

TEST(Engine, ExpectedMaxOfEightMatchesOrderStatistics) {
  EngineConfig c;
  c.iterations = 1;
  c.curriculum = {0.0};
  c.candidates = 8;
  c.inputs_per_iteration = 4000;
  c.input_difficulty_sd = 0.0;
  c.annotator = AnnotatorModel::perfect();
  c.elo_games_per_pair = 0;
  Rng rng(12);
  EngineReport r = run_engine(c, rng);
  ASSERT_EQ(r.iterations.size(), 1u);
  const auto &it = r.iterations[0];
  EXPECT_EQ(it.accepted, 4000u);
  EXPECT_EQ(it.preference_pairs, 4000u * 7u);
  double mean = it.mean_accepted_quality, var = 0.0;
  for (const auto &rec : r.records) var += (rec.chosen.quality - mean) * (rec.chosen.quality - mean);
  double se = std::sqrt(var / 3999.0 / 4000.0);
  double oracle = expected_max_oracle(default_ensemble(), 4.0, 8);
  EXPECT_NEAR(mean, oracle, 4.0 * se);
}

TEST(Engine, NoiselessRecordsRankChosenFirst) {
  EngineConfig c;
  c.annotator = AnnotatorModel::perfect();
  c.inputs_per_iteration = 100;
  c.iterations = 2;
  c.curriculum = {0.3, 0.4};
  c.elo_games_per_pair = 20;
  Rng rng(13);
  EngineReport r = run_engine(c, rng);
  for (const auto &rec : r.records) {
    EXPECT_GE(rec.rating, 0.0);
    EXPECT_LE(rec.rating, 1.0);
    for (const auto &rej : rec.rejected) {
      EXPECT_GE(rec.chosen.quality, rej.quality);
      EXPECT_NE(rec.chosen.payload, rej.payload);
    }
  }
}

TEST(Engine, BitReproducible) {
  EngineConfig c;
  c.recovery.enabled = true;
  c.recovery.candidates = 10;
  c.inputs_per_iteration = 50;
  c.elo_games_per_pair = 50;
  auto run = [&] {
    Rng rng(14);
    return run_engine(c, rng);
  };
  EngineReport a = run(), b = run();
  ASSERT_EQ(a.iterations.size(), b.iterations.size());
  for (std::size_t k = 0; k < a.iterations.size(); ++k) {
    EXPECT_EQ(a.iterations[k].accepted, b.iterations[k].accepted);
    EXPECT_EQ(a.iterations[k].mean_accepted_quality, b.iterations[k].mean_accepted_quality);
    EXPECT_EQ(a.iterations[k].elo, b.iterations[k].elo);
    EXPECT_EQ(a.iterations[k].recovery_accepts, b.iterations[k].recovery_accepts);
  }
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].chosen.quality, b.records[i].chosen.quality);
    EXPECT_EQ(a.records[i].rating, b.records[i].rating);
  }
}

TEST(Engine, CurriculumRaisesAcceptedQuality) {
  EngineConfig c;
  c.iterations = 5;
  c.curriculum = {0.3, 0.4, 0.5, 0.55, 0.6};
  c.inputs_per_iteration = 300;
  c.elo_games_per_pair = 100;
  for (std::uint64_t seed : {15u, 16u, 17u}) {
    Rng rng(seed);
    EngineReport r = run_engine(c, rng);
    for (std::size_t k = 1; k < r.iterations.size(); ++k) {
      EXPECT_GE(r.iterations[k].mean_accepted_quality, r.iterations[k - 1].mean_accepted_quality);
      EXPECT_GE(r.iterations[k].current_median_quality, r.iterations[k - 1].current_median_quality);
    }
    // The policy improves, so its share of the mix and its rating grow.
    EXPECT_GT(r.iterations.back().current_share, r.iterations.front().current_share);
    EXPECT_GT(r.iterations.back().elo_gain, 0.0);
  }
}

TEST(Engine, SourceMixSumsToOne) {
  EngineConfig c;
  c.inputs_per_iteration = 100;
  c.elo_games_per_pair = 10;
  Rng rng(18);
  for (const auto &it : run_engine(c, rng).iterations) {
    double total = 0.0;
    for (const auto &s : it.source_mix) total += s.fraction;
    if (it.accepted > 0) EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_LE(it.accepted, it.collected);
  }
}

TEST(Engine, InvalidConfig) {
  Rng rng(19);
  EngineConfig c;
  c.curriculum = {0.5, 0.4, 0.6, 0.7, 0.8};
  EXPECT_THROW(run_engine(c, rng), Error);
  c = {};
  c.curriculum = {0.5};
  EXPECT_THROW(run_engine(c, rng), Error);
  c = {};
  c.candidates = 1;
  EXPECT_THROW(run_engine(c, rng), Error);
  c = {};
  c.curriculum[4] = 1.2;
  EXPECT_THROW(run_engine(c, rng), Error);
}

TEST(BestOfN, MeanSelectedQualityGrowsWithN) {
  Rng rng(20);
  std::vector<MeanCi> cis;
  for (int n : {2, 4, 8, 16, 50}) {
    auto q = best_of_n_quality(default_ensemble(), 4.0, AnnotatorModel::perfect(), n, 1000, rng);
    cis.push_back(bootstrap_mean_ci(q, rng));
    EXPECT_NEAR(cis.back().mean, expected_max_oracle(default_ensemble(), 4.0, n), 0.02);
  }
  for (std::size_t i = 1; i < cis.size(); ++i) {
    EXPECT_GE(cis[i].mean, cis[i - 1].mean);
    EXPECT_LT(cis[i].lo, cis[i].mean);
    EXPECT_GT(cis[i].hi, cis[i].mean);
  }
}

TEST(BestOfN, RecoveryYieldGrowsWithN) {
  Rng rng(21);
  AnnotatorModel a;
  double y2 = recovery_yield(low_quality_generator(), RewardModel::standard(), a, 0.5, 2, 1000, rng);
  double y50 = recovery_yield(low_quality_generator(), RewardModel::standard(), a, 0.5, 50, 1000, rng);
  EXPECT_GT(y50, y2);
}

TEST(Bootstrap, ConstantDataHasZeroWidth) {
  Rng rng(22);
  MeanCi ci = bootstrap_mean_ci(std::vector<double>(50, 0.25), rng);
  EXPECT_DOUBLE_EQ(ci.mean, 0.25);
  EXPECT_DOUBLE_EQ(ci.lo, 0.25);
  EXPECT_DOUBLE_EQ(ci.hi, 0.25);
  EXPECT_THROW(bootstrap_mean_ci({}, rng), Error);
}
