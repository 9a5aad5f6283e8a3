#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "brute_force.hpp"
#include "rateval/agreement.hpp"
#include "test_util.hpp"

using namespace rateval;
using namespace rateval::agreement;

TEST(WeightMatrix, SmallCases) {
  auto w2 = weight_matrix(2);
  EXPECT_EQ(w2(0, 0), 0.0);
  EXPECT_EQ(w2(0, 1), 1.0);
  auto w3 = weight_matrix(3);
  const double want[3][3] = {{0, 0.25, 1}, {0.25, 0, 0.25}, {1, 0.25, 0}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(w3(i, j), want[i][j]);
  EXPECT_EQ(weight_matrix(7)(0, 6), 1.0);
  EXPECT_THROW(weight_matrix(1), AnalysisError);
}

TEST(WeightMatrix, SymmetricZeroDiagonalUnitBounded) {
  for (int k = 2; k <= 10; ++k) {
    auto w = weight_matrix(k);
    for (int i = 0; i < k; ++i) {
      EXPECT_EQ(w(i, i), 0.0);
      for (int j = 0; j < k; ++j) {
        EXPECT_EQ(w(i, j), w(j, i));
        EXPECT_GE(w(i, j), 0.0);
        EXPECT_LE(w(i, j), 1.0);
      }
    }
  }
}

TEST(BuildTable, OppositeExtremes) {
  const std::vector<ScorePair> pairs{{0, 6}, {6, 0}};
  auto t = build_table(pairs, {0, 6});
  EXPECT_EQ(t.observed(0, 6), 1.0);
  EXPECT_EQ(t.observed(6, 0), 1.0);
  EXPECT_EQ(t.observed.sum(), 2.0);
  for (auto [i, j] : std::vector<std::pair<int, int>>{{0, 0}, {0, 6}, {6, 0}, {6, 6}}) EXPECT_EQ(t.expected(i, j), 0.5);
  EXPECT_NEAR(t.expected.sum(), 2.0, 1e-12);
}

TEST(BuildTable, SinglePairAndErrors) {
  const std::vector<ScorePair> one{{3, 3}};
  auto t = build_table(one, {0, 6});
  EXPECT_EQ(t.observed(3, 3), 1.0);
  EXPECT_EQ(t.expected(3, 3), 1.0);
  EXPECT_THROW(build_table(std::vector<ScorePair>{}, {0, 6}), AnalysisError);
  EXPECT_THROW(build_table(std::vector<ScorePair>{{0, 7}}, {0, 6}), IntegrityError);
}

TEST(BuildTable, MassConservation) {
  std::mt19937_64 rng(11);
  std::vector<ScorePair> pairs;
  for (int i = 0; i < 50; ++i) pairs.emplace_back(test_util::draw(rng, 0, 6), test_util::draw(rng, 0, 6));
  auto t = build_table(pairs, {0, 6});
  EXPECT_EQ(t.observed.sum(), 50.0);
  EXPECT_NEAR(t.expected.sum(), 50.0, 1e-9);
}

TEST(Qwk, HandCases) {
  EXPECT_EQ(qwk(std::vector<ScorePair>{{1, 2}, {2, 3}, {3, 4}, {4, 5}}, {0, 6}), 5.0 / 7.0);
  EXPECT_EQ(qwk(std::vector<ScorePair>{{0, 6}, {6, 0}}, {0, 6}), -1.0);
  EXPECT_EQ(qwk(std::vector<ScorePair>{{1, 1}, {4, 4}, {2, 2}}, {0, 6}), 1.0);
}

TEST(Qwk, DegenerateDenominatorIsAnError) {
  EXPECT_THROW(qwk(std::vector<ScorePair>{{3, 3}, {3, 3}}, {0, 6}), UndefinedMetric);
}

TEST(Qwk, ObservedIndexingDiffersFromFullScale) {
  const std::vector<ScorePair> pairs{{2, 3}, {3, 4}, {4, 4}, {3, 2}};
  const double full = qwk(pairs, {0, 6});
  const double observed = qwk(pairs, {0, 6}, CategoryIndexing::observed);
  EXPECT_NEAR(full, oracle::qwk(pairs, 0, 6), 1e-12);
  EXPECT_NEAR(observed, oracle::qwk(pairs, 2, 4), 1e-12);
}

TEST(Qwk, MatchesBruteForceOnRandomPairs) {
  std::mt19937_64 rng(20240601);
  int compared = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = test_util::draw(rng, 1, 50);
    std::vector<ScorePair> pairs;
    for (int i = 0; i < n; ++i) pairs.emplace_back(test_util::draw(rng, 0, 6), test_util::draw(rng, 0, 6));
    const double want = oracle::qwk(pairs, 0, 6);
    if (!std::isfinite(want)) {
      EXPECT_THROW(qwk(pairs, {0, 6}), UndefinedMetric);
      continue;
    }
    EXPECT_NEAR(qwk(pairs, {0, 6}), want, 1e-12);
    ++compared;
  }
  EXPECT_GT(compared, 190);
}

TEST(Qwk, SymmetricAndTranslationInvariant) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ScorePair> pairs, swapped, shifted;
    const int n = test_util::draw(rng, 2, 40);
    for (int i = 0; i < n; ++i) {
      ScorePair p{test_util::draw(rng, 0, 6), test_util::draw(rng, 0, 6)};
      pairs.push_back(p);
      swapped.emplace_back(p.second, p.first);
      shifted.emplace_back(p.first + 3, p.second + 3);
    }
    try {
      const double q = qwk(pairs, {0, 6});
      EXPECT_NEAR(q, qwk(swapped, {0, 6}), 1e-12);
      EXPECT_NEAR(q, qwk(shifted, {3, 9}), 1e-12);
      EXPECT_LE(q, 1.0);
    } catch (const UndefinedMetric&) {
    }
  }
}

TEST(JointDistribution, Examples) {
  auto point = joint_distribution(std::vector<ScorePair>{{0, 1}, {0, 1}});
  EXPECT_EQ(point.joint.rows(), 1u);
  EXPECT_EQ(point.joint(0, 0), 1.0);
  auto diag = joint_distribution(std::vector<ScorePair>{{0, 0}, {1, 1}});
  EXPECT_EQ(diag.joint(0, 0), 0.5);
  EXPECT_EQ(diag.joint(0, 1), 0.0);
  EXPECT_EQ(diag.marginal_x, (std::vector<double>{0.5, 0.5}));
  auto indep = joint_distribution(std::vector<ScorePair>{{0, 0}, {0, 1}, {1, 0}, {1, 1}});
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(indep.joint(r, c), indep.marginal_x[r] * indep.marginal_y[c]);
  EXPECT_THROW(joint_distribution(std::vector<ScorePair>{}), AnalysisError);
}

TEST(Entropy, ClosedForms) {
  EXPECT_EQ(entropy(std::vector<double>{1.0}), 0.0);
  EXPECT_NEAR(entropy(std::vector<double>{0.5, 0.5}), std::log(2.0), 1e-15);
  EXPECT_NEAR(entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}), std::log(4.0), 1e-15);
  EXPECT_NEAR(entropy(std::vector<double>{0.5, 0.5}, 2.0), 1.0, 1e-15);
  EXPECT_THROW(entropy(std::vector<double>{0.5, 0.6}), AnalysisError);
  EXPECT_THROW(entropy(std::vector<double>{-0.1, 1.1}), AnalysisError);
}

TEST(MutualInformation, ClosedForms) {
  auto indep = joint_distribution(std::vector<ScorePair>{{0, 0}, {0, 1}, {1, 0}, {1, 1}});
  EXPECT_NEAR(mutual_information(indep), 0.0, 1e-15);
  auto diag = joint_distribution(std::vector<ScorePair>{{0, 0}, {1, 1}});
  EXPECT_NEAR(mutual_information(diag), std::log(2.0), 1e-15);
  auto anti = joint_distribution(std::vector<ScorePair>{{0, 1}, {1, 0}});
  EXPECT_NEAR(mutual_information(anti), std::log(2.0), 1e-15);
  auto broken = diag;
  broken.marginal_x[0] = 0.7;
  EXPECT_THROW(mutual_information(broken), AnalysisError);
}

TEST(Nmi, Examples) {
  EXPECT_NEAR(nmi(std::vector<ScorePair>{{0, 0}, {3, 3}, {5, 5}}), 1.0, 1e-12);
  EXPECT_NEAR(nmi(std::vector<ScorePair>{{0, 1}, {0, 1}, {1, 0}, {1, 0}}), 1.0, 1e-12);
  EXPECT_NEAR(nmi(std::vector<ScorePair>{{0, 0}, {0, 1}, {1, 0}, {1, 1}}), 0.0, 1e-12);
}

TEST(Nmi, DegenerateConventions) {
  EXPECT_EQ(nmi(std::vector<ScorePair>{{2, 4}, {2, 4}}), 1.0);
  EXPECT_EQ(nmi(std::vector<ScorePair>{{2, 4}, {2, 5}}), 0.0);
  EXPECT_EQ(nmi(std::vector<ScorePair>{{1, 4}, {2, 4}}), 0.0);
}

TEST(Nmi, MatchesBruteForceSymmetricBaseInvariant) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = test_util::draw(rng, 1, 50);
    std::vector<ScorePair> pairs, swapped;
    for (int i = 0; i < n; ++i) {
      ScorePair p{test_util::draw(rng, 0, 6), test_util::draw(rng, 0, 6)};
      pairs.push_back(p);
      swapped.emplace_back(p.second, p.first);
    }
    const double v = nmi(pairs);
    EXPECT_NEAR(v, oracle::nmi(pairs, std::exp(1.0)), 1e-12);
    EXPECT_NEAR(v, nmi(swapped), 1e-12);
    EXPECT_NEAR(v, nmi(pairs, 2.0), 1e-12);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}
