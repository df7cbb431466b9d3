#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace jse;
using jse::testing::toy;

namespace {

InlpConfig inlp_cfg(std::uint64_t seed) {
  InlpConfig c;
  c.seed = seed;
  return c;
}

RlaceConfig rlace_cfg(std::uint64_t seed, Index rank = 1) {
  RlaceConfig c;
  c.seed = seed;
  c.rank = rank;
  return c;
}

double test_average(const LinearModel& m, const LabeledEmbeddings& test) { return evaluate(m, test).average; }

}  // namespace

TEST(Inlp, BasisIsOrthonormal) {
  for (double rho : {0.0, 0.9}) {
    const auto s = gen_toy(toy(rho, 40));
    const auto r = inlp_fit(s.train, s.val, inlp_cfg(1));
    EXPECT_GE(r.basis.rank(), 1);
    EXPECT_TRUE(orthonormal_check(r.basis.v, 1e-6));
    EXPECT_EQ(r.tests.size(), static_cast<std::size_t>(std::min<Index>(r.basis.rank() + 1, 20)));
  }
}

TEST(Inlp, RoundsReduceSpuriousAccuracyUntilStopping) {
  // Each accepted round should lower the spurious classifier's validation
  // accuracy. Sampling noise occasionally lets a later round score a little
  // higher while still beating the majority rule, so allow rare small rises.
  int accepted = 0, reduced = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    for (double rho : {0.0, 0.5, 0.9}) {
      const auto s = gen_toy(toy(rho, 40 + seed));
      const auto r = inlp_fit(s.train, s.val, inlp_cfg(seed));
      for (std::size_t k = 1; k < r.val_accuracy.size(); ++k) {
        if (!r.tests[k].decision) continue;
        ++accepted;
        reduced += r.val_accuracy[k] < r.val_accuracy[k - 1] ? 1 : 0;
        EXPECT_LT(r.val_accuracy[k], r.val_accuracy[k - 1] + 0.02) << "rho " << rho << " seed " << seed;
      }
    }
  }
  ASSERT_GT(accepted, 0);
  EXPECT_GE(static_cast<double>(reduced) / accepted, 0.95);
}

TEST(Inlp, RandomLabelsRarelyAcceptARound) {
  int with_round = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    ToyConfig cfg = toy(0.0, 3000 + seed);
    cfg.gamma_sp = 0.0;
    cfg.gamma_mt = 0.0;
    const auto s = gen_toy(cfg);
    const auto r = inlp_fit(s.train, s.val, inlp_cfg(seed));
    EXPECT_LE(r.basis.rank(), 1);
    with_round += r.basis.rank() == 1 ? 1 : 0;
  }
  // Binomial(100, 0.05) exceeds 10 with probability below 1.2%.
  EXPECT_LE(with_round, 10);
}

TEST(Inlp, RespectsMaxRounds) {
  const auto s = gen_toy(toy(0.9, 41));
  InlpConfig c = inlp_cfg(2);
  c.max_rounds = 1;
  EXPECT_LE(inlp_fit(s.train, s.val, c).basis.rank(), 1);
  c.max_rounds = 21;
  EXPECT_THROW(inlp_fit(s.train, s.val, c), DataError);
}

TEST(Rlace, ProjectionIsOrthogonalWithRankK) {
  for (Index k : {Index{1}, Index{2}}) {
    const auto s = gen_toy(toy(0.5, 50));
    const auto r = rlace_fit(s.train, s.val, rlace_cfg(3, k));
    const Eigen::MatrixXd& p = r.projection;
    EXPECT_LE((p * p - p).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LE((p - p.transpose()).cwiseAbs().maxCoeff(), 1e-6);
    const Eigen::MatrixXd removed = Eigen::MatrixXd::Identity(20, 20) - p;
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(removed);
    Index rank = 0;
    for (Index i = 0; i < svd.singularValues().size(); ++i) rank += svd.singularValues()[i] > 0.5 ? 1 : 0;
    EXPECT_EQ(rank, k);
    EXPECT_TRUE(orthonormal_check(r.removed, 1e-6));
    EXPECT_LE((removed - r.removed * r.removed.transpose()).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Rlace, StopsBelowTargetAccuracy) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto s = gen_toy(toy(0.9, 51 + seed));
    const auto r = rlace_fit(s.train, s.val, rlace_cfg(seed));
    ASSERT_TRUE(r.converged);
    EXPECT_LT(r.val_accuracy, 0.51);
    EXPECT_LE(r.iterations, 50000);
  }
}

TEST(Rlace, ReturnsFlaggedSnapshotWhenNotConverged) {
  const auto s = gen_toy(toy(0.9, 52));
  RlaceConfig c = rlace_cfg(4);
  c.max_iters = 1;
  c.evaluate_every = 1;
  const auto r = rlace_fit(s.train, s.val, c);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_LE((r.projection * r.projection - r.projection).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Rlace, ValidatesConfig) {
  const auto s = gen_toy(toy(0.0, 53));
  EXPECT_THROW(rlace_fit(s.train, s.val, rlace_cfg(0, 0)), DataError);
  EXPECT_THROW(rlace_fit(s.train, s.val, rlace_cfg(0, 20)), DataError);
}

TEST(Erm, SeparableSingleFeature) {
  // y_mt = 1{z_0 > 0} with a gap, so z_0 = 0 is a perfect separator.
  std::mt19937_64 rng(60);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  auto make = [&](Index n) {
    Matrix z = jse::testing::random_matrix(n, 3, rng);
    std::vector<int> ymt(static_cast<std::size_t>(n)), ysp(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      ymt[k] = static_cast<int>(i % 2);
      ysp[k] = static_cast<int>((i / 2) % 2);
      z(i, 0) = ymt[k] ? u(rng) : -u(rng);
    }
    return LabeledEmbeddings(z, ymt, ysp);
  };
  const auto train = make(800);
  const auto test = make(400);
  EXPECT_EQ(jse::testing::accuracy(test.z().col(0), test.y_mt()), 1.0);
  const auto m = erm_fit(train, train);
  EXPECT_GE(test_average(m, test), 99.0);
}

TEST(GwErm, WeightsAreInverseGroupFrequency) {
  const LabeledEmbeddings data(Matrix::Zero(8, 1), {0, 0, 0, 0, 0, 1, 1, 1}, {0, 0, 0, 0, 1, 0, 1, 1});
  // Group sizes 4, 1, 1, 2; weights proportional to 1/4, 1, 1, 1/2.
  const auto w = group_weights(data);
  const double raw_total = 4 * 0.25 + 1.0 + 1.0 + 2 * 0.5;
  const double scale = 8.0 / raw_total;
  EXPECT_NEAR(w[0], 0.25 * scale, 1e-12);
  EXPECT_NEAR(w[4], 1.0 * scale, 1e-12);
  EXPECT_NEAR(w[5], 1.0 * scale, 1e-12);
  EXPECT_NEAR(w[7], 0.5 * scale, 1e-12);
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0) / 8.0, 1.0, 1e-12);
}

TEST(GwErm, EmptyTrainingGroupIsAnError) {
  const auto s = gen_toy(toy(0.0, 61));
  const LabeledEmbeddings train(s.train.z(), s.train.y_mt(), s.train.y_mt());
  EXPECT_THROW(group_weights(train), EmptyGroupError);
  EXPECT_THROW(gw_erm_fit(train, s.val), EmptyGroupError);
}

TEST(GwErm, MatchesErmWithoutCorrelation) {
  double erm = 0.0, gw = 0.0;
  const int seeds = 10;
  for (int seed = 0; seed < seeds; ++seed) {
    const ToyConfig cfg = toy(0.0, 62 + static_cast<std::uint64_t>(seed));
    const auto s = gen_toy(cfg);
    const auto test = gen_toy_test(cfg);
    OptimizerConfig o = default_downstream_optimizer();
    o.seed = static_cast<std::uint64_t>(seed);
    erm += test_average(erm_fit(s.train, s.val, o), test) / seeds;
    gw += test_average(gw_erm_fit(s.train, s.val, o), test) / seeds;
  }
  EXPECT_NEAR(erm, gw, 0.5);
}

TEST(GwErm, ImprovesWorstGroupUnderCorrelation) {
  double erm = 0.0, gw = 0.0;
  const int seeds = 10;
  for (int seed = 0; seed < seeds; ++seed) {
    const ToyConfig cfg = toy(0.9, 70 + static_cast<std::uint64_t>(seed));
    const auto s = gen_toy(cfg);
    const auto test = gen_toy_test(cfg);
    OptimizerConfig o = default_downstream_optimizer();
    o.seed = static_cast<std::uint64_t>(seed);
    erm += evaluate(erm_fit(s.train, s.val, o), test).worst_group / seeds;
    gw += evaluate(gw_erm_fit(s.train, s.val, o), test).worst_group / seeds;
  }
  EXPECT_GT(gw, erm);
}
