#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace jse;
using jse::testing::toy;

namespace {

JseConfig jse_cfg(std::uint64_t seed) {
  JseConfig c;
  c.seed = seed;
  return c;
}

double val_accuracy(const LinearModel& m, const LabeledEmbeddings& d) {
  return 100.0 * jse::testing::accuracy(m.logits(d.z()), d.y_mt());
}

void expect_orthonormal_pair(const SubspaceResult& r) {
  EXPECT_TRUE(orthonormal_check(r.sp_basis.v, 1e-6));
  EXPECT_TRUE(orthonormal_check(r.mt_basis.v, 1e-6));
  if (r.d_sp() > 0 && r.d_mt() > 0) {
    EXPECT_LE((r.sp_basis.v.transpose() * r.mt_basis.v).cwiseAbs().maxCoeff(), 1e-6);
  }
}

}  // namespace

TEST(JseFit, OneSpuriousVectorAtRhoPointEight) {
  // A single projection removes the spurious concept; allow the usual test
  // error over a batch of seeds.
  int exactly_one = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = gen_toy(toy(0.8, 500 + seed));
    const auto r = jse_fit(s.train, s.val, jse_cfg(seed));
    exactly_one += r.d_sp() == 1 ? 1 : 0;
    expect_orthonormal_pair(r);
  }
  EXPECT_GE(exactly_one, 18);
}

TEST(JseFit, SpuriousVectorIsTheGeneratingAxis) {
  const auto s = gen_toy(toy(0.8, 501));
  const auto r = jse_fit(s.train, s.val, jse_cfg(1));
  ASSERT_GE(r.d_sp(), 1);
  EXPECT_GE(std::abs(r.sp_basis.v(0, 0)), 0.95);
  ASSERT_FALSE(r.sp_tests.empty());
  EXPECT_TRUE(r.sp_tests.front().accepted);
  EXPECT_EQ(r.sp_tests.front().vs_random.kind, TestKind::sp_vs_random);
  EXPECT_EQ(r.sp_tests.front().relative.kind, TestKind::sp_vs_mt_on_vsp);
}

TEST(JseFit, NoiseLabelsRarelyAcceptAnything) {
  int runs_with_vectors = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    ToyConfig cfg = toy(0.0, 900 + seed);
    cfg.gamma_sp = 0.0;
    cfg.gamma_mt = 0.0;
    const auto s = gen_toy(cfg);
    const auto r = jse_fit(s.train, s.val, jse_cfg(seed));
    runs_with_vectors += (r.d_sp() + r.d_mt()) > 0 ? 1 : 0;
  }
  EXPECT_LE(runs_with_vectors, 10);
}

TEST(JseFit, AcceptedVectorsAreMutuallyOrthogonal) {
  for (double rho : {0.0, 0.5, 0.9}) {
    const auto s = gen_toy(toy(rho, 17));
    const auto r = jse_fit(s.train, s.val, jse_cfg(3));
    expect_orthonormal_pair(r);
    // Main-task vectors are re-estimated after every outer step, so only the
    // final bases are checked, jointly.
    const Basis all = concat(r.sp_basis.v, r.mt_basis.v);
    EXPECT_TRUE(orthonormal_check(all, 1e-6)) << "rho " << rho;
  }
}

TEST(JseFit, ReportsFollowDecisionRule) {
  const auto s = gen_toy(toy(0.9, 18));
  const auto r = jse_fit(s.train, s.val, jse_cfg(4));
  for (const auto* tests : {&r.sp_tests, &r.mt_tests}) {
    for (const auto& t : *tests) {
      EXPECT_EQ(t.accepted, t.vs_random.decision && t.relative.decision);
      EXPECT_EQ(t.vs_random.side, Side::less);
    }
  }
  for (const auto& t : r.sp_tests) EXPECT_EQ(t.relative.side, Side::less);
  for (const auto& t : r.mt_tests) EXPECT_EQ(t.relative.side, Side::greater);
  // Accepted vectors form the bases, in order.
  Index k = 0;
  for (const auto& t : r.sp_tests) {
    if (t.accepted) {
      EXPECT_NEAR((t.v - r.sp_basis.v.col(k++)).norm(), 0.0, 1e-12);
    }
  }
  EXPECT_EQ(k, r.d_sp());
}

TEST(JseFit, AutoDeltaIsHeldFixed) {
  ToyConfig cfg = toy(0.9, 19);
  cfg.gamma_sp = 6.0;
  cfg.gamma_mt = 2.0;
  const auto s = gen_toy(cfg);
  JseConfig c = jse_cfg(5);
  c.delta = std::nullopt;
  const auto r = jse_fit(s.train, s.val, c);
  EXPECT_LT(r.delta, -0.1);
  for (const auto* tests : {&r.sp_tests, &r.mt_tests})
    for (const auto& t : *tests) EXPECT_EQ(t.relative.delta, r.delta);
}

TEST(JseFit, Deterministic) {
  const auto s = gen_toy(toy(0.7, 20));
  const auto a = jse_fit(s.train, s.val, jse_cfg(6));
  const auto b = jse_fit(s.train, s.val, jse_cfg(6));
  EXPECT_EQ(a.sp_basis.v, b.sp_basis.v);
  EXPECT_EQ(a.mt_basis.v, b.mt_basis.v);
}

TEST(JseFit, MaxDimCapsTheLoops) {
  const auto s = gen_toy(toy(0.0, 21));
  JseConfig c = jse_cfg(7);
  c.max_dim = 1;
  const auto r = jse_fit(s.train, s.val, c);
  EXPECT_LE(r.d_sp(), 1);
  EXPECT_LE(r.d_mt(), 1);
  c.max_dim = 21;
  EXPECT_THROW(jse_fit(s.train, s.val, c), DataError);
}

TEST(JseFit, EmptyValidationGroupIsAnError) {
  const auto s = gen_toy(toy(0.0, 22));
  const LabeledEmbeddings val(s.val.z(), s.val.y_mt(), s.val.y_mt());
  EXPECT_THROW(jse_fit(s.train, val, jse_cfg(0)), EmptyGroupError);
}

TEST(JseTransform, EmptyBasisLeavesDataUnchanged) {
  const auto s = gen_toy(toy(0.0, 23));
  SubspaceResult r;
  r.sp_basis = SubspaceBasis::empty(20, BasisKind::spurious);
  r.mt_basis = SubspaceBasis(Basis::Identity(20, 20), BasisKind::main_task);
  EXPECT_EQ(jse_transform(s.val.z(), r, TransformMode::remove_sp), s.val.z());
  EXPECT_LE((jse_transform(s.val.z(), r, TransformMode::keep_mt) - s.val.z()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_THROW(jse_transform(Matrix::Zero(3, 5), r, TransformMode::remove_sp), DataError);
}

TEST(JseTransform, RemovalIsIdempotent) {
  const auto s = gen_toy(toy(0.8, 24));
  const auto r = jse_fit(s.train, s.val, jse_cfg(8));
  const Matrix once = jse_transform(s.val.z(), r, TransformMode::remove_sp);
  EXPECT_LE((jse_transform(once, r, TransformMode::remove_sp) - once).cwiseAbs().maxCoeff(), 1e-10);
  const Eigen::MatrixXd p = jse_projection(r, TransformMode::remove_sp);
  EXPECT_LE((s.val.z() * p - once).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(JseTransform, RemovedConceptIsAtChance) {
  const auto s = gen_toy(toy(0.8, 25));
  const auto r = jse_fit(s.train, s.val, jse_cfg(9));
  ASSERT_GE(r.d_sp(), 1);
  const Matrix tr = jse_transform(s.train.z(), r, TransformMode::remove_sp);
  const Matrix va = jse_transform(s.val.z(), r, TransformMode::remove_sp);
  OptimizerConfig o;
  o.learning_rate = 0.1;
  const Vector v = r.sp_basis.v.col(0);
  const Direction fit = fit_1d_logreg(tr, s.train.y_sp(), va, s.val.y_sp(), v, o);
  const Vector logits = (va * v * fit.gamma).array() + fit.b;
  const double acc = jse::testing::accuracy(logits, s.val.y_sp());
  EXPECT_NEAR(acc, jse::testing::majority_rate(s.val.y_sp()), 0.02);
}

TEST(JseProperties, LoopOrderRobustness) {
  int agree = 0;
  std::map<Index, int> modes_mt, modes_sp;
  double avg_mt = 0.0, avg_sp = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ToyConfig cfg = toy(0.8, 500 + seed);
    const auto s = gen_toy(cfg);
    const auto test = gen_toy_test(cfg);
    JseConfig a = jse_cfg(seed);
    JseConfig b = a;
    b.loop_order = LoopOrder::sp_inner;
    const auto ra = jse_pipeline(s.train, s.val, test, a);
    const auto rb = jse_pipeline(s.train, s.val, test, b);
    agree += ra.subspaces.d_sp() == rb.subspaces.d_sp() ? 1 : 0;
    ++modes_mt[ra.subspaces.d_sp()];
    ++modes_sp[rb.subspaces.d_sp()];
    avg_mt += ra.summary.average / 20.0;
    avg_sp += rb.summary.average / 20.0;
  }
  auto mode = [](const std::map<Index, int>& m) {
    return std::max_element(m.begin(), m.end(), [](auto& x, auto& y) { return x.second < y.second; })->first;
  };
  EXPECT_EQ(mode(modes_mt), mode(modes_sp));
  EXPECT_GE(agree, 17);
  EXPECT_NEAR(avg_mt, avg_sp, 1.5);
}

TEST(JseProperties, RemovalDoesNotHurtWithoutStrongCorrelation) {
  for (double rho : {0.0, 0.25, 0.5}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto s = gen_toy(toy(rho, 700 + seed));
      const auto r = jse_fit(s.train, s.val, jse_cfg(seed));
      OptimizerConfig ds = default_downstream_optimizer();
      ds.seed = 3;
      const auto before = fit_logreg(s.train, Target::main_task, s.val, ds);
      const auto tr = s.train.with_z(jse_transform(s.train.z(), r, TransformMode::remove_sp));
      const auto va = s.val.with_z(jse_transform(s.val.z(), r, TransformMode::remove_sp));
      const auto after = fit_logreg(tr, Target::main_task, va, ds);
      EXPECT_GE(val_accuracy(after, va), val_accuracy(before, s.val) - 2.0) << "rho " << rho << " seed " << seed;
    }
  }
}

TEST(JsePipeline, KeepMainTaskMode) {
  const ToyConfig cfg = toy(0.8, 26);
  const auto s = gen_toy(cfg);
  JseConfig c = jse_cfg(10);
  c.transform_mode = TransformMode::keep_mt;
  const auto r = jse_pipeline(s.train, s.val, gen_toy_test(cfg), c);
  ASSERT_GE(r.subspaces.d_mt(), 1);
  EXPECT_GT(r.summary.average, 75.0);
}
