#include "support.hpp"

#include <gtest/gtest.h>

using namespace gctl;

namespace {

GeneratorModel triple_well_committor_model(double sigma = 0.08) {
  const auto p = triple_well_problem(0.5, sigma);
  return assemble(p, make_committor_basis(p, triple_well_cores(), 0.01));
}

GeneratorModel two_state(double a, double b, double sigma, double eps) {
  Mat K(2, 2);
  K << -a, a, b, -b;
  Mat F = Mat::Zero(2, 2);
  F(0, 0) = sigma;
  Vec pi(2);
  pi << b / (a + b), a / (a + b);
  return make_model(K, F, pi, Mat(), eps, BasisKind::indicator);
}

}  // namespace

TEST(ControlledGenerator, HandExample) {
  Mat G(2, 2);
  G << -1, 1, 2, -2;
  Vec v(2);
  v << 1, 2;
  Mat expect(2, 2);
  expect << -2, 2, 1, -1;
  EXPECT_LE((controlled_generator(G, v) - expect).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((controlled_generator(G, Vec::Ones(2)) - G).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ControlledGenerator, RowSumsVanish) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(0.1, 3.0);
  for (int k = 0; k < 20; ++k) {
    const Mat G = fixtures::random_generator(rng, 5);
    Vec v(5);
    for (auto& x : v) x = U(rng);
    EXPECT_LE(controlled_generator(G, v).rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ControlledGenerator, RejectsNonPositiveStrategy) {
  Mat G(2, 2);
  G << -1, 1, 2, -2;
  Vec v(2);
  v << 1, 0;
  EXPECT_THROW(controlled_generator(G, v), ValidationError);
  EXPECT_THROW(running_cost(G, v, 0.5), ValidationError);
}

TEST(RunningCost, KnownValues) {
  Mat G(2, 2);
  G << -1, 1, 2, -2;
  Vec v(2);
  v << 1, 2;
  const double eps = 0.5;
  const Vec k = running_cost(G, v, eps);
  EXPECT_NEAR(k[0], eps * (2 * (std::log(2.0) - 1) + 1), 1e-15);
  EXPECT_NEAR(k[1], eps * 2 * (0.5 * (std::log(0.5) - 1) + 1), 1e-15);
  EXPECT_LE(running_cost(G, Vec::Ones(2), eps).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LE(running_cost(G, Vec::Constant(2, 3.7), eps).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(RunningCost, AlgebraicKlIdentity) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(0.1, 3.0);
  for (int k = 0; k < 50; ++k) {
    const Mat G = fixtures::random_generator(rng, 4);
    Vec v(4);
    for (auto& x : v) x = U(rng);
    EXPECT_LE(running_cost_identity_error(G, v, 0.7), 1e-10);
  }
}

TEST(TiltedStationary, KnownValues) {
  Vec pi(2), v(2);
  pi << 2.0 / 3, 1.0 / 3;
  v << 1, 2;
  const Vec pv = tilted_stationary(pi, v);
  EXPECT_NEAR(pv[0], 1.0 / 3, 1e-15);
  EXPECT_NEAR(pv[1], 2.0 / 3, 1e-15);
  EXPECT_LE((tilted_stationary(pi, Vec::Ones(2)) - pi).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(TiltedStationary, StationaryAndReversibleForControlledChain) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.2, 2.0);
  for (int k = 0; k < 20; ++k) {
    const auto [pi, K] = fixtures::random_reversible(rng, 5);
    Vec v(5);
    for (auto& x : v) x = U(rng);
    const Mat Gv = controlled_generator(K, v);
    const Vec pv = tilted_stationary(pi, v);
    EXPECT_LE((pv.transpose() * Gv).cwiseAbs().maxCoeff(), 1e-10);
    const Mat flux = pv.asDiagonal() * Gv;
    EXPECT_LE((flux - flux.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(StrategyScaling, OnlyRatiosMatter) {
  std::mt19937_64 rng(4);
  const auto [pi, K] = fixtures::random_reversible(rng, 4);
  Vec v(4);
  v << 0.3, 1.2, 0.8, 2.0;
  const double c = 7.5;
  EXPECT_LE((controlled_generator(K, v) - controlled_generator(K, c * v)).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LE((running_cost(K, v, 0.5) - running_cost(K, c * v, 0.5)).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LE((tilted_stationary(pi, v) - tilted_stationary(pi, c * v)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Bellman, ResidualVanishesAtOptimum) {
  const auto m = triple_well_committor_model();
  const auto r = solve_mdp(m);
  ASSERT_EQ(r.status, MdpStatus::ok);
  EXPECT_LE(bellman_residual(m, r.mdp->W_hat, r.mdp->v_star).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Bellman, PerturbedStrategiesAreSuboptimal) {
  const auto m = triple_well_committor_model();
  const auto r = solve_mdp(m);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    Vec v = r.mdp->v_star;
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] *= 1 + 0.1 * U(rng);
    const Vec res = bellman_residual(m, r.mdp->W_hat, v);
    EXPECT_GE(res.minCoeff(), -1e-10);
    EXPECT_GT(res.maxCoeff(), 0.0);
  }
}

TEST(Bellman, ZeroCostUnitStrategy) {
  const auto m = triple_well_committor_model(0.0);
  EXPECT_LE(bellman_residual(m, Vec::Zero(3), Vec::Ones(3)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SolveMdp, ZeroCost) {
  const auto m = triple_well_committor_model(0.0);
  const auto r = solve_mdp(m);
  ASSERT_TRUE(r.mdp);
  EXPECT_LE(r.mdp->W_hat.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((r.mdp->v_star.array() - 1).abs().maxCoeff(), 1e-12);
  EXPECT_LE((r.mdp->G_v - m.G).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SolveMdp, TwoStateClosedForm) {
  const auto r = solve_mdp(two_state(1.0, 0.5, 0.08, 0.5));
  EXPECT_NEAR(r.W_hat[0], -0.5 * std::log(1.0 / 1.16), 1e-12);
  EXPECT_EQ(r.W_hat[1], 0.0);
}

TEST(SolveMdp, GeneratorViolationKeepsGalerkinSolution) {
  const auto m = triple_well_committor_model(0.5);
  const auto r = solve_mdp(m);
  EXPECT_EQ(r.status, MdpStatus::generator_violated);
  EXPECT_FALSE(r.mdp);
  EXPECT_FALSE(r.generator.is_generator);
  ASSERT_EQ(r.phi_hat.size(), 3);
  EXPECT_LE(galerkin_residual(m, r.phi_hat).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Mfpt, Basics) {
  Mat G(2, 2);
  G << -0.4, 0.4, 1.0, -1.0;
  EXPECT_NEAR(mfpt(G, 1)[0], 1 / 0.4, 1e-14);
  EXPECT_LE(mfpt(G, std::vector<Eigen::Index>{0, 1}).cwiseAbs().maxCoeff(), 0.0);
  Mat absorbing = Mat::Zero(3, 3);
  absorbing(0, 2) = 1;
  absorbing(0, 0) = -1;
  EXPECT_THROW(mfpt(absorbing, 2), NumericalError);
}

TEST(Mfpt, ControlSpeedsUpTripleWell) {
  const auto p = triple_well_problem(0.5, 0.08);
  const auto m = assemble(p, make_indicator_basis(p, 0.1, 0.01));
  const auto r = solve_mdp(m);
  ASSERT_TRUE(r.mdp);
  const Vec t = mfpt(m.K, m.target()), tv = mfpt(r.mdp->G_v, m.target());
  for (Eigen::Index i = 0; i < m.target(); ++i) EXPECT_LT(tv[i], t[i]) << i;
}

TEST(SmallCost, TwoStateFirstOrder) {
  const double a = 0.8;
  for (double s : {1e-3, 1e-4, 1e-5}) {
    const auto r = solve_mdp(two_state(a, 0.3, s, 0.5));
    EXPECT_NEAR(r.W_hat[0] / s, 1 / a, 2 * s / (a * a * 0.5));
  }
}

TEST(SmallCost, RatioErrorShrinksWithSigma) {
  const auto p = triple_well_problem(0.5, 1e-2);
  const auto b = make_indicator_basis(p, 0.05, 0.01);
  double prev = std::numeric_limits<double>::infinity();
  for (double s : {1e-2, 1e-3, 1e-4}) {
    const auto m = assemble(p.with_cost(RunningCost::constant(s)), b);
    const auto r = solve_mdp(m);
    const Vec t = mfpt(m.K, m.target());
    double e = 0.0;
    for (Eigen::Index i = 0; i < m.target(); ++i) e = std::max(e, std::abs(r.W_hat[i] / s - t[i]) / t[i]);
    EXPECT_LT(e, prev) << s;
    prev = e;
  }
  EXPECT_LE(prev, 0.02);
}
