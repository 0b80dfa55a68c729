#include "support.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <gtest/gtest.h>

using namespace gctl;

namespace {

ControlProblem random_problem(std::mt19937_64& rng, double eps, RunningCost f) {
  return ControlProblem(fixtures::random_potential(rng), Domain::interval(-2, 2), eps, Region::interval(1.4, 1.8), f);
}

}  // namespace

TEST(Assemble, ZeroCostLeavesK) {
  const auto p = triple_well_problem(0.5, 0.0);
  for (const Basis& b : {make_indicator_basis(p, 0.2, 0.01), make_committor_basis(p, triple_well_cores(), 0.01)}) {
    const auto m = assemble(p, b);
    EXPECT_EQ(m.F.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(m.Lambda.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LE((m.G - m.K).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Assemble, IndicatorCostIsCellAverage) {
  // Flat potential: the mu-average over a cell is the plain average, known in closed form.
  const double f0 = 0.1, f1 = 0.7, c = 0.3, H = 0.1;
  const ControlProblem p(fixtures::flat_potential(), Domain::interval(0, 1.2), 0.5, Region::interval(0.9, 1.1),
                         RunningCost::quadratic(f0, f1, {c, 0.0}));
  const auto b = make_indicator_basis(p, H, 0.001);
  const auto m = assemble(p, b);
  for (Eigen::Index i = 0; i < m.n_states(); ++i)
    for (Eigen::Index j = 0; j < m.n_states(); ++j) {
      if (i != j) {
        EXPECT_EQ(m.F(i, j), 0.0);
      }
    }
  for (int i = 0; i < 9; ++i) {
    const double a = i * H, e = a + H;
    const double exact = f0 + f1 * (std::pow(e - c, 3) - std::pow(a - c, 3)) / (3 * H);
    // the shared vertex at the target edge belongs to the target, an O(h) effect on the last cell
    EXPECT_NEAR(m.F(i, i), exact, i == 8 ? 1e-3 : 1e-5) << i;
  }
}

TEST(Assemble, CommittorCostHasOverlapTerms) {
  const auto p = triple_well_problem(0.5, 0.08);
  const auto m = assemble(p, make_committor_basis(p, triple_well_cores(), 0.01));
  EXPECT_GT(m.F(0, 1), 1e-4);
  EXPECT_GT(m.F(1, 2), 1e-4);
  EXPECT_NEAR(m.F.row(0).sum(), 0.08, 1e-12);  // committors sum to one
  EXPECT_GE(m.K(0, 1), 0.0);
  EXPECT_GE(m.K(1, 2), 0.0);
}

TEST(Fva, FlatPotentialRates) {
  const double eps = 0.3, H = 0.1;
  const auto p = fixtures::flat_problem(eps, 0.1);
  const auto fva = fva_generator(p, make_cells(p, H), false);
  for (Eigen::Index i = 0; i + 1 < fva.K.rows(); ++i) {
    EXPECT_NEAR(fva.K(i, i + 1), eps / (H * H), 1e-10);
    EXPECT_NEAR(fva.K(i + 1, i), eps / (H * H), 1e-10);
  }
}

TEST(Fva, ArrheniusFaceFormula) {
  const auto p = triple_well_problem(0.5, 0.08);
  const double H = 0.1, beta = 1 / p.epsilon;
  const auto cells = make_cells(p, H);
  const auto fva = fva_generator(p, cells, false);
  for (std::size_t i = 0; i + 1 < cells.n_cells(); ++i) {
    const double xi = -5 + (i + 0.5) * H, xf = xi + 0.5 * H;
    const double expect = 1 / (beta * H * H) * std::exp(-beta * (p.potential.value(xf) - p.potential.value(xi)));
    EXPECT_NEAR(fva.K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i + 1)), expect, 1e-12 * expect);
  }
}

TEST(Fva, StationaryAndReversible) {
  const auto p = triple_well_problem(0.5, 0.08);
  for (bool merge : {false, true}) {
    const auto fva = fva_generator(p, make_cells(p, 0.1), merge);
    const Mat flux = fva.pi.asDiagonal() * fva.K;
    EXPECT_LE((fva.pi.transpose() * fva.K).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((flux - flux.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Fva, SemigroupOfCellChain) {
  const auto p = triple_well_problem(0.5, 0.08);
  const Mat K = fva_generator(p, make_cells(p, 0.2), false).K;
  std::vector<double> tau, err;
  for (double t : {4e-3, 2e-3, 1e-3}) {
    const Mat P = (t * K).exp();
    tau.push_back(t);
    err.push_back(((P - Mat::Identity(K.rows(), K.cols())) / t - K).cwiseAbs().maxCoeff());
  }
  EXPECT_GE(fit_order(tau, err), 0.9);
}

TEST(Galerkin, IndicatorProjectionOfFineSemigroup) {
  // (P^tau - P^0)/tau -> <chi_i, L chi_j>/pi_i with P^tau_ij = <chi_i, e^{tau L} chi_j>/pi_i on the fine grid.
  // Vertices on cell edges are shared, so P^0 is the normalized mass matrix rather than I.
  const auto p = triple_well_problem(0.5, 0.08);
  const auto b = make_indicator_basis(p, 0.2, 0.05);
  const Mat L = Mat(b.op->matrix());
  const auto n = static_cast<Eigen::Index>(b.n_states());
  Vec pi(n);
  const Vec one = Vec::Ones(L.rows());
  for (Eigen::Index i = 0; i < n; ++i) pi[i] = inner_product_mu(b.grid, b.chi[static_cast<std::size_t>(i)], one);
  Mat Kp(n, n), P0(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      P0(i, j) = inner_product_mu(b.grid, b.chi[static_cast<std::size_t>(i)], b.chi[static_cast<std::size_t>(j)]) / pi[i];
      Kp(i, j) = inner_product_mu(b.grid, b.chi[static_cast<std::size_t>(i)], L * b.chi[static_cast<std::size_t>(j)]) / pi[i];
    }
  std::vector<double> tau, err;
  for (double t : {4e-5, 2e-5, 1e-5}) {
    const Mat E = (t * L).exp();
    Mat P(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        P(i, j) = inner_product_mu(b.grid, b.chi[static_cast<std::size_t>(i)], E * b.chi[static_cast<std::size_t>(j)]) / pi[i];
    tau.push_back(t);
    err.push_back(((P - P0) / t - Kp).cwiseAbs().maxCoeff());
  }
  EXPECT_GE(fit_order(tau, err), 0.9);
  EXPECT_LT(err.back(), err.front());
}

TEST(GeneratorCondition, ZeroCostAndIndicatorAlwaysHold) {
  const auto p = triple_well_problem(0.5, 0.0);
  EXPECT_TRUE(check_generator_condition(assemble(p, make_committor_basis(p, triple_well_cores(), 0.01))).is_generator);
  for (double s : {0.01, 0.5, 5.0}) {
    const auto ps = triple_well_problem(0.5, s);
    EXPECT_TRUE(check_generator_condition(assemble(ps, make_indicator_basis(ps, 0.2, 0.01))).is_generator) << s;
  }
}

TEST(GeneratorCondition, CommittorThresholdNearPointTwo) {
  const auto p = triple_well_problem(0.5, 0.08);
  const auto b = make_committor_basis(p, triple_well_cores(), 0.01);
  const double s = constant_cost_threshold(p, b);
  EXPECT_GE(s, 0.1);
  EXPECT_LE(s, 0.3);
  EXPECT_TRUE(check_generator_condition(assemble(p.with_cost(RunningCost::constant(0.99 * s)), b)).is_generator);
  const auto bad = check_generator_condition(assemble(p.with_cost(RunningCost::constant(1.01 * s)), b));
  EXPECT_FALSE(bad.is_generator);
  EXPECT_LT(bad.max_violation, 0.0);
}

TEST(DiscreteSystem, ZeroCostGivesOnes) {
  const auto p = triple_well_problem(0.5, 0.0);
  const auto phi = solve_discrete_system(assemble(p, make_indicator_basis(p, 0.2, 0.01)));
  EXPECT_LE((phi.array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(DiscreteSystem, TwoStateClosedForm) {
  for (double a : {0.3, 1.0, 4.0}) {
    const double b = 0.7, sigma = 0.08, eps = 0.5;
    Mat K(2, 2);
    K << -a, a, b, -b;
    Mat F = Mat::Zero(2, 2);
    F(0, 0) = sigma;
    Vec pi(2);
    pi << b / (a + b), a / (a + b);
    const auto m = make_model(K, F, pi, Mat(), eps, BasisKind::indicator);
    EXPECT_NEAR(solve_discrete_system(m)[0], a / (a + sigma / eps), 1e-12);
  }
}

TEST(DiscreteSystem, IndicatorResidualVanishes) {
  const auto p = triple_well_problem(0.5, 0.08);
  const auto m = assemble(p, make_indicator_basis(p, 0.1, 0.01));
  EXPECT_LE(galerkin_residual(m, solve_discrete_system(m)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(DiscreteSystem, CommittorValueAtCoreCentres) {
  const auto p = triple_well_problem(0.5, 0.08);
  const auto b = make_committor_basis(p, triple_well_cores(), 0.01);
  const Vec W = -p.epsilon * solve_discrete_system(assemble(p, b)).array().log();
  const auto ref = solve_linear_bvp(p, 0.01);
  const auto& g = ref.grid;
  EXPECT_NEAR(W[0], ref.W[static_cast<Eigen::Index>(g.nearest({-3.4, 0}))], 0.1 * W[0]);
  EXPECT_NEAR(W[1], ref.W[static_cast<Eigen::Index>(g.nearest({0.0, 0}))], 0.1 * W[1]);
}

TEST(Invariants, RandomPotentialsBothBases) {
  std::mt19937_64 rng(11);
  int checked = 0;
  for (int k = 0; k < 10; ++k)
    for (double eps : {0.25, 0.5, 1.0}) {
      const auto p = random_problem(rng, eps, RunningCost::quadratic(0.05, 0.1, {1.8, 0.0}));
      const auto mi = assemble(p, make_indicator_basis(p, 0.2, 0.01));
      const auto mc = assemble(p, make_committor_basis(p, {Region::interval(-2, -1.6), Region::interval(-0.2, 0.2)}, 0.01));
      for (const auto* m : {&mi, &mc}) {
        const auto inv = check_invariants(*m);
        EXPECT_LE(inv.worst(), 1e-10) << k << " " << eps << " " << to_string(m->kind);
        EXPECT_GT(inv.M_min_eigenvalue, 0.0);
        EXPECT_GE(inv.F_min, 0.0);
        ++checked;
      }
    }
  EXPECT_EQ(checked, 60);
}

TEST(Basis, RejectsMisalignedCells) {
  const auto p = triple_well_problem(0.5, 0.08);
  EXPECT_THROW(make_indicator_basis(p, 0.3, 0.01), ValidationError);
  EXPECT_THROW(make_indicator_basis(p, 0.15, 0.01), ValidationError);  // target edge 3.2 is not a cell edge
}
