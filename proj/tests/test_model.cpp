#include "support.hpp"

#include <gtest/gtest.h>

using namespace gctl;

TEST(TripleWell, MinimaNearPlusMinusThreeFourAndZero) {
  const Potential V = make_triple_well();
  for (double seed : {-3.4, 0.0, 3.4}) {
    const double x = refine_minimum_1d(V, seed);
    EXPECT_LE(std::abs(x - seed), 0.05) << seed;
    EXPECT_LE(std::abs(V.derivative(x)), 1e-8);
  }
}

TEST(TripleWell, OuterWellsDeeperOnFineGrid) {
  // Brute-force minima on a 1e-4 grid, independent of the Newton refinement.
  const Potential V = make_triple_well();
  auto grid_min = [&](double a, double b) {
    double best = std::numeric_limits<double>::infinity();
    for (double x = a; x <= b; x += 1e-4) best = std::min(best, V.value(x));
    return best;
  };
  const double left = grid_min(-4.5, -2.0), mid = grid_min(-1.0, 1.0), right = grid_min(2.0, 4.5);
  EXPECT_LT(left, mid);
  EXPECT_LT(right, mid);
  EXPECT_NEAR(left, right, 1e-12);
}

TEST(Potential, AnalyticGradientsMatchCentralDifferences) {
  std::mt19937_64 rng(1);
  std::vector<Potential> pots{make_triple_well(), Potential::double_well(1.3, 0.8),
                              Potential::tabulated({-2, -1, 0, 1, 2}, {4, 1, 0, 1.5, 4}),
                              Potential::polynomial(2, {{1.0, 4, 0}, {-2.0, 2, 0}, {0.5, 0, 2}, {0.3, 1, 1}})};
  std::uniform_real_distribution<double> U(-1.9, 1.9);
  const double h = 1e-5;
  for (const auto& V : pots) {
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      const Point p{U(rng), V.dim() == 2 ? U(rng) : 0.0};
      const Point g = V.gradient(p);
      for (int a = 0; a < V.dim(); ++a) {
        Point pp = p, pm = p;
        pp[a] += h;
        pm[a] -= h;
        const double fd = (V.value(pp) - V.value(pm)) / (2 * h);
        worst = std::max(worst, std::abs(fd - g[a]) / std::max(1.0, std::abs(g[a])));
      }
    }
    EXPECT_LE(worst, 1e-6) << to_string(V.form());
  }
}

TEST(Potential, TabulatedInterpolatesKnotsAndReproducesLines) {
  const Potential T = Potential::tabulated({0, 1, 2, 3}, {1, 3, 5, 7});
  for (double x : {0.0, 0.3, 1.7, 2.9}) EXPECT_NEAR(T.value(x), 1 + 2 * x, 1e-14);
  EXPECT_NEAR(T.value(-1.0), -1.0, 1e-14);  // linear extrapolation
  const Potential S = Potential::tabulated({0, 1, 2, 3}, {0, 1, 0, 1});
  EXPECT_NEAR(S.value(2.0), 0.0, 1e-14);
  EXPECT_THROW(Potential::tabulated({0, 1}, {0, 1}), ValidationError);
  EXPECT_THROW(Potential::tabulated({0, 2, 1}, {0, 1, 2}), ValidationError);
}

TEST(InnerProduct, UnitNormAndSymmetry) {
  const auto p = triple_well_problem(0.5, 0.08);
  const QuadratureGrid g = make_grid(p, 0.01);
  const auto n = static_cast<Eigen::Index>(g.size());
  EXPECT_NEAR(inner_product_mu(g, Vec::Ones(n), Vec::Ones(n)), 1.0, 1e-14);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> N;
  Vec u(n), v(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    u[k] = N(rng);
    v[k] = N(rng);
  }
  EXPECT_LE(std::abs(inner_product_mu(g, u, v) - inner_product_mu(g, v, u)), 1e-14);
}

TEST(InnerProduct, FlatPotentialSecondMoment) {
  for (double h : {0.02, 0.01}) {
    const auto p = fixtures::flat_problem(0.7, 0.0);
    const QuadratureGrid g = make_grid(p, h);
    Vec x(static_cast<Eigen::Index>(g.size()));
    for (std::size_t k = 0; k < g.size(); ++k) x[static_cast<Eigen::Index>(k)] = g.point(k)[0];
    EXPECT_NEAR(inner_product_mu(g, x, x), 1.44 / 3.0, h * h);
  }
}

TEST(QuadratureGrid, BoltzmannWeightsNormalized) {
  const auto p = triple_well_problem(0.5, 0.08);
  for (double h : {0.1, 0.01}) {
    const QuadratureGrid g = make_grid(p, h);
    double s = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) s += g.weights()[k] * g.volumes()[k];
    EXPECT_NEAR(s, 1.0, 1e-12) << h;
  }
}

TEST(QuadratureGrid, TwoDimensionalVolumesAndMask) {
  const ControlProblem p(Potential::polynomial(2, {{0.5, 2, 0}, {0.5, 0, 2}}), Domain::rectangle({-1, -1}, {1, 1}), 1.0,
                         Region::box({0.5, 0.5}, {0.9, 0.9}), RunningCost::constant(0.1));
  const QuadratureGrid g = make_grid(p, 0.1);
  EXPECT_EQ(g.size(), 21u * 21u);
  double vol = 0.0;
  for (double v : g.volumes()) vol += v;
  EXPECT_NEAR(vol, 4.0, 1e-12);
  const auto m = g.mask(p.target);
  EXPECT_EQ(std::count(m.begin(), m.end(), 1), 25);
}

TEST(ControlProblem, RejectsInvalidInput) {
  const Potential V = make_triple_well();
  const Domain D = Domain::interval(-5, 5);
  const Region A = Region::interval(3.2, 3.6);
  EXPECT_THROW(ControlProblem(V, D, 0.0, A, RunningCost::constant(0.1)), ValidationError);
  EXPECT_THROW(ControlProblem(V, D, 0.5, A, RunningCost::constant(-0.1)), ValidationError);
  EXPECT_THROW(ControlProblem(V, D, 0.5, Region::interval(6, 7), RunningCost::constant(0.1)), ValidationError);
  EXPECT_THROW(ControlProblem(V, D, 0.5, Region{}, RunningCost::constant(0.1)), ValidationError);
  EXPECT_THROW(ControlProblem(V, Domain::interval(1, -1), 0.5, A, RunningCost::constant(0.1)), ValidationError);
  EXPECT_THROW(make_grid(triple_well_problem(0.5, 0.1), 0.3), ValidationError);  // 10 / 0.3 not integral
}

TEST(RunningCost, QuadraticForm) {
  const RunningCost f = RunningCost::quadratic(0.1, 2.0, {1.0, 0.0});
  EXPECT_DOUBLE_EQ(f({1.0, 0.0}, 1), 0.1);
  EXPECT_DOUBLE_EQ(f({3.0, 0.0}, 1), 0.1 + 2.0 * 4.0);
  EXPECT_DOUBLE_EQ(f({1.0, 2.0}, 2), 0.1 + 2.0 * 4.0);
  EXPECT_FALSE(f.is_zero());
  EXPECT_TRUE(RunningCost::constant(0.0).is_zero());
}
