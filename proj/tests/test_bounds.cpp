#include "support.hpp"

#include <gtest/gtest.h>

using namespace gctl;

namespace {

Vec wiggle(const QuadratureGrid& g) {
  Vec u(static_cast<Eigen::Index>(g.size()));
  for (std::size_t k = 0; k < g.size(); ++k) u[static_cast<Eigen::Index>(k)] = std::sin(g.point(k)[0]) + 0.3 * g.point(k)[0];
  return u;
}

}  // namespace

TEST(Projection, IdempotentAndOrthogonal) {
  const auto p = triple_well_problem(0.5, 0.08);
  for (const Basis& b : {make_indicator_basis(p, 0.2, 0.01), make_committor_basis(p, triple_well_cores(), 0.01)}) {
    const ProjectorQ Q(b);
    const Vec u = wiggle(b.grid);
    const Vec qu = Q.apply(u);
    EXPECT_LE((Q.apply(qu) - qu).cwiseAbs().maxCoeff(), 1e-10);
    const Vec r = Q.complement(u);
    for (Eigen::Index i = 0; i < Q.dim(); ++i)
      EXPECT_NEAR(inner_product_mu(b.grid, b.chi[static_cast<std::size_t>(i)], r), 0.0, 1e-12);
  }
}

TEST(Projection, BestInSpan) {
  const auto p = triple_well_problem(0.5, 0.08);
  const auto b = make_committor_basis(p, triple_well_cores(), 0.01);
  const ProjectorQ Q(b);
  const Vec u = wiggle(b.grid);
  const double best = norm_mu(b.grid, Q.complement(u));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N;
  for (int k = 0; k < 20; ++k) {
    Vec psi = Q.apply(u);
    for (Eigen::Index i = 0; i < Q.dim(); ++i) psi += 0.1 * N(rng) * b.chi[static_cast<std::size_t>(i)];
    EXPECT_GE(norm_mu(b.grid, u - psi), best);
  }
}

TEST(ErrorReport, ZeroCostIsExact) {
  const auto p = triple_well_problem(0.5, 0.0);
  const auto r = galerkin_error_report(p, make_committor_basis(p, triple_well_cores(), 0.01));
  EXPECT_LE(r.eps_galerkin, 1e-12);
  EXPECT_LE(r.eps_best, 1e-12);
  EXPECT_EQ(r.p, 1.0);
  EXPECT_LE(r.delta_f, 1e-12);
}

TEST(ErrorReport, RatioWithinBoundTripleWell) {
  const auto p = triple_well_problem(0.5, 0.08);
  const auto r = galerkin_error_report(p, make_committor_basis(p, triple_well_cores(), 0.01));
  EXPECT_GE(r.p, 1.0 - 1e-9);
  EXPECT_LE(r.p, r.p_bound);
  EXPECT_TRUE(r.p_within_bound);
  EXPECT_TRUE(r.norm_within_estimate);
  EXPECT_LE(r.p_bound, r.p_bound_coarse);
  EXPECT_NEAR(r.qbq_norm_power, r.qbq_norm, 1e-6 * r.qbq_norm);
  EXPECT_LE(r.eps_best_span, r.eps_best + 1e-14);
  EXPECT_GT(r.alpha2, 0.0);
  EXPECT_EQ(r.n, 2);
}

TEST(ErrorReport, IndicatorBestErrorFirstOrder) {
  const auto p = triple_well_problem(0.5, 0.08);
  const auto ref = solve_linear_bvp(p, 0.01);
  std::vector<double> Hs, e;
  for (double H : {0.2, 0.1, 0.05}) {
    const auto b = make_indicator_basis(p, H, 0.01);
    Hs.push_back(H);
    e.push_back(norm_mu(b.grid, ProjectorQ(b).complement(ref.phi - b.chi.back())));
  }
  EXPECT_GE(fit_order(Hs, e), 0.9);
}

TEST(Ellipticity, MatchesDenseEigenvalue) {
  const auto p = triple_well_problem(0.5, 0.08);
  const auto b = make_committor_basis(p, triple_well_cores(), 0.1);
  const BoundaryOperatorB B(p, b);
  const auto& mass = b.grid.masses();
  std::vector<Eigen::Index> free;
  for (std::size_t k = 0; k < b.grid.size(); ++k)
    if (!B.target()[k]) free.push_back(static_cast<Eigen::Index>(k));
  const auto nf = static_cast<Eigen::Index>(free.size());
  Mat A(nf, nf), Mm = Mat::Zero(nf, nf);
  for (Eigen::Index j = 0; j < nf; ++j) {
    Vec e = Vec::Zero(static_cast<Eigen::Index>(b.grid.size()));
    e[free[static_cast<std::size_t>(j)]] = 1.0;
    const Vec Be = B.apply(e);
    for (Eigen::Index i = 0; i < nf; ++i) A(i, j) = mass[static_cast<std::size_t>(free[static_cast<std::size_t>(i)])] * Be[free[static_cast<std::size_t>(i)]];
    Mm(j, j) = mass[static_cast<std::size_t>(free[static_cast<std::size_t>(j)])];
  }
  EXPECT_LE((A - A.transpose()).cwiseAbs().maxCoeff(), 1e-10 * A.cwiseAbs().maxCoeff());
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(0.5 * (A + A.transpose()), Mm);
  const double dense = ges.eigenvalues().minCoeff();
  EXPECT_NEAR(ellipticity_constant(p, b), dense, 1e-8 * dense);
}

TEST(BestApprox, BoundHoldsAndShrinksWithCoreRadius) {
  double prev_mu = std::numeric_limits<double>::infinity(), prev_rhs = prev_mu;
  for (double delta : {0.1, 0.2, 0.4}) {
    const auto p = triple_well_problem(0.5, 0.08, delta);
    const auto b = make_committor_basis(p, triple_well_cores(delta), 0.01);
    const auto ref = solve_linear_bvp(p, b.grid, *b.op);
    const auto r = core_best_approx_bound(p, b, ref);
    EXPECT_TRUE(r.holds) << delta;
    EXPECT_GT(r.kappa, 0.0);
    EXPECT_LT(r.mu_T, prev_mu);
    EXPECT_LT(r.rhs, prev_rhs);
    prev_mu = r.mu_T;
    prev_rhs = r.rhs;
  }
}

TEST(BestApprox, RejectsIndicatorBasis) {
  const auto p = triple_well_problem(0.5, 0.08);
  const auto b = make_indicator_basis(p, 0.2, 0.01);
  EXPECT_THROW(core_best_approx_bound(p, b, solve_linear_bvp(p, 0.01)), ValidationError);
}

TEST(ValueFunctionError, ExactAndUniformShift) {
  const auto p = triple_well_problem(0.5, 0.08);
  const auto ref = solve_linear_bvp(p, 0.01);
  const auto same = value_function_error(ref.grid, ref.phi, ref.phi, p.epsilon);
  EXPECT_EQ(same.W_error, 0.0);
  EXPECT_TRUE(same.holds);
  // phi_hat = phi e^{-d}: W_hat - W = eps d everywhere.
  const double d = 1e-3;
  const auto shifted = value_function_error(ref.grid, ref.phi, ref.phi * std::exp(-d), p.epsilon);
  EXPECT_NEAR(shifted.W_error, p.epsilon * d, 1e-12);
  EXPECT_TRUE(shifted.holds);
  EXPECT_THROW(value_function_error(ref.grid, ref.phi, Vec::Zero(ref.phi.size()), p.epsilon), ValidationError);
}

TEST(ValueFunctionError, GalerkinCommittorWithinBound) {
  const auto p = triple_well_problem(0.5, 0.08);
  const auto b = make_committor_basis(p, triple_well_cores(), 0.01);
  const auto ref = solve_linear_bvp(p, b.grid, *b.op);
  const Vec phi_hat = interpolate(b, solve_discrete_system(assemble(p, b)));
  const auto e = value_function_error(b.grid, ref.phi, phi_hat, p.epsilon);
  EXPECT_TRUE(e.holds);
  EXPECT_GT(e.W_error, 0.0);
}
