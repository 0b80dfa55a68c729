#pragma once

#include "gctl/mdp.hpp"

#include <Eigen/Eigenvalues>

namespace gctl {

/// Orthogonal projection in the mu inner product onto span of the non-target basis functions.
class ProjectorQ {
 public:
  explicit ProjectorQ(const Basis& b) : b_(b) {
    n_ = static_cast<Eigen::Index>(b.n_states()) - 1;
    if (n_ < 1) throw ValidationError("projection: basis has no non-target function");
    M_ = mass_matrix(b).topLeftCorner(n_, n_);
    llt_.compute(M_);
    if (llt_.info() != Eigen::Success) throw NumericalError("projection: mass matrix is singular");
  }

  Eigen::Index dim() const { return n_; }
  const Mat& mass() const { return M_; }

  Vec coefficients(const Vec& u) const {
    Vec rhs(n_);
    for (Eigen::Index j = 0; j < n_; ++j) rhs[j] = inner_product_mu(b_.grid, b_.chi[static_cast<std::size_t>(j)], u);
    return llt_.solve(rhs);
  }
  Vec apply(const Vec& u) const {
    const Vec c = coefficients(u);
    Vec out = Vec::Zero(u.size());
    for (Eigen::Index i = 0; i < n_; ++i) out += c[i] * b_.chi[static_cast<std::size_t>(i)];
    return out;
  }
  Vec complement(const Vec& u) const { return u - apply(u); }

 private:
  const Basis& b_;
  Eigen::Index n_ = 0;
  Mat M_;
  Eigen::LLT<Mat> llt_;
};

inline Vec orthogonal_projection_Q(const Basis& b, const Vec& u) { return ProjectorQ(b).apply(u); }

/// Grid operator B = f/eps - L restricted to functions that vanish on the target.
class BoundaryOperatorB {
 public:
  BoundaryOperatorB(const ControlProblem& p, const Basis& b)
      : op_(*b.op), reaction_(b.grid.sample(p.cost) / p.epsilon), target_(b.grid.mask(p.target)) {}

  Vec apply(const Vec& u) const {
    Vec out = reaction_.cwiseProduct(u) - op_.apply(u);
    zero_target(out);
    return out;
  }
  Vec apply_L(const Vec& u) const {
    Vec out = op_.apply(u);
    zero_target(out);
    return out;
  }
  Vec apply_f(const Vec& u) const {
    Vec out = reaction_.cwiseProduct(u);
    zero_target(out);
    return out;
  }
  void zero_target(Vec& u) const {
    for (std::size_t k = 0; k < target_.size(); ++k)
      if (target_[k]) u[static_cast<Eigen::Index>(k)] = 0.0;
  }
  const Vec& reaction() const { return reaction_; }
  const std::vector<char>& target() const { return target_; }

 private:
  const FluxOperator& op_;
  Vec reaction_;
  std::vector<char> target_;
};

/// Smallest eigenvalue of B on functions vanishing on the target (mu inner product), by
/// inverse power iteration with a Rayleigh-quotient stopping rule.
inline double ellipticity_constant(const ControlProblem& p, const Basis& b, int max_iter = 20000, double tol = 1e-13) {
  const BoundaryOperatorB B(p, b);
  DirichletSolver solver(*b.op, B.target(), B.reaction());
  const auto n = static_cast<Eigen::Index>(b.grid.size());
  Vec x = Vec::Ones(n);
  B.zero_target(x);
  x /= norm_mu(b.grid, x);
  double lambda = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    // (L - f/eps) y = -x  <=>  B y = x
    Vec y = solver.solve(Vec::Zero(n), -x);
    y /= norm_mu(b.grid, y);
    const double rq = inner_product_mu(b.grid, y, B.apply(y));
    x = y;
    if (std::abs(rq - lambda) <= tol * std::abs(rq)) return rq;
    lambda = rq;
  }
  return lambda;
}

struct ErrorReport {
  double h_ref = 0.0;
  double eps_galerkin = 0.0;  // ||phi - phi_hat||_mu
  double eps_best = 0.0;      // ||Q_perp (phi - chi_target)||_mu, best error in the admissible affine space
  double eps_best_span = 0.0; // ||phi - P_D phi||_mu with the target function included in the span
  double p = 1.0;
  double qbq_norm = 0.0;      // ||Q B Q_perp|| from the reduced eigenproblem
  double qbq_norm_power = 0.0;// same by power iteration on the grid
  double delta_L = 0.0, delta_f = 0.0;
  int n = 0;
  double m = 0.0;             // smallest eigenvalue of the non-target mass matrix
  double alpha2 = 0.0;
  double p_bound = 0.0;       // sqrt(1 + ||QBQ_perp||^2 / alpha2^2)
  double p_bound_coarse = 0.0; // sqrt(1 + (n/m)(delta_L + delta_f)^2 / alpha2^2)
  bool p_within_bound = false;
  bool norm_within_estimate = false;
};

namespace detail {

inline double power_norm_qbq(const ProjectorQ& Q, const BoundaryOperatorB& B, const QuadratureGrid& g, int max_iter = 500) {
  const auto n = static_cast<Eigen::Index>(g.size());
  Vec u(n);
  for (Eigen::Index k = 0; k < n; ++k) u[k] = 1.0 + 0.5 * std::sin(0.37 * static_cast<double>(k) + 0.1);
  B.zero_target(u);
  u /= norm_mu(g, u);
  double prev = 0.0, est = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    // T = (QBQ_perp)^* (QBQ_perp) = Q_perp B Q B Q_perp
    Vec w = Q.apply(B.apply(Q.complement(u)));
    Vec v = Q.complement(B.apply(w));
    B.zero_target(v);
    const double nv = norm_mu(g, v);
    if (nv == 0.0) return 0.0;
    est = std::sqrt(nv);
    u = v / nv;
    if (it > 5 && std::abs(est - prev) <= 1e-10 * est) break;
    prev = est;
  }
  return est;
}

}  // namespace detail

/// Galerkin error, best-approximation error and the a-priori bound on their ratio, all on the
/// basis grid (which serves as the reference discretization).
inline ErrorReport galerkin_error_report(const ControlProblem& p, const Basis& b, const ReferenceSolution& ref) {
  if (ref.grid.size() != b.grid.size()) throw ValidationError("error report: reference and basis grids differ");
  ErrorReport r;
  r.h_ref = b.grid.h();
  const GeneratorModel model = assemble(p, b);
  const Vec phi_hat = interpolate(b, solve_discrete_system(model));
  r.eps_galerkin = norm_mu(b.grid, ref.phi - phi_hat);
  const ProjectorQ Q(b);
  r.n = static_cast<int>(Q.dim());
  r.eps_best = norm_mu(b.grid, Q.complement(ref.phi - b.chi.back()));
  {
    Mat Mfull = mass_matrix(b);
    Vec rhs(Mfull.rows());
    for (Eigen::Index j = 0; j < rhs.size(); ++j) rhs[j] = inner_product_mu(b.grid, b.chi[static_cast<std::size_t>(j)], ref.phi);
    r.eps_best_span = norm_mu(b.grid, ref.phi - interpolate(b, Mfull.llt().solve(rhs)));
  }
  const double tiny = 1e-12;  // both errors at rounding level: report exactness
  r.p = (r.eps_best < tiny && r.eps_galerkin < tiny) ? 1.0 : r.eps_galerkin / r.eps_best;

  const BoundaryOperatorB B(p, b);
  const Eigen::Index n = Q.dim();
  std::vector<Vec> rB, rL, rf;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Vec& c = b.chi[static_cast<std::size_t>(k)];
    rB.push_back(Q.complement(B.apply(c)));
    rL.push_back(Q.complement(B.apply_L(c)));
    rf.push_back(Q.complement(B.apply_f(c)));
    r.delta_L = std::max(r.delta_L, norm_mu(b.grid, rL.back()));
    r.delta_f = std::max(r.delta_f, norm_mu(b.grid, rf.back()));
  }
  Mat Gamma(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) Gamma(i, j) = Gamma(j, i) = inner_product_mu(b.grid, rB[static_cast<std::size_t>(i)], rB[static_cast<std::size_t>(j)]);
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(Gamma, Q.mass());
  r.qbq_norm = std::sqrt(std::max(0.0, ges.eigenvalues().maxCoeff()));
  r.qbq_norm_power = detail::power_norm_qbq(Q, B, b.grid);
  Eigen::SelfAdjointEigenSolver<Mat> es(Q.mass());
  r.m = es.eigenvalues().minCoeff();
  r.alpha2 = ellipticity_constant(p, b);
  r.p_bound = std::sqrt(1.0 + r.qbq_norm * r.qbq_norm / (r.alpha2 * r.alpha2));
  const double lem = (r.delta_L + r.delta_f) * std::sqrt(static_cast<double>(r.n) / r.m);
  r.p_bound_coarse = std::sqrt(1.0 + lem * lem / (r.alpha2 * r.alpha2));
  r.p_within_bound = r.p <= r.p_bound * (1 + 1e-10);
  r.norm_within_estimate = r.qbq_norm <= lem * (1 + 1e-10);
  return r;
}

inline ErrorReport galerkin_error_report(const ControlProblem& p, const Basis& b) {
  return galerkin_error_report(p, b, solve_linear_bvp(p, b.grid, *b.op));
}

struct BestApproxBound {
  double eps_best = 0.0;       // affine best-approximation error (as in ErrorReport)
  double pperp_l2 = 0.0;       // ||P_perp phi||_mu
  double pperp_sup = 0.0;      // ||P_perp phi||_inf
  double kappa = 0.0;          // max over T of the expected hitting time of the cores
  double mu_T = 0.0;           // mass of the transition region
  double f_sup = 0.0;
  double rhs = 0.0;            // ||P_perp phi|| + mu(T)^1/2 [kappa ||f||/eps + 2 ||P_perp phi||_inf]
  double rhs_unscaled = 0.0;   // same with kappa ||f||, i.e. without the 1/eps on the cost
  bool holds = false;
  bool holds_unscaled = false;
};

/// Best-approximation bound for a committor basis. P averages phi over each core and is the
/// identity on the transition region, so P_perp phi vanishes off the cores.
inline BestApproxBound core_best_approx_bound(const ControlProblem& p, const Basis& b, const ReferenceSolution& ref) {
  if (b.kind != BasisKind::committor || !b.committors) throw ValidationError("best-approximation bound: needs a committor basis");
  const CommittorSet& cs = *b.committors;
  const auto& m = b.grid.masses();
  const auto n = static_cast<Eigen::Index>(b.grid.size());
  BestApproxBound r;
  Vec pperp = Vec::Zero(n);
  for (const auto& mask : cs.masks) {
    double mass = 0.0, avg = 0.0;
    for (Eigen::Index k = 0; k < n; ++k)
      if (mask[static_cast<std::size_t>(k)]) {
        mass += m[static_cast<std::size_t>(k)];
        avg += m[static_cast<std::size_t>(k)] * ref.phi[k];
      }
    avg /= mass;
    for (Eigen::Index k = 0; k < n; ++k)
      if (mask[static_cast<std::size_t>(k)]) pperp[k] = ref.phi[k] - avg;
  }
  r.pperp_l2 = norm_mu(b.grid, pperp);
  r.pperp_sup = pperp.cwiseAbs().maxCoeff();
  const auto core = cs.core_mask();
  const Vec t = mean_hitting_time(b.grid, *b.op, core);
  r.kappa = max_hitting_time(t, core);
  for (Eigen::Index k = 0; k < n; ++k)
    if (!core[static_cast<std::size_t>(k)]) r.mu_T += m[static_cast<std::size_t>(k)];
  r.f_sup = b.grid.sample(p.cost).cwiseAbs().maxCoeff();
  const ProjectorQ Q(b);
  r.eps_best = norm_mu(b.grid, Q.complement(ref.phi - b.chi.back()));
  // L phi = (f/eps) phi on T, so the hitting-time bound picks up ||f||/eps.
  r.rhs = r.pperp_l2 + std::sqrt(r.mu_T) * (r.kappa * r.f_sup / p.epsilon + 2 * r.pperp_sup);
  r.rhs_unscaled = r.pperp_l2 + std::sqrt(r.mu_T) * (r.kappa * r.f_sup + 2 * r.pperp_sup);
  r.holds = r.eps_best <= r.rhs;
  r.holds_unscaled = r.eps_best <= r.rhs_unscaled;
  return r;
}

struct ValueFunctionError {
  double W_error = 0.0;    // ||W - W_hat||_mu
  double phi_error = 0.0;  // ||phi - phi_hat||_mu
  double lipschitz = 0.0;  // eps / min(phi, phi_hat)
  double bound = 0.0;      // lipschitz * phi_error
  bool holds = false;
};

/// Error of the log-transformed value function, with the Lipschitz factor of -eps log on [min phi, 1].
inline ValueFunctionError value_function_error(const QuadratureGrid& g, const Vec& phi, const Vec& phi_hat, double epsilon) {
  const double lo = std::min(phi.minCoeff(), phi_hat.minCoeff());
  if (!(lo > 0)) throw ValidationError("value_function_error: phi must be bounded away from zero");
  ValueFunctionError e;
  const Vec W = log_transform(phi, epsilon), Wh = log_transform(phi_hat, epsilon);
  e.W_error = norm_mu(g, W - Wh);
  e.phi_error = norm_mu(g, phi - phi_hat);
  e.lipschitz = epsilon / lo;
  e.bound = e.lipschitz * e.phi_error;
  e.holds = e.W_error <= e.bound * (1 + 1e-12);
  return e;
}

}  // namespace gctl
