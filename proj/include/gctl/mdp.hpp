#pragma once

#include "gctl/galerkin.hpp"

#include <optional>

namespace gctl {

namespace detail {
inline void require_positive(const Vec& v, const char* what) {
  if (v.size() == 0 || !(v.array() > 0).all()) throw ValidationError(std::string(what) + ": strategy must be componentwise positive");
}
}  // namespace detail

/// G^v_ij = G_ij v_j / v_i off the diagonal, negative row sums on it.
inline Mat controlled_generator(const Mat& G, const Vec& v) {
  detail::require_positive(v, "controlled_generator");
  if (G.rows() != v.size()) throw ValidationError("controlled_generator: dimension mismatch");
  const Eigen::Index n = G.rows();
  Mat Gv(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      Gv(i, j) = G(i, j) * v[j] / v[i];
      s += Gv(i, j);
    }
    Gv(i, i) = -s;
  }
  return Gv;
}

/// k^v(i) = eps sum_{j != i} G_ij (r log r - r + 1), r = v_j / v_i.
inline Vec running_cost(const Mat& G, const Vec& v, double epsilon) {
  detail::require_positive(v, "running_cost");
  const Eigen::Index n = G.rows();
  Vec k = Vec::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j || G(i, j) == 0.0) continue;
      const double r = v[j] / v[i];
      s += G(i, j) * (r * (std::log(r) - 1.0) + 1.0);
    }
    k[i] = epsilon * s;
  }
  return k;
}

/// Max |k^v - (eps G^v log v - eps (G v)/v)|, scaled by max(1, max |k^v|).
inline double running_cost_identity_error(const Mat& G, const Vec& v, double epsilon) {
  const Vec k = running_cost(G, v, epsilon);
  const Vec alt = epsilon * (controlled_generator(G, v) * v.array().log().matrix()) -
                  epsilon * ((G * v).array() / v.array()).matrix();
  return (k - alt).cwiseAbs().maxCoeff() / std::max(1.0, k.cwiseAbs().maxCoeff());
}

/// pi^v proportional to v^2 pi.
inline Vec tilted_stationary(const Vec& pi, const Vec& v) {
  detail::require_positive(v, "tilted_stationary");
  Vec p = v.array().square() * pi.array();
  const double z = p.sum();
  if (!(z > 0) || !std::isfinite(z)) throw NumericalError("tilted_stationary: degenerate normalization");
  return p / z;
}

/// r(i) = (G^v W)(i) + k^v(i) + Lambda_ii for the non-target states.
inline Vec bellman_residual(const GeneratorModel& m, const Vec& W_hat, const Vec& v) {
  const Mat Gv = controlled_generator(m.G, v);
  const Vec k = running_cost(m.G, v, m.epsilon);
  const Vec r = Gv * W_hat + k + m.Lambda.diagonal();
  return r.head(m.n_states() - 1);
}

struct MdpSolution {
  Vec phi_hat, W_hat, v_star;
  Mat G_v;
  Vec k_v, pi_v;
};

enum class MdpStatus { ok, generator_violated, nonpositive };

inline const char* to_string(MdpStatus s) {
  switch (s) {
    case MdpStatus::ok: return "ok";
    case MdpStatus::generator_violated: return "generator_violated";
    case MdpStatus::nonpositive: return "nonpositive";
  }
  return "unknown";
}

/// Galerkin solution always; MDP fields only when G is a generator and phi_hat > 0.
/// generator_violated takes precedence over nonpositive.
struct MdpResult {
  MdpStatus status = MdpStatus::ok;
  GeneratorCheck generator;
  Vec phi_hat;
  Vec W_hat;  // empty when phi_hat is not positive
  std::optional<MdpSolution> mdp;
};

inline Vec log_transform(const Vec& phi, double epsilon) {
  Vec W(phi.size());
  for (Eigen::Index i = 0; i < phi.size(); ++i) W[i] = -epsilon * std::log(phi[i]);
  return W;
}

inline MdpResult solve_mdp(const GeneratorModel& m, double epsilon) {
  MdpResult r;
  r.generator = check_generator_condition(m);
  r.phi_hat = solve_discrete_system(m, epsilon);
  const bool positive = (r.phi_hat.array() > 0).all();
  if (positive) {
    r.W_hat = log_transform(r.phi_hat, epsilon);
    r.W_hat[m.target()] = 0.0;
  }
  if (!r.generator.is_generator || !positive) {
    r.status = r.generator.is_generator ? MdpStatus::nonpositive : MdpStatus::generator_violated;
    return r;
  }
  MdpSolution s;
  s.phi_hat = r.phi_hat;
  s.W_hat = r.W_hat;
  s.v_star = r.phi_hat;
  s.G_v = controlled_generator(m.G, s.v_star);
  s.k_v = running_cost(m.G, s.v_star, epsilon);
  s.pi_v = tilted_stationary(m.pi, s.v_star);
  r.mdp = std::move(s);
  return r;
}

inline MdpResult solve_mdp(const GeneratorModel& m) { return solve_mdp(m, m.epsilon); }

/// Expected hitting times of the target states: G t = -1 elsewhere, t = 0 on the target.
inline Vec mfpt(const Mat& G, const std::vector<Eigen::Index>& target) {
  const Eigen::Index n = G.rows();
  if (target.empty()) throw ValidationError("mfpt: empty target");
  std::vector<char> is_t(static_cast<std::size_t>(n), 0);
  for (auto t : target) {
    if (t < 0 || t >= n) throw ValidationError("mfpt: target index out of range");
    is_t[static_cast<std::size_t>(t)] = 1;
  }
  std::vector<Eigen::Index> free;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!is_t[static_cast<std::size_t>(i)]) free.push_back(i);
  Vec t = Vec::Zero(n);
  if (free.empty()) return t;
  const auto nf = static_cast<Eigen::Index>(free.size());
  Mat A(nf, nf);
  for (Eigen::Index a = 0; a < nf; ++a)
    for (Eigen::Index b = 0; b < nf; ++b) A(a, b) = G(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
  Eigen::FullPivLU<Mat> lu(A);
  if (!lu.isInvertible()) throw NumericalError("mfpt: singular system (absorbing states outside the target)");
  const Vec x = lu.solve(Vec::Constant(nf, -1.0));
  for (Eigen::Index a = 0; a < nf; ++a) t[free[static_cast<std::size_t>(a)]] = x[a];
  if (!(x.array() > 0).all()) throw NumericalError("mfpt: target not reachable from every state");
  return t;
}

inline Vec mfpt(const Mat& G, Eigen::Index target) { return mfpt(G, std::vector<Eigen::Index>{target}); }

}  // namespace gctl
