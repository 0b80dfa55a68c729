#pragma once

#include "gctl/mdp.hpp"

#include <Eigen/SparseLU>

namespace gctl {

/// Cell-centred 1-D lattice x_i = lo + (i + 1/2) h; nodes inside the target are absorbing.
struct Lattice1D {
  double lo = 0.0, h = 0.0;
  int n = 0;
  std::vector<char> target;

  double x(int i) const { return lo + (i + 0.5) * h; }
};

inline Lattice1D make_lattice(const ControlProblem& p, double h) {
  if (p.dim() != 1) throw ValidationError("lattice: only 1-D problems are supported");
  const double len = p.domain.hi[0] - p.domain.lo[0];
  const double r = std::round(len / h);
  if (!(h > 0) || std::abs(len / h - r) > 1e-8 * r || r < 3) throw ValidationError("lattice: h must divide the domain");
  Lattice1D L{p.domain.lo[0], h, static_cast<int>(r), {}};
  L.target.resize(static_cast<std::size_t>(L.n));
  bool any = false;
  for (int i = 0; i < L.n; ++i) {
    L.target[static_cast<std::size_t>(i)] = p.target.contains({L.x(i), 0.0}, 1) ? 1 : 0;
    any = any || L.target[static_cast<std::size_t>(i)];
  }
  if (!any) throw ValidationError("lattice: no node in the target");
  return L;
}

/// Tridiagonal generator stored by its off-diagonal bands; up[i] = G_{i,i+1}, down[i] = G_{i,i-1}.
struct TriGenerator {
  Vec up, down;

  Eigen::Index size() const { return up.size(); }
  double offdiag(Eigen::Index i, Eigen::Index j) const { return j == i + 1 ? up[i] : (j == i - 1 ? down[i] : 0.0); }
  Mat dense() const {
    const Eigen::Index n = size();
    Mat G = Mat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i + 1 < n) G(i, i + 1) = up[i];
      if (i > 0) G(i, i - 1) = down[i];
      G(i, i) = -(up[i] + down[i]);
    }
    return G;
  }
  double min_offdiag() const { return std::min(up.minCoeff(), down.minCoeff()); }
};

/// Uncontrolled finite-volume chain on the lattice (no target merging).
inline TriGenerator fva_chain(const Potential& V, const Lattice1D& L, double epsilon) {
  const Eigen::Index n = L.n;
  TriGenerator g{Vec::Zero(n), Vec::Zero(n)};
  const double r0 = epsilon / (L.h * L.h);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double vi = V.value(L.x(static_cast<int>(i)));
    if (i + 1 < n) g.up[i] = r0 * std::exp(-(V.value(L.x(static_cast<int>(i)) + 0.5 * L.h) - vi) / epsilon);
    if (i > 0) g.down[i] = r0 * std::exp(-(V.value(L.x(static_cast<int>(i)) - 0.5 * L.h) - vi) / epsilon);
  }
  return g;
}

/// Controlled chain G~_{i,i+-1} = (eps -+ (h/2)(V'(x_i) - alpha_i)) / h^2 from the drift expansion.
struct McaGenerator {
  TriGenerator G;
  bool positive = true;
  double min_offdiag = 0.0;
};

inline McaGenerator mca_generator(const Potential& V, const Lattice1D& L, const Vec& alpha, double epsilon) {
  const Eigen::Index n = L.n;
  if (alpha.size() != n) throw ValidationError("mca_generator: strategy length mismatch");
  McaGenerator m{{Vec::Zero(n), Vec::Zero(n)}, true, 0.0};
  const double h = L.h;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double b = 0.5 * h * (V.derivative(L.x(static_cast<int>(i))) - alpha[i]);
    if (i + 1 < n) m.G.up[i] = (epsilon - b) / (h * h);
    if (i > 0) m.G.down[i] = (epsilon + b) / (h * h);
  }
  m.min_offdiag = std::min(m.G.up.head(n - 1).minCoeff(), m.G.down.tail(n - 1).minCoeff());
  m.positive = m.min_offdiag >= 0.0;
  return m;
}

/// alpha_v(i) = (eps/h)(log v(i+1) - log v(i-1)); one-sided (2 eps/h) differences at the ends.
inline Vec strategy_map(const Vec& v, double h, double epsilon) {
  detail::require_positive(v, "strategy_map");
  const Eigen::Index n = v.size();
  if (n < 2) throw ValidationError("strategy_map: need at least two nodes");
  Vec a(n);
  for (Eigen::Index i = 1; i + 1 < n; ++i) a[i] = epsilon / h * (std::log(v[i + 1]) - std::log(v[i - 1]));
  a[0] = 2 * epsilon / h * (std::log(v[1]) - std::log(v[0]));
  a[n - 1] = 2 * epsilon / h * (std::log(v[n - 1]) - std::log(v[n - 2]));
  return a;
}

/// Interior max |k^v - alpha_v^2 / 4|.
inline double mca_cost_error(const TriGenerator& G, const Vec& v, double epsilon, double h) {
  const Vec k = running_cost(G.dense(), v, epsilon);
  const Vec a = strategy_map(v, h, epsilon);
  double e = 0.0;
  for (Eigen::Index i = 1; i + 1 < v.size(); ++i) e = std::max(e, std::abs(k[i] - 0.25 * a[i] * a[i]));
  return e;
}

/// max_{i != j} |G^v_ij - G~^{z(v)}_ij| * h^2 / eps.
inline double mca_equivalence_error(const Potential& V, const Lattice1D& L, const Vec& v, double epsilon) {
  const TriGenerator K = fva_chain(V, L, epsilon);
  const Mat Gv = controlled_generator(K.dense(), v);
  const McaGenerator mca = mca_generator(V, L, strategy_map(v, L.h, epsilon), epsilon);
  double e = 0.0;
  for (Eigen::Index i = 0; i < L.n; ++i) {
    if (i + 1 < L.n) e = std::max(e, std::abs(Gv(i, i + 1) - mca.G.up[i]));
    if (i > 0) e = std::max(e, std::abs(Gv(i, i - 1) - mca.G.down[i]));
  }
  return e * L.h * L.h / epsilon;
}

struct McaBellmanSolution {
  Vec W, alpha;
  int iterations = 0;
  bool positive = true;
};

namespace detail {

// Solves G W + c = 0 off the target (W = 0 on it) for a tridiagonal generator.
inline Vec solve_chain_values(const TriGenerator& G, const std::vector<char>& target, const Vec& c) {
  const Eigen::Index n = G.size();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n), -1);
  Eigen::Index nf = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!target[static_cast<std::size_t>(i)]) idx[static_cast<std::size_t>(i)] = nf++;
  std::vector<Eigen::Triplet<double>> t;
  Vec b(nf);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = idx[static_cast<std::size_t>(i)];
    if (r < 0) continue;
    t.emplace_back(r, r, -(G.up[i] + G.down[i]));
    if (i + 1 < n && idx[static_cast<std::size_t>(i + 1)] >= 0) t.emplace_back(r, idx[static_cast<std::size_t>(i + 1)], G.up[i]);
    if (i > 0 && idx[static_cast<std::size_t>(i - 1)] >= 0) t.emplace_back(r, idx[static_cast<std::size_t>(i - 1)], G.down[i]);
    b[r] = -c[i];
  }
  SpMat A(nf, nf);
  A.setFromTriplets(t.begin(), t.end());
  Eigen::SparseLU<SpMat> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw NumericalError("chain value solve: singular system");
  const Vec x = lu.solve(b);
  Vec W = Vec::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (idx[static_cast<std::size_t>(i)] >= 0) W[i] = x[idx[static_cast<std::size_t>(i)]];
  return W;
}

}  // namespace detail

/// Bellman equation of the Markov chain approximation, solved by policy iteration.
/// The minimization over alpha is exact: alpha*(i) = -(W(i+1) - W(i-1))/h (one neighbour at the ends).
inline McaBellmanSolution mca_bellman_solve(const Potential& V, const Lattice1D& L, const Vec& f, double epsilon,
                                            int max_iter = 100000, double tol = 1e-12) {
  const Eigen::Index n = L.n;
  if (f.size() != n) throw ValidationError("mca_bellman_solve: cost length mismatch");
  McaBellmanSolution s{Vec::Zero(n), Vec::Zero(n), 0, true};
  auto improve = [&](const Vec& W) {
    Vec a = Vec::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (L.target[static_cast<std::size_t>(i)]) continue;
      if (i == 0) a[i] = -(W[1] - W[0]) / L.h;
      else if (i == n - 1) a[i] = -(W[n - 1] - W[n - 2]) / L.h;
      else a[i] = -(W[i + 1] - W[i - 1]) / L.h;
    }
    return a;
  };
  for (int it = 1; it <= max_iter; ++it) {
    const McaGenerator G = mca_generator(V, L, s.alpha, epsilon);
    s.positive = G.positive;
    const Vec c = f + 0.25 * s.alpha.cwiseProduct(s.alpha);
    const Vec W = detail::solve_chain_values(G.G, L.target, c);
    const Vec a = improve(W);
    const double dW = (W - s.W).cwiseAbs().maxCoeff();
    s.W = W;
    s.alpha = a;
    s.iterations = it;
    if (dW <= tol * std::max(1.0, W.cwiseAbs().maxCoeff())) return s;
  }
  throw NumericalError("mca_bellman_solve: policy iteration did not converge");
}

/// Value function of the uncontrolled finite-volume chain with costs f: -eps log phi with (K - f/eps) phi = 0.
inline Vec fva_value_function(const Potential& V, const Lattice1D& L, const Vec& f, double epsilon) {
  const TriGenerator K = fva_chain(V, L, epsilon);
  const Eigen::Index n = L.n;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n), -1);
  Eigen::Index nf = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!L.target[static_cast<std::size_t>(i)]) idx[static_cast<std::size_t>(i)] = nf++;
  std::vector<Eigen::Triplet<double>> t;
  Vec b = Vec::Zero(nf);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = idx[static_cast<std::size_t>(i)];
    if (r < 0) continue;
    t.emplace_back(r, r, -(K.up[i] + K.down[i]) - f[i] / epsilon);
    for (Eigen::Index j : {i - 1, i + 1}) {
      if (j < 0 || j >= n) continue;
      const double g = K.offdiag(i, j);
      if (idx[static_cast<std::size_t>(j)] >= 0) t.emplace_back(r, idx[static_cast<std::size_t>(j)], g);
      else b[r] -= g;  // phi = 1 on the target
    }
  }
  SpMat A(nf, nf);
  A.setFromTriplets(t.begin(), t.end());
  Eigen::SparseLU<SpMat> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw NumericalError("fva_value_function: singular system");
  const Vec x = lu.solve(b);
  Vec W = Vec::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = idx[static_cast<std::size_t>(i)];
    if (r >= 0) {
      if (!(x[r] > 0)) throw NumericalError("fva_value_function: nonpositive phi");
      W[i] = -epsilon * std::log(x[r]);
    }
  }
  return W;
}

struct McaConvergenceRow {
  double h = 0.0;
  double cost_error = 0.0;         // interior max |k^v - alpha^2/4|
  double equivalence_error = 0.0;  // scaled |G^v - G~|
  double value_gap = 0.0;          // max |W~ - W_fva|
  double strategy_gap = 0.0;       // max |alpha_{v*} - alpha~*| over non-target interior nodes
  int bellman_iterations = 0;
};

struct McaConvergence {
  std::vector<McaConvergenceRow> rows;
  double cost_order = 0.0, equivalence_order = 0.0, value_order = 0.0, strategy_order = 0.0;
};

/// Convergence table for the MCA / finite-volume correspondence on a 1-D problem.
/// test_v(x) supplies the smooth strategy used for the cost and equivalence columns.
template <class TestStrategy>
McaConvergence mca_convergence(const ControlProblem& p, const std::vector<double>& hs, TestStrategy test_v) {
  McaConvergence out;
  for (double h : hs) {
    const Lattice1D L = make_lattice(p, h);
    McaConvergenceRow row;
    row.h = h;
    Vec v(L.n), f(L.n);
    for (int i = 0; i < L.n; ++i) {
      v[i] = test_v(L.x(i));
      f[i] = p.f({L.x(i), 0.0});
    }
    row.cost_error = mca_cost_error(fva_chain(p.potential, L, p.epsilon), v, p.epsilon, h);
    row.equivalence_error = mca_equivalence_error(p.potential, L, v, p.epsilon);
    const McaBellmanSolution mca = mca_bellman_solve(p.potential, L, f, p.epsilon);
    const Vec W = fva_value_function(p.potential, L, f, p.epsilon);
    row.value_gap = (mca.W - W).cwiseAbs().maxCoeff();
    Vec vstar(L.n);
    for (int i = 0; i < L.n; ++i) vstar[i] = std::exp(-W[i] / p.epsilon);
    const Vec a = strategy_map(vstar, h, p.epsilon);
    double sg = 0.0;
    for (int i = 1; i + 1 < L.n; ++i)
      if (!L.target[static_cast<std::size_t>(i)]) sg = std::max(sg, std::abs(a[i] - mca.alpha[i]));
    row.strategy_gap = sg;
    row.bellman_iterations = mca.iterations;
    out.rows.push_back(row);
  }
  std::vector<double> h, ce, ee, vg, sg;
  for (const auto& r : out.rows) {
    h.push_back(r.h);
    ce.push_back(r.cost_error);
    ee.push_back(r.equivalence_error);
    vg.push_back(r.value_gap);
    sg.push_back(r.strategy_gap);
  }
  if (h.size() >= 2) {
    auto safe = [&](const std::vector<double>& e) {
      for (double x : e)
        if (!(x > 0)) return 0.0;
      return fit_order(h, e);
    };
    out.cost_order = safe(ce);
    out.equivalence_order = safe(ee);
    out.value_order = safe(vg);
    out.strategy_order = safe(sg);
  }
  return out;
}

}  // namespace gctl
