#pragma once

#include "gctl/model.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <cmath>
#include <optional>
#include <vector>

namespace gctl {

using SpMat = Eigen::SparseMatrix<double>;

/// One edge of the grid graph. c = m_a L_ab = m_b L_ba (symmetric conductance).
struct Face {
  std::size_t a = 0, b = 0;
  double c = 0.0;
};

/// Conservative discretization of L = eps*Lap - grad V . grad on a QuadratureGrid.
///
/// Fluxes are weighted by exp(-V/eps) at face midpoints, so the operator is exactly
/// self-adjoint in the discrete mu inner product and carries natural Neumann conditions.
struct FluxOperator {
  std::vector<Face> faces;
  std::vector<double> mass;

  FluxOperator(const QuadratureGrid& g, const Potential& V) : mass(g.masses()) {
    const double eps = g.epsilon(), h = g.h(), vmin = g.min_potential(), Z = g.partition_function();
    auto conductance = [&](const Point& mid, double area) {
      return eps * area / h * std::exp(-(V.value(mid) - vmin) / eps) / Z;
    };
    const int nx = g.nodes(0), ny = g.nodes(1);
    for (int iy = 0; iy < ny; ++iy) {
      for (int ix = 0; ix < nx; ++ix) {
        const std::size_t a = g.linear(ix, iy);
        const Point pa = g.point(a);
        if (ix + 1 < nx) {
          const double area = g.dim() == 1 ? 1.0 : ((iy == 0 || iy == ny - 1) ? 0.5 * h : h);
          faces.push_back({a, g.linear(ix + 1, iy), conductance({pa[0] + 0.5 * h, pa[1]}, area)});
        }
        if (g.dim() == 2 && iy + 1 < ny) {
          const double area = (ix == 0 || ix == nx - 1) ? 0.5 * h : h;
          faces.push_back({a, g.linear(ix, iy + 1), conductance({pa[0], pa[1] + 0.5 * h}, area)});
        }
      }
    }
  }

  std::size_t size() const { return mass.size(); }

  SpMat matrix() const {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(4 * faces.size());
    for (const auto& f : faces) {
      const double la = f.c / mass[f.a], lb = f.c / mass[f.b];
      t.emplace_back(f.a, f.b, la);
      t.emplace_back(f.a, f.a, -la);
      t.emplace_back(f.b, f.a, lb);
      t.emplace_back(f.b, f.b, -lb);
    }
    const auto n = static_cast<Eigen::Index>(size());
    SpMat L(n, n);
    L.setFromTriplets(t.begin(), t.end());
    return L;
  }

  Vec apply(const Vec& u) const {
    Vec out = Vec::Zero(u.size());
    for (const auto& f : faces) {
      const auto a = static_cast<Eigen::Index>(f.a), b = static_cast<Eigen::Index>(f.b);
      const double flux = f.c * (u[b] - u[a]);
      out[a] += flux / mass[f.a];
      out[b] -= flux / mass[f.b];
    }
    return out;
  }

  /// <u, L v>_mu = -sum_faces c (u_b - u_a)(v_b - v_a), exactly symmetric.
  double form(const Vec& u, const Vec& v) const {
    std::vector<double> terms(faces.size());
    for (std::size_t k = 0; k < faces.size(); ++k) {
      const auto& f = faces[k];
      const auto a = static_cast<Eigen::Index>(f.a), b = static_cast<Eigen::Index>(f.b);
      terms[k] = -f.c * (u[b] - u[a]) * (v[b] - v[a]);
    }
    return pairwise_sum(terms);
  }
};

/// Factorized solver for (L - diag(c)) u = r on free nodes with u = g on fixed nodes.
///
/// The free-node block is symmetrized by the node masses; the result is SPD whenever
/// the fixed set is nonempty (or c > 0 somewhere).
class DirichletSolver {
 public:
  DirichletSolver(const FluxOperator& op, std::vector<char> fixed, const Vec& reaction)
      : op_(op), fixed_(std::move(fixed)), reaction_(reaction) {
    const std::size_t n = op.size();
    if (fixed_.size() != n || static_cast<std::size_t>(reaction.size()) != n)
      throw ValidationError("DirichletSolver: size mismatch");
    free_index_.assign(n, -1);
    for (std::size_t k = 0; k < n; ++k)
      if (!fixed_[k]) {
        free_index_[k] = static_cast<Eigen::Index>(free_nodes_.size());
        free_nodes_.push_back(k);
      }
    const auto nf = static_cast<Eigen::Index>(free_nodes_.size());
    if (nf == 0) return;
    std::vector<Eigen::Triplet<double>> t;
    std::vector<double> diag(free_nodes_.size(), 0.0);
    for (std::size_t i = 0; i < free_nodes_.size(); ++i)
      diag[i] = op.mass[free_nodes_[i]] * reaction[static_cast<Eigen::Index>(free_nodes_[i])];
    for (const auto& f : op.faces) {
      const auto ia = free_index_[f.a], ib = free_index_[f.b];
      if (ia >= 0) diag[static_cast<std::size_t>(ia)] += f.c;
      if (ib >= 0) diag[static_cast<std::size_t>(ib)] += f.c;
      if (ia >= 0 && ib >= 0) {
        t.emplace_back(ia, ib, -f.c);
        t.emplace_back(ib, ia, -f.c);
      }
    }
    for (Eigen::Index i = 0; i < nf; ++i) t.emplace_back(i, i, diag[static_cast<std::size_t>(i)]);
    S_.resize(nf, nf);
    S_.setFromTriplets(t.begin(), t.end());
    ldlt_.compute(S_);
    if (ldlt_.info() != Eigen::Success) throw NumericalError("Dirichlet solve: factorization failed (singular system)");
    if ((ldlt_.vectorD().array() <= 0).any()) throw NumericalError("Dirichlet solve: system is not positive definite");
  }

  std::size_t free_count() const { return free_nodes_.size(); }

  /// g supplies values on fixed nodes; r is the right-hand side on free nodes.
  Vec solve(const Vec& g, const Vec& r) const {
    Vec u = g;
    if (free_nodes_.empty()) return u;
    Vec b(static_cast<Eigen::Index>(free_nodes_.size()));
    for (std::size_t i = 0; i < free_nodes_.size(); ++i)
      b[static_cast<Eigen::Index>(i)] = -op_.mass[free_nodes_[i]] * r[static_cast<Eigen::Index>(free_nodes_[i])];
    for (const auto& f : op_.faces) {
      const auto ia = free_index_[f.a], ib = free_index_[f.b];
      if (ia >= 0 && ib < 0) b[ia] += f.c * g[static_cast<Eigen::Index>(f.b)];
      if (ib >= 0 && ia < 0) b[ib] += f.c * g[static_cast<Eigen::Index>(f.a)];
    }
    const Vec x = ldlt_.solve(b);
    for (std::size_t i = 0; i < free_nodes_.size(); ++i)
      u[static_cast<Eigen::Index>(free_nodes_[i])] = x[static_cast<Eigen::Index>(i)];
    return u;
  }

 private:
  const FluxOperator& op_;
  std::vector<char> fixed_;
  Vec reaction_;
  std::vector<Eigen::Index> free_index_;
  std::vector<std::size_t> free_nodes_;
  SpMat S_;
  Eigen::SimplicialLDLT<SpMat> ldlt_;
};

/// Central differences, one-sided at the boundary, along one axis.
inline Vec grid_derivative(const QuadratureGrid& g, const Vec& u, int axis) {
  Vec d(u.size());
  const double h = g.h();
  const int n = g.nodes(axis);
  for (std::size_t k = 0; k < g.size(); ++k) {
    auto idx = g.index(k);
    auto at = [&](int i) {
      auto j = idx;
      j[axis] = i;
      return u[static_cast<Eigen::Index>(g.linear(j[0], j[1]))];
    };
    const int i = idx[axis];
    double v;
    if (i == 0) v = (at(1) - at(0)) / h;
    else if (i == n - 1) v = (at(n - 1) - at(n - 2)) / h;
    else v = (at(i + 1) - at(i - 1)) / (2 * h);
    d[static_cast<Eigen::Index>(k)] = v;
  }
  return d;
}

struct ReferenceSolution {
  QuadratureGrid grid;
  Vec phi;
  Vec W;
  std::vector<Vec> u_star;  // one component per axis
  std::vector<char> target_mask;
  bool clamped = false;     // phi hit the 1e-300 floor somewhere
};

inline constexpr double kPhiFloor = 1e-300;

inline ReferenceSolution solve_linear_bvp(const ControlProblem& p, const QuadratureGrid& g, const FluxOperator& op) {
  auto mask = g.mask(p.target);
  if (std::none_of(mask.begin(), mask.end(), [](char c) { return c != 0; }))
    throw ValidationError("solve_linear_bvp: target contains no grid node; refine h");
  Vec reaction = g.sample(p.cost) / p.epsilon;
  if ((reaction.array() < 0).any()) throw ValidationError("solve_linear_bvp: running cost must be nonnegative");
  DirichletSolver solver(op, mask, reaction);
  const auto n = static_cast<Eigen::Index>(g.size());
  Vec phi = solver.solve(Vec::Ones(n), Vec::Zero(n));
  for (Eigen::Index k = 0; k < n; ++k)
    if (!(phi[k] > 0) && !mask[static_cast<std::size_t>(k)])
      throw NumericalError("solve_linear_bvp: nonpositive phi (discretization fault)");
  ReferenceSolution sol{g, phi, Vec(n), {}, mask, false};
  for (Eigen::Index k = 0; k < n; ++k) {
    double v = phi[k];
    if (v < kPhiFloor) {
      v = kPhiFloor;
      sol.clamped = true;
    }
    sol.W[k] = mask[static_cast<std::size_t>(k)] ? 0.0 : std::max(0.0, -p.epsilon * std::log(std::min(v, 1.0)));
  }
  for (int a = 0; a < g.dim(); ++a) sol.u_star.push_back(-2.0 * grid_derivative(g, sol.W, a));
  return sol;
}

inline ReferenceSolution solve_linear_bvp(const ControlProblem& p, double h) {
  QuadratureGrid g = make_grid(p, h);
  FluxOperator op(g, p.potential);
  return solve_linear_bvp(p, g, op);
}

/// Committor functions; the last core is the target set.
struct CommittorSet {
  std::vector<Region> cores;
  std::vector<Vec> chi;
  std::vector<std::vector<char>> masks;

  std::size_t n_states() const { return chi.size(); }
  /// Union of all core masks.
  std::vector<char> core_mask() const {
    std::vector<char> c(masks.front().size(), 0);
    for (const auto& m : masks)
      for (std::size_t k = 0; k < m.size(); ++k) c[k] = c[k] || m[k];
    return c;
  }
};

inline CommittorSet compute_committors(const QuadratureGrid& g, const FluxOperator& op, std::vector<Region> cores) {
  if (cores.empty()) throw ValidationError("compute_committors: no cores given");
  CommittorSet set;
  std::vector<char> all(g.size(), 0);
  for (const auto& c : cores) {
    auto m = g.mask(c);
    bool any = false;
    for (std::size_t k = 0; k < m.size(); ++k) {
      if (!m[k]) continue;
      any = true;
      if (all[k]) throw ValidationError("compute_committors: overlapping cores");
      all[k] = 1;
    }
    if (!any) throw ValidationError("compute_committors: a core contains no grid node");
    set.masks.push_back(std::move(m));
  }
  set.cores = std::move(cores);
  const auto n = static_cast<Eigen::Index>(g.size());
  DirichletSolver solver(op, all, Vec::Zero(n));
  for (const auto& m : set.masks) {
    Vec bc(n);
    for (Eigen::Index k = 0; k < n; ++k) bc[k] = m[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
    Vec chi = solver.solve(bc, Vec::Zero(n));
    set.chi.push_back(chi.cwiseMax(0.0).cwiseMin(1.0));
  }
  Vec sum = Vec::Zero(n);
  for (const auto& c : set.chi) sum += c;
  if ((sum.array() - 1.0).abs().maxCoeff() > 1e-10)
    throw NumericalError("compute_committors: partition of unity violated beyond 1e-10");
  return set;
}

inline CommittorSet compute_committors(const ControlProblem& p, const std::vector<Region>& cores, double h) {
  QuadratureGrid g = make_grid(p, h);
  FluxOperator op(g, p.potential);
  auto all = cores;
  all.push_back(p.target);
  return compute_committors(g, op, std::move(all));
}

/// Solves L t = -1 off the region, t = 0 on it.
inline Vec mean_hitting_time(const QuadratureGrid& g, const FluxOperator& op, const std::vector<char>& region) {
  if (std::none_of(region.begin(), region.end(), [](char c) { return c != 0; }))
    throw ValidationError("mean_hitting_time: empty region");
  const auto n = static_cast<Eigen::Index>(g.size());
  DirichletSolver solver(op, region, Vec::Zero(n));
  return solver.solve(Vec::Zero(n), Vec::Constant(n, -1.0));
}

inline Vec mean_hitting_time(const ControlProblem& p, const Region& region, double h) {
  QuadratureGrid g = make_grid(p, h);
  FluxOperator op(g, p.potential);
  return mean_hitting_time(g, op, g.mask(region));
}

/// sup over the complement of the region of the expected hitting time.
inline double max_hitting_time(const Vec& t, const std::vector<char>& region) {
  double k = 0.0;
  for (std::size_t i = 0; i < region.size(); ++i)
    if (!region[i]) k = std::max(k, t[static_cast<Eigen::Index>(i)]);
  return k;
}

}  // namespace gctl
