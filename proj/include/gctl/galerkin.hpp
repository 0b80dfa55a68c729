#pragma once

#include "gctl/reference.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <limits>
#include <memory>
#include <optional>

namespace gctl {

enum class BasisKind { indicator, committor };

inline const char* to_string(BasisKind k) { return k == BasisKind::indicator ? "indicator" : "committor"; }

/// Uniform box cells of side H. Cells whose centre lies in the target are merged into
/// the last state.
struct CellPartition {
  int dim = 1;
  double H = 0.0;
  Point lo{0.0, 0.0};
  std::array<int, 2> ncell{1, 1};
  std::vector<int> state;  // cell -> state index
  int n_states = 0;

  std::size_t n_cells() const { return static_cast<std::size_t>(ncell[0]) * static_cast<std::size_t>(ncell[1]); }
  std::size_t cell(int ix, int iy) const {
    return static_cast<std::size_t>(ix) + static_cast<std::size_t>(ncell[0]) * static_cast<std::size_t>(iy);
  }
  Point centre(std::size_t c) const {
    const int ix = static_cast<int>(c % static_cast<std::size_t>(ncell[0]));
    const int iy = static_cast<int>(c / static_cast<std::size_t>(ncell[0]));
    Point p{lo[0] + (ix + 0.5) * H, 0.0};
    if (dim == 2) p[1] = lo[1] + (iy + 0.5) * H;
    return p;
  }
  int target_state() const { return n_states - 1; }
};

inline CellPartition make_cells(const ControlProblem& p, double H) {
  const Domain& d = p.domain;
  if (!(H > 0)) throw ValidationError("cells: size must be positive");
  auto is_multiple = [&](double len) {
    const double r = std::round(len / H);
    return std::abs(len / H - r) <= 1e-8 * std::max(1.0, r);
  };
  CellPartition cp;
  cp.dim = d.dim;
  cp.H = H;
  cp.lo = d.lo;
  for (int a = 0; a < d.dim; ++a) {
    if (!is_multiple(d.hi[a] - d.lo[a])) throw ValidationError("cells: size must divide the domain (uniform cells)");
    cp.ncell[a] = static_cast<int>(std::round((d.hi[a] - d.lo[a]) / H));
  }
  for (const auto& b : p.target.boxes)
    for (int a = 0; a < d.dim; ++a)
      if (!is_multiple(b.lo[a] - d.lo[a]) || !is_multiple(b.hi[a] - d.lo[a]))
        throw ValidationError("cells: target set must be a union of cells");
  cp.state.assign(cp.n_cells(), -1);
  int next = 0;
  std::vector<std::size_t> target_cells;
  for (std::size_t c = 0; c < cp.n_cells(); ++c) {
    if (p.target.contains(cp.centre(c), d.dim)) target_cells.push_back(c);
    else cp.state[c] = next++;
  }
  if (target_cells.empty()) throw ValidationError("cells: target set contains no cell");
  for (auto c : target_cells) cp.state[c] = next;
  cp.n_states = next + 1;
  return cp;
}

struct FvaModel {
  Mat K;
  Vec pi;
};

/// Finite-volume generator on a cell partition. With merge_target the target cells are
/// lumped into one state; rates into it add up and its outgoing rates follow from
/// detailed balance.
inline FvaModel fva_generator(const ControlProblem& p, const CellPartition& cells, bool merge_target = true) {
  const double eps = p.epsilon, H = cells.H;
  const std::size_t nc = cells.n_cells();
  std::vector<double> Vc(nc);
  for (std::size_t c = 0; c < nc; ++c) Vc[c] = p.potential.value(cells.centre(c));
  const double vmin = *std::min_element(Vc.begin(), Vc.end());
  Vec pic(static_cast<Eigen::Index>(nc));
  const double vol = cells.dim == 1 ? H : H * H;
  for (std::size_t c = 0; c < nc; ++c) pic[static_cast<Eigen::Index>(c)] = vol * std::exp(-(Vc[c] - vmin) / eps);
  pic /= pic.sum();
  // Delta^-1 = eps m(S) / (m(h) m(A)) = eps / H^2 for square cells.
  const double rate0 = eps / (H * H);
  std::vector<Eigen::Triplet<double>> trip;
  auto add_pair = [&](std::size_t i, std::size_t j, const Point& face) {
    const double vf = p.potential.value(face);
    trip.emplace_back(i, j, rate0 * std::exp(-(vf - Vc[i]) / eps));
    trip.emplace_back(j, i, rate0 * std::exp(-(vf - Vc[j]) / eps));
  };
  for (int iy = 0; iy < cells.ncell[1]; ++iy)
    for (int ix = 0; ix < cells.ncell[0]; ++ix) {
      const std::size_t c = cells.cell(ix, iy);
      const Point x = cells.centre(c);
      if (ix + 1 < cells.ncell[0]) add_pair(c, cells.cell(ix + 1, iy), {x[0] + 0.5 * H, x[1]});
      if (cells.dim == 2 && iy + 1 < cells.ncell[1]) add_pair(c, cells.cell(ix, iy + 1), {x[0], x[1] + 0.5 * H});
    }
  if (!merge_target) {
    FvaModel m{Mat::Zero(static_cast<Eigen::Index>(nc), static_cast<Eigen::Index>(nc)), pic};
    for (const auto& t : trip) m.K(t.row(), t.col()) += t.value();
    for (Eigen::Index i = 0; i < m.K.rows(); ++i) m.K(i, i) = -(m.K.row(i).sum() - m.K(i, i));
    return m;
  }
  const auto ns = static_cast<Eigen::Index>(cells.n_states);
  const Eigen::Index A = ns - 1;
  FvaModel m{Mat::Zero(ns, ns), Vec::Zero(ns)};
  for (std::size_t c = 0; c < nc; ++c) m.pi[cells.state[c]] += pic[static_cast<Eigen::Index>(c)];
  for (const auto& t : trip) {
    const int si = cells.state[static_cast<std::size_t>(t.row())], sj = cells.state[static_cast<std::size_t>(t.col())];
    if (si == sj) continue;
    if (si == A) continue;  // outgoing target rates come from detailed balance below
    m.K(si, sj) += t.value();
  }
  for (Eigen::Index i = 0; i < A; ++i) m.K(A, i) = m.pi[i] * m.K(i, A) / m.pi[A];
  for (Eigen::Index i = 0; i < ns; ++i) {
    m.K(i, i) = 0.0;
    m.K(i, i) = -m.K.row(i).sum();
  }
  return m;
}

/// Partition-of-unity basis sampled on a quadrature grid; the last function is adapted to the target.
struct Basis {
  BasisKind kind;
  QuadratureGrid grid;
  std::shared_ptr<const FluxOperator> op;
  std::vector<Vec> chi;
  std::optional<CellPartition> cells;
  std::optional<CommittorSet> committors;

  std::size_t n_states() const { return chi.size(); }
};

inline void validate_basis(const Basis& b, const ControlProblem& p, double tol = 1e-8) {
  const auto n = static_cast<Eigen::Index>(b.grid.size());
  if (b.chi.size() < 1) throw ValidationError("basis: no functions");
  Vec sum = Vec::Zero(n);
  for (const auto& c : b.chi) {
    if (c.size() != n) throw ValidationError("basis: function length does not match grid");
    sum += c;
  }
  if ((sum.array() - 1.0).abs().maxCoeff() > tol) throw ValidationError("basis: functions do not sum to one");
  const auto target = b.grid.mask(p.target);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!target[static_cast<std::size_t>(k)]) continue;
    if (std::abs(b.chi.back()[k] - 1.0) > tol) throw ValidationError("basis: last function must equal 1 on the target");
    for (std::size_t i = 0; i + 1 < b.chi.size(); ++i)
      if (std::abs(b.chi[i][k]) > tol) throw ValidationError("basis: non-target functions must vanish on the target");
  }
}

/// Indicator basis of H-cells sampled on a vertex grid of spacing h (H a multiple of h).
/// A node on a shared cell edge is split evenly; nodes in the closed target belong to it.
inline Basis make_indicator_basis(const ControlProblem& p, double H, double h) {
  CellPartition cells = make_cells(p, H);
  const double ratio = H / h;
  if (std::abs(ratio - std::round(ratio)) > 1e-8 * ratio) throw ValidationError("indicator basis: H must be a multiple of h");
  QuadratureGrid g = make_grid(p, h);
  const auto n = static_cast<Eigen::Index>(g.size());
  std::vector<Vec> chi(static_cast<std::size_t>(cells.n_states), Vec::Zero(n));
  const auto target = g.mask(p.target);
  const int r = static_cast<int>(std::lround(ratio));
  for (std::size_t k = 0; k < g.size(); ++k) {
    const auto idx = g.index(k);
    if (target[k]) {
      chi.back()[static_cast<Eigen::Index>(k)] = 1.0;
      continue;
    }
    // Per axis: the one or two cells touching this node and their weights.
    std::array<std::array<std::pair<int, double>, 2>, 2> axis{};
    std::array<int, 2> count{1, 1};
    axis[0][0] = axis[1][0] = {0, 1.0};
    for (int a = 0; a < g.dim(); ++a) {
      const int i = idx[a];
      if (i % r == 0 && i > 0 && i / r < cells.ncell[a]) {
        axis[a][0] = {i / r - 1, 0.5};
        axis[a][1] = {i / r, 0.5};
        count[a] = 2;
      } else {
        axis[a][0] = {std::min(i / r, cells.ncell[a] - 1), 1.0};
      }
    }
    for (int ax = 0; ax < count[0]; ++ax)
      for (int ay = 0; ay < count[1]; ++ay) {
        const auto c = cells.cell(axis[0][ax].first, g.dim() == 2 ? axis[1][ay].first : 0);
        chi[static_cast<std::size_t>(cells.state[c])][static_cast<Eigen::Index>(k)] +=
            axis[0][ax].second * (g.dim() == 2 ? axis[1][ay].second : 1.0);
      }
  }
  auto op = std::make_shared<const FluxOperator>(g, p.potential);
  Basis b{BasisKind::indicator, std::move(g), std::move(op), std::move(chi), std::move(cells), std::nullopt};
  validate_basis(b, p);
  return b;
}

/// Committor basis for the given non-target cores (the target is appended as the last core).
inline Basis make_committor_basis(const ControlProblem& p, const std::vector<Region>& cores, double h) {
  QuadratureGrid g = make_grid(p, h);
  auto op = std::make_shared<const FluxOperator>(g, p.potential);
  auto all = cores;
  all.push_back(p.target);
  CommittorSet set = compute_committors(g, *op, std::move(all));
  std::vector<Vec> chi = set.chi;
  Basis b{BasisKind::committor, std::move(g), std::move(op), std::move(chi), std::nullopt, std::move(set)};
  validate_basis(b, p);
  return b;
}

/// Matrices of the discrete dual problem. State n_states-1 is the target.
struct GeneratorModel {
  BasisKind kind = BasisKind::committor;
  double epsilon = 1.0;
  Mat K, F, Lambda, G, M_hat;
  Vec pi;

  Eigen::Index n_states() const { return K.rows(); }
  Eigen::Index target() const { return K.rows() - 1; }
};

/// Builds Lambda = diag(row sums of F) and G = K - (F - Lambda)/eps.
inline GeneratorModel make_model(Mat K, Mat F, Vec pi, Mat M_hat, double epsilon, BasisKind kind) {
  const Eigen::Index n = K.rows();
  if (K.cols() != n || F.rows() != n || F.cols() != n || pi.size() != n)
    throw ValidationError("generator model: dimension mismatch");
  if (M_hat.size() == 0) M_hat = pi.asDiagonal();
  GeneratorModel m;
  m.kind = kind;
  m.epsilon = epsilon;
  m.Lambda = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) m.Lambda(i, i) = F.row(i).sum();
  m.G = K - (F - m.Lambda) / epsilon;
  m.K = std::move(K);
  m.F = std::move(F);
  m.pi = std::move(pi);
  m.M_hat = std::move(M_hat);
  return m;
}

inline Mat mass_matrix(const Basis& b) {
  const auto n = static_cast<Eigen::Index>(b.n_states());
  Mat M(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j)
      M(i, j) = M(j, i) = inner_product_mu(b.grid, b.chi[static_cast<std::size_t>(i)], b.chi[static_cast<std::size_t>(j)]);
  return M;
}

inline GeneratorModel assemble(const ControlProblem& p, const Basis& b) {
  validate_basis(b, p);
  const auto n = static_cast<Eigen::Index>(b.n_states());
  const Vec fvals = b.grid.sample(p.cost);
  const Vec one = Vec::Ones(static_cast<Eigen::Index>(b.grid.size()));
  Vec piq(n);
  for (Eigen::Index i = 0; i < n; ++i) piq[i] = inner_product_mu(b.grid, b.chi[static_cast<std::size_t>(i)], one);
  Mat M = mass_matrix(b);
  Mat F = Mat::Zero(n, n);
  if (b.kind == BasisKind::indicator) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vec& c = b.chi[static_cast<std::size_t>(i)];
      F(i, i) = inner_product_mu(b.grid, c, fvals) / piq[i];
    }
    FvaModel fva = fva_generator(p, *b.cells);
    return make_model(std::move(fva.K), std::move(F), std::move(fva.pi), std::move(M), p.epsilon, b.kind);
  }
  Mat K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec fc = b.chi[static_cast<std::size_t>(i)].cwiseProduct(fvals);
    for (Eigen::Index j = i; j < n; ++j) {
      const double e = b.op->form(b.chi[static_cast<std::size_t>(i)], b.chi[static_cast<std::size_t>(j)]);
      K(i, j) = e;
      K(j, i) = e;
      const double fij = inner_product_mu(b.grid, fc, b.chi[static_cast<std::size_t>(j)]);
      F(i, j) = fij;
      F(j, i) = fij;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    K.row(i) /= piq[i];
    F.row(i) /= piq[i];
  }
  return make_model(std::move(K), std::move(F), std::move(piq), std::move(M), p.epsilon, b.kind);
}

struct GeneratorCheck {
  bool is_generator = true;
  double max_violation = 0.0;  // most negative off-diagonal entry of G (0 if none)
};

inline GeneratorCheck check_generator_condition(const GeneratorModel& m, double tol = 1e-12) {
  GeneratorCheck c;
  for (Eigen::Index i = 0; i < m.G.rows(); ++i)
    for (Eigen::Index j = 0; j < m.G.cols(); ++j)
      if (i != j) c.max_violation = std::min(c.max_violation, m.G(i, j));
  c.is_generator = c.max_violation >= -tol;
  return c;
}

/// Largest constant cost sigma for which G keeps nonnegative off-diagonals.
/// With f = sigma, G_ij = K_ij - sigma M_ij/(eps pi_i) off the diagonal.
inline double constant_cost_threshold(const GeneratorModel& unit_cost_model) {
  const Mat& K = unit_cost_model.K;
  const Mat& F1 = unit_cost_model.F;
  double s = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < K.rows(); ++i)
    for (Eigen::Index j = 0; j < K.cols(); ++j) {
      if (i == j) continue;
      if (K(i, j) < 0) return 0.0;
      if (F1(i, j) > 0) s = std::min(s, unit_cost_model.epsilon * K(i, j) / F1(i, j));
    }
  return s;
}

inline double constant_cost_threshold(const ControlProblem& p, const Basis& b) {
  return constant_cost_threshold(assemble(p.with_cost(RunningCost::constant(1.0)), b));
}

/// Solves sum_j (G - Lambda/eps)_ij phi_j = 0 off the target with phi_target = 1.
inline Vec solve_discrete_system(const GeneratorModel& m, double epsilon) {
  const Eigen::Index n = m.n_states(), nf = n - 1;
  Vec phi = Vec::Ones(n);
  if (nf == 0) return phi;
  const Mat A = m.G - m.Lambda / epsilon;
  Eigen::FullPivLU<Mat> lu(A.topLeftCorner(nf, nf));
  if (!lu.isInvertible()) throw NumericalError("solve_discrete_system: singular reduced system");
  phi.head(nf) = lu.solve(-A.topRightCorner(nf, 1));
  return phi;
}

inline Vec solve_discrete_system(const GeneratorModel& m) { return solve_discrete_system(m, m.epsilon); }

/// Weak residual pi_k * sum_j (G - Lambda/eps)_kj phi_j for the non-target test functions.
inline Vec galerkin_residual(const GeneratorModel& m, const Vec& phi_hat) {
  const Eigen::Index nf = m.n_states() - 1;
  Vec r = (m.G - m.Lambda / m.epsilon) * phi_hat;
  return r.head(nf).cwiseProduct(m.pi.head(nf));
}

inline Vec interpolate(const Basis& b, const Vec& coeffs) {
  if (static_cast<std::size_t>(coeffs.size()) != b.n_states()) throw ValidationError("interpolate: coefficient count mismatch");
  Vec u = Vec::Zero(static_cast<Eigen::Index>(b.grid.size()));
  for (std::size_t i = 0; i < b.n_states(); ++i) u += coeffs[static_cast<Eigen::Index>(i)] * b.chi[i];
  return u;
}

/// Scale-normalized structural invariants; every field should be near machine precision.
struct ModelInvariants {
  double K_row_sum = 0, K_detailed_balance = 0;
  double G_row_sum = 0, G_stationarity = 0, G_detailed_balance = 0;
  double F_detailed_balance = 0, F_min = 0;
  double pi_sum_error = 0;
  double M_symmetry = 0, M_min_eigenvalue = 0;
  double worst() const {
    return std::max({K_row_sum, K_detailed_balance, G_row_sum, G_stationarity, G_detailed_balance, F_detailed_balance,
                     pi_sum_error, M_symmetry});
  }
};

namespace detail {

inline double row_sum_error(const Mat& A) {
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  return A.rowwise().sum().cwiseAbs().maxCoeff() / scale;
}
inline double balance_error(const Vec& pi, const Mat& A) {
  const Mat flux = pi.asDiagonal() * A;
  const double scale = std::max(1.0, flux.cwiseAbs().maxCoeff());
  return (flux - flux.transpose()).cwiseAbs().maxCoeff() / scale;
}
inline double stationarity_error(const Vec& pi, const Mat& A) {
  const Mat flux = pi.asDiagonal() * A;
  const double scale = std::max(1.0, flux.cwiseAbs().maxCoeff());
  return (pi.transpose() * A).cwiseAbs().maxCoeff() / scale;
}

}  // namespace detail

inline ModelInvariants check_invariants(const GeneratorModel& m) {
  ModelInvariants r;
  r.K_row_sum = detail::row_sum_error(m.K);
  r.K_detailed_balance = detail::balance_error(m.pi, m.K);
  r.G_row_sum = detail::row_sum_error(m.G);
  r.G_stationarity = detail::stationarity_error(m.pi, m.G);
  r.G_detailed_balance = detail::balance_error(m.pi, m.G);
  r.F_detailed_balance = detail::balance_error(m.pi, m.F);
  r.F_min = m.F.minCoeff();
  r.pi_sum_error = std::abs(m.pi.sum() - 1.0);
  r.M_symmetry = (m.M_hat - m.M_hat.transpose()).cwiseAbs().maxCoeff();
  Eigen::SelfAdjointEigenSolver<Mat> es(m.M_hat);
  r.M_min_eigenvalue = es.eigenvalues().minCoeff();
  return r;
}

}  // namespace gctl
