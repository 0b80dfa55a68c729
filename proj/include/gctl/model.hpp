#pragma once

#include "gctl/common.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <variant>
#include <vector>

namespace gctl {

enum class PotentialForm { triple_well_1d, double_well_1d, tabulated, polynomial };

inline const char* to_string(PotentialForm f) {
  switch (f) {
    case PotentialForm::triple_well_1d: return "triple_well_1d";
    case PotentialForm::double_well_1d: return "double_well_1d";
    case PotentialForm::tabulated: return "tabulated";
    case PotentialForm::polynomial: return "polynomial";
  }
  return "unknown";
}

/// Monomial coef * x^px * y^py.
struct PolyTerm {
  double coef = 0.0;
  int px = 0;
  int py = 0;
};

namespace detail {

// Three Gaussian wells on a quartic confinement. Well centres are offset from
// +-3.4 so that the minima of the sum land at +-3.402 and 0.
struct TripleWell {
  static constexpr double a_out = 1.75, a_mid = 1.25, width = 1.1, centre = 3.6, quartic = 1.0;
  static double g(double y) { return std::exp(-y * y / (2 * width * width)); }
  double value(double x) const {
    return -a_out * (g(x - centre) + g(x + centre)) - a_mid * g(x) + quartic * std::pow(x / 5.0, 4);
  }
  double deriv(double x) const {
    const double s2 = width * width;
    auto dg = [&](double y) { return -y / s2 * g(y); };
    return -a_out * (dg(x - centre) + dg(x + centre)) - a_mid * dg(x) +
           quartic * 4.0 * x * x * x / 625.0;
  }
};

// b * ((x/a)^2 - 1)^2
struct DoubleWell {
  double barrier = 1.0;
  double a = 1.0;
  double value(double x) const {
    const double q = (x / a) * (x / a) - 1.0;
    return barrier * q * q;
  }
  double deriv(double x) const {
    const double q = (x / a) * (x / a) - 1.0;
    return barrier * 4.0 * q * x / (a * a);
  }
};

// Natural cubic spline through (x_k, v_k); linear continuation outside the table.
struct Tabulated {
  std::vector<double> x, v, m;  // m: second derivatives at knots

  Tabulated(std::vector<double> xs, std::vector<double> vs) : x(std::move(xs)), v(std::move(vs)) {
    const std::size_t n = x.size();
    if (n < 3 || v.size() != n) throw ValidationError("tabulated potential: need >= 3 matching knots");
    for (std::size_t i = 1; i < n; ++i)
      if (!(x[i] > x[i - 1])) throw ValidationError("tabulated potential: knots must increase strictly");
    // Thomas algorithm for the tridiagonal natural-spline system.
    m.assign(n, 0.0);
    std::vector<double> c(n, 0.0), d(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = x[i] - x[i - 1], h1 = x[i + 1] - x[i];
      const double a = h0, b = 2 * (h0 + h1), cc = h1;
      const double r = 6 * ((v[i + 1] - v[i]) / h1 - (v[i] - v[i - 1]) / h0);
      const double denom = b - a * c[i - 1];
      c[i] = cc / denom;
      d[i] = (r - a * d[i - 1]) / denom;
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
      m[i] = d[i] - c[i] * m[i + 1];
      if (i == 1) break;
    }
  }

  std::size_t segment(double t) const {
    auto it = std::upper_bound(x.begin(), x.end(), t);
    std::size_t k = static_cast<std::size_t>(it - x.begin());
    if (k == 0) return 0;
    return std::min(k - 1, x.size() - 2);
  }
  double value(double t) const {
    if (t < x.front()) return v.front() + deriv(x.front()) * (t - x.front());
    if (t > x.back()) return v.back() + deriv(x.back()) * (t - x.back());
    const std::size_t k = segment(t);
    const double h = x[k + 1] - x[k], A = (x[k + 1] - t) / h, B = (t - x[k]) / h;
    return A * v[k] + B * v[k + 1] + ((A * A * A - A) * m[k] + (B * B * B - B) * m[k + 1]) * h * h / 6.0;
  }
  double deriv(double t) const {
    const double tc = std::clamp(t, x.front(), x.back());
    const std::size_t k = segment(tc);
    const double h = x[k + 1] - x[k], A = (x[k + 1] - tc) / h, B = (tc - x[k]) / h;
    return (v[k + 1] - v[k]) / h - (3 * A * A - 1) / 6.0 * h * m[k] + (3 * B * B - 1) / 6.0 * h * m[k + 1];
  }
};

struct Polynomial {
  int dim = 1;
  std::vector<PolyTerm> terms;

  static double ipow(double b, int e) {
    double r = 1.0;
    for (int i = 0; i < e; ++i) r *= b;
    return r;
  }
  double value(const Point& p) const {
    double s = 0.0;
    for (const auto& t : terms) s += t.coef * ipow(p[0], t.px) * (dim > 1 ? ipow(p[1], t.py) : 1.0);
    return s;
  }
  Point gradient(const Point& p) const {
    Point g{0.0, 0.0};
    for (const auto& t : terms) {
      const double yy = dim > 1 ? ipow(p[1], t.py) : 1.0;
      if (t.px > 0) g[0] += t.coef * t.px * ipow(p[0], t.px - 1) * yy;
      if (dim > 1 && t.py > 0) g[1] += t.coef * t.py * ipow(p[0], t.px) * ipow(p[1], t.py - 1);
    }
    return g;
  }
};

}  // namespace detail

/// Scalar field V on the state space together with its gradient.
class Potential {
 public:
  static Potential triple_well() { return Potential(detail::TripleWell{}); }
  static Potential double_well(double barrier = 1.0, double a = 1.0) {
    if (!(barrier > 0) || !(a > 0)) throw ValidationError("double well: barrier and a must be positive");
    return Potential(detail::DoubleWell{barrier, a});
  }
  static Potential tabulated(std::vector<double> x, std::vector<double> v) {
    return Potential(detail::Tabulated(std::move(x), std::move(v)));
  }
  static Potential polynomial(int dim, std::vector<PolyTerm> terms) {
    if (dim != 1 && dim != 2) throw ValidationError("polynomial potential: dim must be 1 or 2");
    for (const auto& t : terms) {
      if (t.px < 0 || t.py < 0) throw ValidationError("polynomial potential: negative exponent");
      if (dim == 1 && t.py != 0) throw ValidationError("polynomial potential: y exponent in 1-D");
    }
    return Potential(detail::Polynomial{dim, std::move(terms)});
  }

  PotentialForm form() const {
    switch (impl_.index()) {
      case 0: return PotentialForm::triple_well_1d;
      case 1: return PotentialForm::double_well_1d;
      case 2: return PotentialForm::tabulated;
      default: return PotentialForm::polynomial;
    }
  }
  int dim() const {
    if (auto* p = std::get_if<detail::Polynomial>(&impl_)) return p->dim;
    return 1;
  }

  double value(const Point& p) const {
    return std::visit(
        [&](const auto& f) -> double {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, detail::Polynomial>) return f.value(p);
          else return f.value(p[0]);
        },
        impl_);
  }
  Point gradient(const Point& p) const {
    return std::visit(
        [&](const auto& f) -> Point {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, detail::Polynomial>) return f.gradient(p);
          else return {f.deriv(p[0]), 0.0};
        },
        impl_);
  }
  double value(double x) const { return value(Point{x, 0.0}); }
  double derivative(double x) const { return gradient(Point{x, 0.0})[0]; }

 private:
  using Impl = std::variant<detail::TripleWell, detail::DoubleWell, detail::Tabulated, detail::Polynomial>;
  explicit Potential(Impl impl) : impl_(std::move(impl)) {}
  Impl impl_;
};

inline Potential make_triple_well() { return Potential::triple_well(); }

/// Newton refinement of a 1-D critical point using a central-difference second derivative.
inline double refine_minimum_1d(const Potential& V, double seed, int max_iter = 100) {
  double x = seed;
  for (int it = 0; it < max_iter; ++it) {
    const double d1 = V.derivative(x);
    const double hh = 1e-5;
    const double d2 = (V.derivative(x + hh) - V.derivative(x - hh)) / (2 * hh);
    if (!(d2 > 0)) throw NumericalError("refine_minimum_1d: non-convex neighbourhood");
    const double step = d1 / d2;
    x -= step;
    if (std::abs(step) < 1e-14) break;
  }
  return x;
}

struct Box {
  Point lo{0.0, 0.0};
  Point hi{0.0, 0.0};
};

/// Axis-aligned box domain of dimension 1 or 2.
struct Domain {
  int dim = 1;
  Point lo{0.0, 0.0};
  Point hi{1.0, 1.0};

  static Domain interval(double a, double b) { return make(1, {a, 0.0}, {b, 0.0}); }
  static Domain rectangle(Point lo, Point hi) { return make(2, lo, hi); }
  static Domain make(int dim, Point lo, Point hi) {
    Domain d{dim, lo, hi};
    d.validate();
    return d;
  }
  void validate() const {
    if (dim != 1 && dim != 2) throw ValidationError("domain: dim must be 1 or 2");
    for (int a = 0; a < dim; ++a)
      if (!(lo[a] < hi[a])) throw ValidationError("domain: lo must be < hi on every axis");
  }
  bool contains(const Point& p) const {
    for (int a = 0; a < dim; ++a)
      if (p[a] < lo[a] || p[a] > hi[a]) return false;
    return true;
  }
};

/// Union of closed boxes; the target set and core sets are Regions.
struct Region {
  std::vector<Box> boxes;

  static Region interval(double a, double b) { return Region{{Box{{a, 0.0}, {b, 0.0}}}}; }
  static Region box(Point lo, Point hi) { return Region{{Box{lo, hi}}}; }

  bool empty() const { return boxes.empty(); }
  bool contains(const Point& p, int dim, double tol = 0.0) const {
    for (const auto& b : boxes) {
      bool in = true;
      for (int a = 0; a < dim; ++a)
        if (p[a] < b.lo[a] - tol || p[a] > b.hi[a] + tol) in = false;
      if (in) return true;
    }
    return false;
  }
  /// Every box lies in the open interior of the domain.
  bool strictly_inside(const Domain& d) const {
    for (const auto& b : boxes)
      for (int a = 0; a < d.dim; ++a)
        if (!(b.lo[a] > d.lo[a] && b.hi[a] < d.hi[a] && b.lo[a] <= b.hi[a])) return false;
    return true;
  }
};

enum class CostKind { constant, quadratic };

/// f(x) = sigma, or f(x) = f0 + f1 |x - centre|^2.
struct RunningCost {
  CostKind kind = CostKind::constant;
  double sigma = 0.0;
  double f0 = 0.0;
  double f1 = 0.0;
  Point centre{0.0, 0.0};

  static RunningCost constant(double s) { return RunningCost{CostKind::constant, s}; }
  static RunningCost quadratic(double f0, double f1, Point c) {
    return RunningCost{CostKind::quadratic, 0.0, f0, f1, c};
  }
  double operator()(const Point& p, int dim) const {
    if (kind == CostKind::constant) return sigma;
    double r2 = 0.0;
    for (int a = 0; a < dim; ++a) r2 += (p[a] - centre[a]) * (p[a] - centre[a]);
    return f0 + f1 * r2;
  }
  bool is_zero() const { return kind == CostKind::constant ? sigma == 0.0 : (f0 == 0.0 && f1 == 0.0); }
  /// Sup over the domain; the quadratic form peaks at a corner.
  double sup_norm(const Domain& d) const {
    if (kind == CostKind::constant) return std::abs(sigma);
    double r2 = 0.0;
    for (int a = 0; a < d.dim; ++a) {
      const double e = std::max(std::abs(d.lo[a] - centre[a]), std::abs(d.hi[a] - centre[a]));
      r2 += e * e;
    }
    return f0 + f1 * r2;
  }
  void validate() const {
    if (kind == CostKind::constant && !(sigma >= 0)) throw ValidationError("running cost: sigma must be >= 0");
    if (kind == CostKind::quadratic && !(f0 >= 0 && f1 >= 0))
      throw ValidationError("running cost: f0 and f1 must be >= 0");
  }
};

/// Full problem instance; validated on construction.
struct ControlProblem {
  Potential potential;
  Domain domain;
  double epsilon;
  Region target;
  RunningCost cost;

  ControlProblem(Potential V, Domain d, double eps, Region A, RunningCost f)
      : potential(std::move(V)), domain(d), epsilon(eps), target(std::move(A)), cost(f) {
    domain.validate();
    if (!(epsilon > 0) || !std::isfinite(epsilon)) throw ValidationError("problem: epsilon must be > 0");
    if (potential.dim() != domain.dim && !(potential.dim() == 1 && domain.dim == 1))
      throw ValidationError("problem: potential and domain dimensions differ");
    if (target.empty()) throw ValidationError("problem: target set is empty");
    if (!target.strictly_inside(domain)) throw ValidationError("problem: target must lie strictly inside the domain");
    cost.validate();
  }

  int dim() const { return domain.dim; }
  double f(const Point& p) const { return cost(p, domain.dim); }

  ControlProblem with_cost(RunningCost c) const { return ControlProblem(potential, domain, epsilon, target, c); }
  ControlProblem with_epsilon(double e) const { return ControlProblem(potential, domain, e, target, cost); }
};

/// Triple-well instance on [-5, 5] with the target core around +3.4.
inline ControlProblem triple_well_problem(double epsilon, double sigma, double delta = 0.2) {
  return ControlProblem(make_triple_well(), Domain::interval(-5.0, 5.0), epsilon,
                        Region::interval(3.4 - delta, 3.4 + delta), RunningCost::constant(sigma));
}

/// Non-target cores of the triple well, ordered left to right.
inline std::vector<Region> triple_well_cores(double delta = 0.2) {
  return {Region::interval(-3.4 - delta, -3.4 + delta), Region::interval(-delta, delta)};
}

/// Vertex-centred tensor grid with trapezoid (dual-cell) volumes and normalized Boltzmann weights.
class QuadratureGrid {
 public:
  QuadratureGrid(const Domain& d, const Potential& V, double epsilon, double h)
      : dim_(d.dim), h_(h), lo_(d.lo), hi_(d.hi), epsilon_(epsilon) {
    d.validate();
    if (!(h > 0)) throw ValidationError("grid: spacing must be positive");
    if (!(epsilon > 0)) throw ValidationError("grid: epsilon must be positive");
    for (int a = 0; a < dim_; ++a) {
      const double cells = (hi_[a] - lo_[a]) / h;
      const double r = std::round(cells);
      if (std::abs(cells - r) > 1e-8 * std::max(1.0, r) || r < 2)
        throw ValidationError("grid: spacing must divide every axis into >= 2 intervals");
      nodes_[a] = static_cast<int>(r) + 1;
    }
    if (dim_ == 1) nodes_[1] = 1;
    const std::size_t n = static_cast<std::size_t>(nodes_[0]) * static_cast<std::size_t>(nodes_[1]);
    V_.resize(n);
    vol_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      V_[k] = V.value(point(k));
      double vol = 1.0;
      const auto idx = index(k);
      for (int a = 0; a < dim_; ++a) vol *= (idx[a] == 0 || idx[a] == nodes_[a] - 1) ? 0.5 * h : h;
      vol_[k] = vol;
    }
    vmin_ = *std::min_element(V_.begin(), V_.end());
    w_.resize(n);
    std::vector<double> mass(n);
    for (std::size_t k = 0; k < n; ++k) {
      w_[k] = std::exp(-(V_[k] - vmin_) / epsilon);
      mass[k] = w_[k] * vol_[k];
    }
    Z_ = pairwise_sum(mass);
    m_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      w_[k] /= Z_;
      m_[k] = mass[k] / Z_;
    }
  }

  int dim() const { return dim_; }
  double h() const { return h_; }
  double epsilon() const { return epsilon_; }
  int nodes(int axis) const { return nodes_[axis]; }
  std::size_t size() const { return V_.size(); }
  Point lo() const { return lo_; }
  Point hi() const { return hi_; }

  std::array<int, 2> index(std::size_t k) const {
    return {static_cast<int>(k % static_cast<std::size_t>(nodes_[0])),
            static_cast<int>(k / static_cast<std::size_t>(nodes_[0]))};
  }
  std::size_t linear(int ix, int iy) const {
    return static_cast<std::size_t>(ix) + static_cast<std::size_t>(nodes_[0]) * static_cast<std::size_t>(iy);
  }
  Point point(std::size_t k) const {
    const auto i = index(k);
    Point p{lo_[0] + h_ * i[0], 0.0};
    if (dim_ == 2) p[1] = lo_[1] + h_ * i[1];
    return p;
  }
  /// Node containing x (nearest), per axis.
  std::size_t nearest(const Point& p) const {
    int ix = static_cast<int>(std::lround((p[0] - lo_[0]) / h_));
    ix = std::clamp(ix, 0, nodes_[0] - 1);
    int iy = 0;
    if (dim_ == 2) iy = std::clamp(static_cast<int>(std::lround((p[1] - lo_[1]) / h_)), 0, nodes_[1] - 1);
    return linear(ix, iy);
  }

  const std::vector<double>& potential_values() const { return V_; }
  const std::vector<double>& volumes() const { return vol_; }
  /// Boltzmann density, normalized so that sum(w * vol) == 1.
  const std::vector<double>& weights() const { return w_; }
  /// Node masses w * vol (a probability vector).
  const std::vector<double>& masses() const { return m_; }
  double min_potential() const { return vmin_; }
  /// Normalizer of exp(-(V - Vmin)/eps) on this grid.
  double partition_function() const { return Z_; }

  /// Boolean node mask for a region (closed, with a tolerance of 1e-9 h).
  std::vector<char> mask(const Region& r) const {
    std::vector<char> out(size(), 0);
    for (std::size_t k = 0; k < size(); ++k) out[k] = r.contains(point(k), dim_, 1e-9 * h_) ? 1 : 0;
    return out;
  }
  Vec sample(const RunningCost& f) const {
    Vec out(static_cast<Eigen::Index>(size()));
    for (std::size_t k = 0; k < size(); ++k) out[static_cast<Eigen::Index>(k)] = f(point(k), dim_);
    return out;
  }

 private:
  int dim_;
  double h_;
  Point lo_, hi_;
  double epsilon_;
  std::array<int, 2> nodes_{1, 1};
  std::vector<double> V_, vol_, w_, m_;
  double vmin_ = 0.0, Z_ = 1.0;
};

inline QuadratureGrid make_grid(const ControlProblem& p, double h) {
  return QuadratureGrid(p.domain, p.potential, p.epsilon, h);
}

/// <u, v>_mu = sum_i u_i v_i w_i vol_i.
inline double inner_product_mu(const QuadratureGrid& g, std::span<const double> u, std::span<const double> v) {
  if (u.size() != g.size() || v.size() != g.size()) throw ValidationError("inner_product_mu: length mismatch");
  const auto& m = g.masses();
  std::vector<double> terms(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) terms[i] = u[i] * v[i] * m[i];
  return pairwise_sum(terms);
}

inline double inner_product_mu(const QuadratureGrid& g, const Vec& u, const Vec& v) {
  return inner_product_mu(g, std::span<const double>(u.data(), static_cast<std::size_t>(u.size())),
                          std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

inline double norm_mu(const QuadratureGrid& g, const Vec& u) { return std::sqrt(inner_product_mu(g, u, u)); }

}  // namespace gctl
