#pragma once

#include "gctl/io.hpp"

#include <random>

namespace gctl::fixtures {

inline Potential flat_potential() { return Potential::polynomial(1, {}); }

/// V = 0 on [0, 1.2] with target [a, 1.1] and constant cost.
inline ControlProblem flat_problem(double epsilon, double sigma, double a = 0.9) {
  return ControlProblem(flat_potential(), Domain::interval(0.0, 1.2), epsilon, Region::interval(a, 1.1), RunningCost::constant(sigma));
}

/// Random smooth 1-D potential on [-2, 2]: confining quartic plus a few random bumps.
inline Potential random_potential(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<double> x, v;
  const double a = U(rng), b = U(rng), c = U(rng);
  for (int k = 0; k <= 80; ++k) {
    const double t = -2.0 + 0.05 * k;
    x.push_back(t);
    v.push_back(0.25 * t * t * t * t + 0.5 * a * std::sin(2 * t) + 0.3 * b * std::cos(3 * t + c));
  }
  return Potential::tabulated(x, v);
}

inline Mat random_generator(std::mt19937_64& rng, int n, double lo = 0.2, double hi = 1.5) {
  std::uniform_real_distribution<double> U(lo, hi);
  Mat G = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      if (i != j) G(i, j) = U(rng);
    G(i, i) = -G.row(i).sum();
  }
  return G;
}

/// Random reversible (pi, K) pair: K_ij = S_ij / pi_i with symmetric S.
inline std::pair<Vec, Mat> random_reversible(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> U(0.1, 1.0);
  Vec pi(n);
  for (int i = 0; i < n; ++i) pi[i] = U(rng);
  pi /= pi.sum();
  Mat K = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double s = 0.1 * U(rng);
      K(i, j) = s / pi[i];
      K(j, i) = s / pi[j];
    }
  for (int i = 0; i < n; ++i) K(i, i) = -K.row(i).sum();
  return {pi, K};
}

}  // namespace gctl::fixtures
