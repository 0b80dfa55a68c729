#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gctl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// A point in the state space. Only the first `dim` coordinates are used.
using Point = std::array<double, 2>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input or a violated precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure failed (singular system, non-convergence, positivity fault).
class NumericalError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline double pairwise_sum(std::span<const double> x) {
  if (x.size() <= 16) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

}  // namespace detail

/// Sum with O(log n) error growth; independent of evaluation threads.
inline double pairwise_sum(std::span<const double> x) { return detail::pairwise_sum(x); }

struct MeanAndError {
  double mean = 0.0;
  double std_error = 0.0;
};

inline MeanAndError mean_and_error(std::span<const double> samples) {
  MeanAndError r;
  const std::size_t n = samples.size();
  if (n == 0) return r;
  r.mean = pairwise_sum(samples) / static_cast<double>(n);
  if (n < 2) return r;
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = samples[i] - r.mean;
    sq[i] = d * d;
  }
  const double var = pairwise_sum(sq) / static_cast<double>(n - 1);
  r.std_error = std::sqrt(var / static_cast<double>(n));
  return r;
}

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double residual_rms = 0.0;
};

/// Ordinary least-squares line y = intercept + slope * x.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("fit_line: length mismatch");
  if (x.size() < 2) throw ValidationError("fit_line: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0) throw ValidationError("fit_line: abscissae are all equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    rss += r * r;
  }
  f.residual_rms = std::sqrt(rss / n);
  return f;
}

/// Observed convergence order: least-squares slope of log(err) against log(h).
inline double fit_order(std::span<const double> h, std::span<const double> err) {
  std::vector<double> lh(h.size()), le(err.size());
  for (std::size_t i = 0; i < h.size(); ++i) lh[i] = std::log(h[i]);
  for (std::size_t i = 0; i < err.size(); ++i) {
    if (!(err[i] > 0)) throw NumericalError("fit_order: non-positive error value");
    le[i] = std::log(err[i]);
  }
  return fit_line(lh, le).slope;
}

/// Shortest round-trip representation used for every CSV/JSON number (17 significant digits).
inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

inline Vec to_vec(std::span<const double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

}  // namespace gctl
