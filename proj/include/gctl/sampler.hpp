#pragma once

#include "gctl/mdp.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace gctl {

/// Counter-based generator: output k of stream s is splitmix64(key(seed, s) + k * gamma).
/// Streams are independent of each other and of evaluation order.
class StreamRng {
 public:
  using result_type = std::uint64_t;
  StreamRng(std::uint64_t seed, std::uint64_t stream) : key_(mix(seed ^ mix(stream + 0x632BE59BD9B4E019ULL))) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() { return mix(key_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Runs fn(0..n-1) on up to `threads` workers with a static partition; output order is fixed.
template <class Fn>
auto parallel_map(std::size_t n, int threads, Fn fn) -> std::vector<decltype(fn(std::size_t{0}))> {
  using T = decltype(fn(std::size_t{0}));
  std::vector<T> out(n);
  const std::size_t nt = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n));
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(nt);
  for (std::size_t t = 0; t < nt; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t * n / nt; i < (t + 1) * n / nt; ++i) out[i] = fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

using DriftFn = std::function<Point(const Point&)>;

struct SdePath {
  int dim = 1;
  double dt = 0.0;      // integrator step
  int stride = 1;       // steps between stored frames
  std::uint64_t seed = 0;
  std::vector<Point> states;

  double frame_dt() const { return dt * stride; }
};

namespace detail {

inline double reflect(double x, double lo, double hi) {
  if (x < lo) x = 2 * lo - x;
  else if (x > hi) x = 2 * hi - x;
  if (x < lo || x > hi) throw NumericalError("simulate_sde: step left the domain after one reflection; reduce dt");
  return x;
}

/// One Euler-Maruyama step with per-axis mirror reflection.
struct EulerStepper {
  const ControlProblem& p;
  double dt;
  double noise;
  const DriftFn* extra;
  std::normal_distribution<double> normal{0.0, 1.0};

  EulerStepper(const ControlProblem& prob, double step, const DriftFn* u)
      : p(prob), dt(step), noise(std::sqrt(2 * prob.epsilon * step)), extra(u && *u ? u : nullptr) {
    if (!(step > 0)) throw ValidationError("simulate_sde: dt must be positive");
  }
  void step(Point& x, StreamRng& rng) {
    const Point g = p.potential.gradient(x);
    Point u{0.0, 0.0};
    if (extra) u = (*extra)(x);
    for (int a = 0; a < p.dim(); ++a) {
      const double y = x[a] + (u[a] - g[a]) * dt + noise * normal(rng);
      x[a] = reflect(y, p.domain.lo[a], p.domain.hi[a]);
    }
  }
};

inline int core_of(const std::vector<Region>& cores, const Point& x, int dim) {
  for (std::size_t c = 0; c < cores.size(); ++c)
    if (cores[c].contains(x, dim)) return static_cast<int>(c);
  return -1;
}

}  // namespace detail

/// Euler-Maruyama path of dX = (u - grad V) dt + sqrt(2 eps) dB with reflection at the boundary.
inline SdePath simulate_sde(const ControlProblem& p, double dt, std::size_t n_steps, const Point& x0, std::uint64_t seed,
                            const DriftFn& drift_extra = {}, int stride = 1) {
  if (!p.domain.contains(x0)) throw ValidationError("simulate_sde: x0 outside the domain");
  if (stride < 1) throw ValidationError("simulate_sde: stride must be >= 1");
  detail::EulerStepper st(p, dt, &drift_extra);
  StreamRng rng(seed, 0);
  SdePath path{p.dim(), dt, stride, seed, {}};
  path.states.reserve(n_steps / static_cast<std::size_t>(stride) + 1);
  Point x = x0;
  path.states.push_back(x);
  for (std::size_t k = 1; k <= n_steps; ++k) {
    st.step(x, rng);
    if (k % static_cast<std::size_t>(stride) == 0) path.states.push_back(x);
  }
  return path;
}

/// Per-frame milestoning labels; -1 marks an undefined label.
struct MilestoneTrace {
  std::vector<int> minus;  // last core visited
  std::vector<int> plus;   // next core to be visited
  double frame_dt = 1.0;
  int n_cores = 0;

  std::size_t size() const { return minus.size(); }
};

namespace detail {

// in_core[k]: core of frame k; first_hit[k]: first core entered strictly after frame k and
// up to frame k+1 (-1 if none); last_seen[k]: backward label at frame k.
inline void finish_plus(MilestoneTrace& tr, const std::vector<int>& in_core, const std::vector<int>& first_hit) {
  const std::size_t n = in_core.size();
  tr.plus.assign(n, -1);
  int next = -1;
  for (std::size_t k = n; k-- > 0;) {
    if (in_core[k] >= 0) next = in_core[k];
    else if (k + 1 < n && first_hit[k] >= 0) next = first_hit[k];
    tr.plus[k] = next;
  }
}

}  // namespace detail

inline MilestoneTrace milestone_trace(const SdePath& path, const std::vector<Region>& cores) {
  const std::size_t n = path.states.size();
  MilestoneTrace tr;
  tr.frame_dt = path.frame_dt();
  tr.n_cores = static_cast<int>(cores.size());
  std::vector<int> in_core(n), first_hit(n, -1);
  tr.minus.assign(n, -1);
  int last = -1;
  bool any = false;
  for (std::size_t k = 0; k < n; ++k) {
    in_core[k] = detail::core_of(cores, path.states[k], path.dim);
    if (in_core[k] >= 0) {
      last = in_core[k];
      any = true;
    }
    tr.minus[k] = last;
    if (k > 0) first_hit[k - 1] = in_core[k];
  }
  if (!any) throw ValidationError("milestone_trace: the path never visits a core");
  detail::finish_plus(tr, in_core, first_hit);
  return tr;
}

/// Long milestoned SDE run; every integrator step is checked for core entries, frames are
/// stored every `stride` steps together with f(X) at the frame.
struct MilestonedRun {
  MilestoneTrace trace;
  std::vector<double> f_values;
  std::size_t core_changes = 0;  // number of changes of the backward label
};

inline MilestonedRun simulate_milestoned(const ControlProblem& p, const std::vector<Region>& cores, double dt,
                                         std::size_t n_steps, const Point& x0, std::uint64_t seed, int stride) {
  if (!p.domain.contains(x0)) throw ValidationError("simulate_milestoned: x0 outside the domain");
  if (stride < 1) throw ValidationError("simulate_milestoned: stride must be >= 1");
  detail::EulerStepper st(p, dt, nullptr);
  StreamRng rng(seed, 0);
  const std::size_t nf = n_steps / static_cast<std::size_t>(stride) + 1;
  MilestonedRun run;
  run.trace.frame_dt = dt * stride;
  run.trace.n_cores = static_cast<int>(cores.size());
  run.trace.minus.reserve(nf);
  run.f_values.reserve(nf);
  std::vector<int> in_core, first_hit;
  in_core.reserve(nf);
  first_hit.reserve(nf);
  Point x = x0;
  int last = detail::core_of(cores, x, p.dim());
  in_core.push_back(last);
  run.trace.minus.push_back(last);
  run.f_values.push_back(p.f(x));
  int hit = -1;
  for (std::size_t k = 1; k <= n_steps; ++k) {
    st.step(x, rng);
    const int c = detail::core_of(cores, x, p.dim());
    if (c >= 0) {
      if (hit < 0) hit = c;
      if (c != last) {
        if (last >= 0) ++run.core_changes;
        last = c;
      }
    }
    if (k % static_cast<std::size_t>(stride) == 0) {
      first_hit.push_back(hit);
      hit = -1;
      in_core.push_back(c);
      run.trace.minus.push_back(last);
      run.f_values.push_back(p.f(x));
    }
  }
  first_hit.push_back(-1);
  detail::finish_plus(run.trace, in_core, first_hit);
  return run;
}

struct JumpPath {
  std::vector<double> times;  // entry time of each visited state, times[0] = 0
  std::vector<int> states;
  double t_end = 0.0;         // end of observation (hitting time if hit_target)
  bool hit_target = false;
  std::uint64_t seed = 0;
};

namespace detail {

struct JumpSampler {
  const Mat& G;
  std::exponential_distribution<double> expo{1.0};
  std::uniform_real_distribution<double> unif{0.0, 1.0};

  double rate(int s) const { return -G(s, s); }
  double holding(int s, StreamRng& rng) { return expo(rng) / rate(s); }
  int next(int s, StreamRng& rng) {
    const double u = unif(rng) * rate(s);
    double acc = 0.0;
    int last = -1;
    for (Eigen::Index j = 0; j < G.cols(); ++j) {
      if (j == s || G(s, j) <= 0) continue;
      acc += G(s, j);
      last = static_cast<int>(j);
      if (u < acc) return last;
    }
    return last;
  }
};

inline void require_generator(const Mat& G, const char* what) {
  for (Eigen::Index i = 0; i < G.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < G.cols(); ++j) {
      if (i != j && G(i, j) < 0) throw ValidationError(std::string(what) + ": negative off-diagonal rate");
      s += G(i, j);
    }
    if (std::abs(s) > 1e-9 * std::max(1.0, std::abs(G(i, i)))) throw ValidationError(std::string(what) + ": rows must sum to zero");
  }
}

}  // namespace detail

/// Gillespie path from i0 until t_max, or until a target state is entered when a target is given.
inline JumpPath simulate_jump(const Mat& G, int i0, double t_max, const std::vector<int>& target, std::uint64_t seed,
                              std::uint64_t stream = 0) {
  detail::require_generator(G, "simulate_jump");
  if (i0 < 0 || i0 >= G.rows()) throw ValidationError("simulate_jump: start state out of range");
  std::vector<char> is_t(static_cast<std::size_t>(G.rows()), 0);
  for (int t : target) is_t[static_cast<std::size_t>(t)] = 1;
  StreamRng rng(seed, stream);
  detail::JumpSampler js{G};
  JumpPath path;
  path.seed = seed;
  double t = 0.0;
  int s = i0;
  path.times.push_back(0.0);
  path.states.push_back(s);
  if (is_t[static_cast<std::size_t>(s)]) {
    path.hit_target = true;
    return path;
  }
  for (;;) {
    if (js.rate(s) <= 0) {
      if (!target.empty()) throw NumericalError("simulate_jump: absorbing state reached before the target");
      path.t_end = t_max;
      return path;
    }
    const double dt = js.holding(s, rng);
    if (t + dt >= t_max) {
      path.t_end = t_max;
      return path;
    }
    t += dt;
    s = js.next(s, rng);
    path.times.push_back(t);
    path.states.push_back(s);
    if (is_t[static_cast<std::size_t>(s)]) {
      path.t_end = t;
      path.hit_target = true;
      return path;
    }
  }
}

/// State of a jump path at time t (piecewise constant, right-continuous).
inline int state_at(const JumpPath& p, double t) {
  auto it = std::upper_bound(p.times.begin(), p.times.end(), t);
  return p.states[static_cast<std::size_t>(it - p.times.begin()) - 1];
}

/// Jump path sampled at frames with every state treated as its own core.
inline MilestoneTrace trace_from_jump_path(const JumpPath& p, double frame_dt, int n_states) {
  MilestoneTrace tr;
  tr.frame_dt = frame_dt;
  tr.n_cores = n_states;
  const auto n = static_cast<std::size_t>(std::floor(p.t_end / frame_dt)) + 1;
  tr.minus.resize(n);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * frame_dt;
    while (seg + 1 < p.times.size() && p.times[seg + 1] <= t) ++seg;
    tr.minus[k] = p.states[seg];
  }
  tr.plus = tr.minus;
  return tr;
}

struct CoreMsmEstimate {
  std::vector<double> tau;
  std::vector<Mat> P;
  Mat M;
  Vec pi;
  std::vector<Mat> K_est, K_se;
  Mat K0, K0_se;  // linear extrapolation to tau = 0 (valid when >= 2 lags)
  std::size_t frames_used = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline Mat row_normalize(const Mat& C, const Vec& n) {
  Mat P = C;
  for (Eigen::Index i = 0; i < C.rows(); ++i) P.row(i) = n[i] > 0 ? Mat(C.row(i) / n[i]) : Mat::Constant(1, C.cols(), std::nan(""));
  return P;
}

inline Mat entry_se(const std::vector<Mat>& samples) {
  const Eigen::Index r = samples.front().rows(), c = samples.front().cols();
  Mat se = Mat::Zero(r, c);
  if (samples.size() < 2) return se;
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) {
      std::vector<double> x;
      for (const auto& s : samples) x.push_back(s(i, j));
      const auto me = mean_and_error(x);
      se(i, j) = me.std_error;
    }
  return se;
}

inline Mat extrapolate_entries(const std::vector<double>& tau, const std::vector<Mat>& K) {
  Mat out(K.front().rows(), K.front().cols());
  std::vector<double> y(tau.size());
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      for (std::size_t l = 0; l < tau.size(); ++l) y[l] = K[l](i, j);
      out(i, j) = fit_line(tau, y).intercept;
    }
  return out;
}

}  // namespace detail

/// Core MSM from milestoning labels: P^tau_ij = P(X+_{t+tau} = j | X-_t = i), M_ij = P(X+_t = j | X-_t = i),
/// K(tau) = (P^tau - M)/tau. All lags use one common frame set, so K(tau) rows sum to zero.
/// Standard errors come from batch means over `n_blocks` contiguous blocks.
inline CoreMsmEstimate estimate_core_msm(const MilestoneTrace& tr, const std::vector<int>& lags, int n_blocks = 1) {
  if (lags.empty()) throw ValidationError("estimate_core_msm: no lag given");
  for (int l : lags)
    if (l < 1) throw ValidationError("estimate_core_msm: lags must be >= 1 frame");
  if (n_blocks < 1) throw ValidationError("estimate_core_msm: n_blocks must be >= 1");
  const int n = tr.n_cores;
  const int lmax = *std::max_element(lags.begin(), lags.end());
  std::vector<std::size_t> frames;
  for (std::size_t t = 0; t + static_cast<std::size_t>(lmax) < tr.size(); ++t)
    if (tr.minus[t] >= 0 && tr.plus[t] >= 0 && tr.plus[t + static_cast<std::size_t>(lmax)] >= 0) frames.push_back(t);
  if (frames.empty()) throw ValidationError("estimate_core_msm: no frame with defined labels");
  const std::size_t L = lags.size();
  const auto B = static_cast<std::size_t>(n_blocks);
  std::vector<Vec> cnt(B, Vec::Zero(n));
  std::vector<Mat> cm(B, Mat::Zero(n, n));
  std::vector<std::vector<Mat>> cp(B, std::vector<Mat>(L, Mat::Zero(n, n)));
  for (std::size_t q = 0; q < frames.size(); ++q) {
    const std::size_t b = q * B / frames.size();
    const std::size_t t = frames[q];
    const int i = tr.minus[t];
    cnt[b][i] += 1;
    cm[b](i, tr.plus[t]) += 1;
    for (std::size_t l = 0; l < L; ++l) cp[b][l](i, tr.plus[t + static_cast<std::size_t>(lags[l])]) += 1;
  }
  CoreMsmEstimate e;
  e.frames_used = frames.size();
  for (int l : lags) e.tau.push_back(l * tr.frame_dt);
  Vec N = Vec::Zero(n);
  Mat CM = Mat::Zero(n, n);
  std::vector<Mat> CP(L, Mat::Zero(n, n));
  for (std::size_t b = 0; b < B; ++b) {
    N += cnt[b];
    CM += cm[b];
    for (std::size_t l = 0; l < L; ++l) CP[l] += cp[b][l];
  }
  for (int i = 0; i < n; ++i)
    if (N[i] == 0) e.warnings.push_back("state " + std::to_string(i) + " never observed as backward label");
  e.pi = N / N.sum();
  e.M = detail::row_normalize(CM, N);
  for (std::size_t l = 0; l < L; ++l) {
    e.P.push_back(detail::row_normalize(CP[l], N));
    e.K_est.push_back((e.P[l] - e.M) / e.tau[l]);
  }
  // Batch means.
  std::vector<std::vector<Mat>> Kb(L);
  std::vector<Mat> K0b;
  for (std::size_t b = 0; b < B; ++b) {
    const Mat Mb = detail::row_normalize(cm[b], cnt[b]);
    std::vector<Mat> kb;
    for (std::size_t l = 0; l < L; ++l) {
      kb.push_back((detail::row_normalize(cp[b][l], cnt[b]) - Mb) / e.tau[l]);
      Kb[l].push_back(kb.back());
    }
    if (L >= 2) K0b.push_back(detail::extrapolate_entries(e.tau, kb));
  }
  for (std::size_t l = 0; l < L; ++l) e.K_se.push_back(detail::entry_se(Kb[l]));
  if (L >= 2) {
    e.K0 = detail::extrapolate_entries(e.tau, e.K_est);
    e.K0_se = detail::entry_se(K0b);
  } else {
    e.K0 = e.K_est.front();
    e.K0_se = e.K_se.front();
  }
  return e;
}

struct MatrixEstimate {
  Mat value;
  Mat se;
};

/// F_ij = E[f(X_t) 1{X+_t = j} | X-_t = i] with batch-mean standard errors.
inline MatrixEstimate estimate_F(const MilestoneTrace& tr, const std::vector<double>& f, int n_blocks = 1) {
  if (f.size() != tr.size()) throw ValidationError("estimate_F: f length does not match the trace");
  const int n = tr.n_cores;
  std::vector<std::size_t> frames;
  for (std::size_t t = 0; t < tr.size(); ++t)
    if (tr.minus[t] >= 0 && tr.plus[t] >= 0) frames.push_back(t);
  if (frames.empty()) throw ValidationError("estimate_F: no frame with defined labels");
  const auto B = static_cast<std::size_t>(std::max(1, n_blocks));
  std::vector<Vec> cnt(B, Vec::Zero(n));
  std::vector<Mat> sum(B, Mat::Zero(n, n));
  for (std::size_t q = 0; q < frames.size(); ++q) {
    const std::size_t b = q * B / frames.size();
    const std::size_t t = frames[q];
    cnt[b][tr.minus[t]] += 1;
    sum[b](tr.minus[t], tr.plus[t]) += f[t];
  }
  Vec N = Vec::Zero(n);
  Mat S = Mat::Zero(n, n);
  std::vector<Mat> per;
  for (std::size_t b = 0; b < B; ++b) {
    N += cnt[b];
    S += sum[b];
    per.push_back(detail::row_normalize(sum[b], cnt[b]));
  }
  return {detail::row_normalize(S, N), detail::entry_se(per)};
}

/// Least-squares line through (tau, y); the intercept is the zero-lag estimate.
inline LineFit extrapolate_tau(const std::vector<double>& tau, const std::vector<double>& y) {
  if (tau.size() < 2) throw ValidationError("extrapolate_tau: need at least two lag values");
  return fit_line(tau, y);
}

/// Full-partition MSM from one long jump path with exact continuous-time lagged overlaps:
/// P^tau_ij = int 1{X_t = i, X_{t+tau} = j} dt / int 1{X_t = i} dt over t in [0, T - tau_max].
inline CoreMsmEstimate estimate_jump_msm(const JumpPath& p, int n_states, const std::vector<double>& taus, int n_blocks = 1) {
  if (taus.empty()) throw ValidationError("estimate_jump_msm: no lag given");
  const double tmax = *std::max_element(taus.begin(), taus.end());
  const double T = p.t_end - tmax;
  if (!(T > 0)) throw ValidationError("estimate_jump_msm: path shorter than the largest lag");
  const auto B = static_cast<std::size_t>(std::max(1, n_blocks));
  const std::size_t L = taus.size();
  const double block = T / static_cast<double>(B);
  std::vector<Vec> occ(B, Vec::Zero(n_states));
  std::vector<std::vector<Mat>> ov(B, std::vector<Mat>(L, Mat::Zero(n_states, n_states)));
  const std::size_t ns = p.states.size();
  auto seg_end = [&](std::size_t k) { return k + 1 < ns ? p.times[k + 1] : p.t_end; };
  // Occupation over [0, T], split at block edges.
  auto add_interval = [&](double a, double b, auto&& fn) {
    while (a < b) {
      auto blk = std::min(B - 1, static_cast<std::size_t>(a / block));
      if (blk + 1 < B && (blk + 1) * block <= a) ++blk;  // a sits on an edge up to rounding
      const double e = std::min(b, (blk + 1 == B) ? b : (blk + 1) * block);
      fn(blk, e - a);
      a = e;
    }
  };
  for (std::size_t k = 0; k < ns && p.times[k] < T; ++k) {
    const int s = p.states[k];
    add_interval(p.times[k], std::min(seg_end(k), T), [&](std::size_t b, double d) { occ[b][s] += d; });
  }
  for (std::size_t l = 0; l < L; ++l) {
    const double tau = taus[l];
    std::size_t k = 0, m = 0;  // segment of X_t and of X_{t+tau}
    double t = 0.0;
    while (m + 1 < ns && p.times[m + 1] <= tau) ++m;
    while (t < T) {
      const double e = std::min({seg_end(k), seg_end(m) - tau, T});
      const int i = p.states[k], j = p.states[m];
      add_interval(t, e, [&](std::size_t b, double d) { ov[b][l](i, j) += d; });
      t = e;
      if (seg_end(k) <= t && k + 1 < ns) ++k;
      if (seg_end(m) - tau <= t && m + 1 < ns) ++m;
    }
  }
  CoreMsmEstimate est;
  est.tau = taus;
  est.M = Mat::Identity(n_states, n_states);
  Vec N = Vec::Zero(n_states);
  std::vector<Mat> O(L, Mat::Zero(n_states, n_states));
  for (std::size_t b = 0; b < B; ++b) {
    N += occ[b];
    for (std::size_t l = 0; l < L; ++l) O[l] += ov[b][l];
  }
  for (int i = 0; i < n_states; ++i)
    if (N[i] == 0) est.warnings.push_back("state " + std::to_string(i) + " never visited");
  est.pi = N / N.sum();
  std::vector<std::vector<Mat>> Kb(L);
  std::vector<Mat> K0b;
  for (std::size_t l = 0; l < L; ++l) {
    est.P.push_back(detail::row_normalize(O[l], N));
    est.K_est.push_back((est.P[l] - est.M) / taus[l]);
  }
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<Mat> kb;
    for (std::size_t l = 0; l < L; ++l) {
      kb.push_back((detail::row_normalize(ov[b][l], occ[b]) - est.M) / taus[l]);
      Kb[l].push_back(kb.back());
    }
    if (L >= 2) K0b.push_back(detail::extrapolate_entries(taus, kb));
  }
  for (std::size_t l = 0; l < L; ++l) est.K_se.push_back(detail::entry_se(Kb[l]));
  if (L >= 2) {
    est.K0 = detail::extrapolate_entries(taus, est.K_est);
    est.K0_se = detail::entry_se(K0b);
  } else {
    est.K0 = est.K_est.front();
    est.K0_se = est.K_se.front();
  }
  return est;
}

struct FkEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n_paths = 0;
  std::size_t n_censored = 0;  // paths stopped by the budget before reaching the target
};

/// Chain Feynman-Kac estimate of E_i0[exp(-(1/eps) int_0^tau_A fhat(X_s) ds)] by Gillespie paths.
inline FkEstimate feynman_kac_chain(const Mat& G, const Vec& fhat, double epsilon, const std::vector<int>& target, int i0,
                                    std::size_t n_paths, std::uint64_t seed, double t_max = 1e12, int threads = 1,
                                    std::uint64_t stream_offset = 0) {
  if (n_paths == 0) throw ValidationError("feynman_kac_chain: n_paths must be positive");
  if (target.empty()) throw ValidationError("feynman_kac_chain: empty target");
  detail::require_generator(G, "feynman_kac_chain");
  struct Out {
    double w = 0.0;
    bool censored = false;
  };
  auto res = parallel_map(n_paths, threads, [&](std::size_t k) {
    const JumpPath jp = simulate_jump(G, i0, t_max, target, seed, stream_offset + k);
    double I = 0.0;
    for (std::size_t s = 0; s < jp.states.size(); ++s) {
      const double end = s + 1 < jp.states.size() ? jp.times[s + 1] : jp.t_end;
      if (!(s + 1 == jp.states.size() && jp.hit_target)) I += fhat[jp.states[s]] * (end - jp.times[s]);
    }
    return Out{std::exp(-I / epsilon), !jp.hit_target};
  });
  std::vector<double> w(n_paths);
  FkEstimate e;
  e.n_paths = n_paths;
  for (std::size_t k = 0; k < n_paths; ++k) {
    w[k] = res[k].w;
    e.n_censored += res[k].censored ? 1 : 0;
  }
  const auto me = mean_and_error(w);
  e.mean = me.mean;
  e.std_error = me.std_error;
  return e;
}

/// Feynman-Kac estimate for every start state; state i uses streams i*n_paths .. .
inline std::vector<FkEstimate> feynman_kac_chain_all(const Mat& G, const Vec& fhat, double epsilon,
                                                     const std::vector<int>& target, std::size_t n_paths,
                                                     std::uint64_t seed, double t_max = 1e12, int threads = 1) {
  std::vector<FkEstimate> out;
  std::vector<char> is_t(static_cast<std::size_t>(G.rows()), 0);
  for (int t : target) is_t[static_cast<std::size_t>(t)] = 1;
  for (Eigen::Index i = 0; i < G.rows(); ++i) {
    if (is_t[static_cast<std::size_t>(i)]) out.push_back(FkEstimate{1.0, 0.0, n_paths, 0});
    else out.push_back(feynman_kac_chain(G, fhat, epsilon, target, static_cast<int>(i), n_paths, seed, t_max, threads,
                                         static_cast<std::uint64_t>(i) * n_paths));
  }
  return out;
}

/// Diffusion Feynman-Kac estimate of phi(x0) with a left-endpoint cost integral.
inline FkEstimate feynman_kac_sde(const ControlProblem& p, const Point& x0, double dt, std::size_t n_paths,
                                  std::size_t max_steps, std::uint64_t seed, int threads = 1) {
  if (n_paths == 0) throw ValidationError("feynman_kac_sde: n_paths must be positive");
  if (!p.domain.contains(x0)) throw ValidationError("feynman_kac_sde: x0 outside the domain");
  struct Out {
    double w = 0.0;
    bool censored = false;
  };
  auto res = parallel_map(n_paths, threads, [&](std::size_t k) {
    detail::EulerStepper st(p, dt, nullptr);
    StreamRng rng(seed, k);
    Point x = x0;
    double I = 0.0;
    std::size_t n = 0;
    while (!p.target.contains(x, p.dim())) {
      if (n++ >= max_steps) return Out{std::exp(-I / p.epsilon), true};
      I += p.f(x) * dt;
      st.step(x, rng);
    }
    return Out{std::exp(-I / p.epsilon), false};
  });
  std::vector<double> w(n_paths);
  FkEstimate e;
  e.n_paths = n_paths;
  for (std::size_t k = 0; k < n_paths; ++k) {
    w[k] = res[k].w;
    e.n_censored += res[k].censored ? 1 : 0;
  }
  const auto me = mean_and_error(w);
  e.mean = me.mean;
  e.std_error = me.std_error;
  return e;
}

struct KlEstimate {
  double lhs = 0.0, lhs_se = 0.0;  // mean of int k^v ds along G^v paths
  double rhs = 0.0, rhs_se = 0.0;  // eps times the mean pathwise log-likelihood ratio log dQ/dP
  double combined_se = 0.0;        // sqrt(lhs_se^2 + rhs_se^2)
  std::size_t n_paths = 0;
  std::vector<double> lhs_samples;
};

/// Both sides of the relative-entropy identity for the controlled chain G^v, estimated on the same paths.
inline KlEstimate kl_cost_mc(const Mat& G, const Vec& v, double epsilon, int i0, const std::vector<int>& target,
                             std::size_t n_paths, std::uint64_t seed, int threads = 1) {
  if (n_paths == 0) throw ValidationError("kl_cost_mc: n_paths must be positive");
  const Mat Gv = controlled_generator(G, v);
  const Vec k = running_cost(G, v, epsilon);
  (void)mfpt(Gv, std::vector<Eigen::Index>(target.begin(), target.end()));  // throws if the target is unreachable
  struct Out {
    double lhs = 0.0, llr = 0.0;
  };
  auto res = parallel_map(n_paths, threads, [&](std::size_t q) {
    const JumpPath jp = simulate_jump(Gv, i0, std::numeric_limits<double>::infinity(), target, seed, q);
    Out o;
    for (std::size_t s = 0; s + 1 < jp.states.size(); ++s) {
      const int a = jp.states[s], b = jp.states[s + 1];
      const double hold = jp.times[s + 1] - jp.times[s];
      o.lhs += k[a] * hold;
      o.llr += std::log(Gv(a, b) / G(a, b)) - (G(a, a) - Gv(a, a)) * hold;
    }
    return o;
  });
  KlEstimate e;
  e.n_paths = n_paths;
  std::vector<double> l(n_paths), r(n_paths);
  for (std::size_t q = 0; q < n_paths; ++q) {
    l[q] = res[q].lhs;
    r[q] = epsilon * res[q].llr;
  }
  const auto ml = mean_and_error(l), mr = mean_and_error(r);
  e.lhs = ml.mean;
  e.lhs_se = ml.std_error;
  e.rhs = mr.mean;
  e.rhs_se = mr.std_error;
  e.combined_se = std::sqrt(ml.std_error * ml.std_error + mr.std_error * mr.std_error);
  e.lhs_samples = std::move(l);
  return e;
}

}  // namespace gctl
