#pragma once

#include "gctl/cli/config.hpp"

#include <chrono>
#include <iostream>

namespace gctl::cli {

enum ExitCode : int { kOk = 0, kValidation = 2, kNumerical = 3, kGalerkinOnly = 4 };

struct RunOptions {
  std::string out_dir;  // empty: use output.directory from the config
  int threads = 1;
  std::ostream* log = &std::cout;
};

namespace detail {

class Session {
 public:
  Session(const ExperimentConfig& c, const RunOptions& o, const char* name)
      : cfg(c), opt(o), name_(name), start_(std::chrono::steady_clock::now()) {
    dir = opt.out_dir.empty() ? std::filesystem::path(c.output.directory) : std::filesystem::path(opt.out_dir);
  }

  std::filesystem::path file(const std::string& leaf) {
    std::filesystem::create_directories(dir);
    ++files_;
    return dir / leaf;
  }
  void json(const std::string& leaf, const io::json& j) {
    if (cfg.output.has("json")) io::write_json(file(leaf), j, cfg.provenance());
  }
  bool csv() const { return cfg.output.has("csv"); }

  // Wall time goes to the log only, so files stay byte-identical across reruns.
  void done() const {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", s);
    *opt.log << name_ << ": " << files_ << " file(s) in " << dir.string() << ", " << buf << " s\n";
  }

  const ExperimentConfig& cfg;
  const RunOptions& opt;
  std::filesystem::path dir;

 private:
  const char* name_;
  std::chrono::steady_clock::time_point start_;
  int files_ = 0;
};

inline Basis make_basis(const ExperimentConfig& c, double h) {
  const auto& p = c.problem();
  if (c.method.basis == BasisKind::committor) return make_committor_basis(p, c.method.cores, h);
  return make_indicator_basis(p, c.method.H, h);
}

inline io::json problem_json(const ExperimentConfig& c) {
  const auto& p = c.problem();
  return {{"potential", to_string(p.potential.form())}, {"dim", p.dim()}, {"epsilon", p.epsilon}};
}

}  // namespace detail

inline int cmd_reference(const ExperimentConfig& c, const RunOptions& o) {
  detail::Session s(c, o, "reference");
  const auto ref = solve_linear_bvp(c.problem(), c.method.h_ref);
  if (s.csv()) io::write_reference_csv(s.file("reference.csv"), ref, c.provenance());
  s.json("reference.json", {{"problem", detail::problem_json(c)},
                            {"h_ref", c.method.h_ref},
                            {"nodes", ref.grid.size()},
                            {"phi_min", ref.phi.minCoeff()},
                            {"clamped", ref.clamped}});
  s.done();
  return kOk;
}

inline int cmd_solve(const ExperimentConfig& c, const RunOptions& o) {
  detail::Session s(c, o, "solve");
  const auto& p = c.problem();
  const Basis b = detail::make_basis(c, c.method.h);
  const GeneratorModel m = assemble(p, b);
  const MdpResult r = solve_mdp(m);
  s.json("model.json", io::to_json(m));
  io::json mj = io::to_json(r);
  mj["sigma_threshold"] = p.cost.kind == CostKind::constant ? constant_cost_threshold(p, b) : std::nan("");
  s.json("mdp.json", mj);
  if (s.csv() && r.mdp) io::write_mdp_csv(s.file("mdp.csv"), m, r, c.provenance());

  if (s.csv()) {
    // Interpolated value function, effective potential V + 2 W_hat and feedback -2 grad W_hat.
    Vec phi = interpolate(b, r.phi_hat);
    for (Eigen::Index k = 0; k < phi.size(); ++k) phi[k] = std::clamp(phi[k], kPhiFloor, 1.0);
    const Vec W = log_transform(phi, p.epsilon);
    std::vector<Vec> u;
    for (int a = 0; a < b.grid.dim(); ++a) u.push_back(-2.0 * grid_derivative(b.grid, W, a));
    std::vector<std::string> head{"x"};
    if (b.grid.dim() == 2) head.emplace_back("y");
    for (const char* h : {"V", "phi_hat", "W_hat", "U_hat"}) head.emplace_back(h);
    if (b.grid.dim() == 2) {
      head.emplace_back("u_hat_x");
      head.emplace_back("u_hat_y");
    } else {
      head.emplace_back("u_hat");
    }
    io::CsvWriter csv(s.file("interpolant.csv"), head, c.provenance());
    for (std::size_t k = 0; k < b.grid.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      const Point x = b.grid.point(k);
      const double V = b.grid.potential_values()[k];
      std::vector<double> row{x[0]};
      if (b.grid.dim() == 2) row.push_back(x[1]);
      row.insert(row.end(), {V, phi[i], W[i], V + 2 * W[i]});
      for (const auto& ua : u) row.push_back(ua[i]);
      csv.row(row);
    }
  }

  if (!c.method.sigma_sweep.empty()) {
    std::vector<std::string> head{"sigma", "is_generator"};
    for (Eigen::Index i = 0; i < m.n_states(); ++i) head.push_back("W_hat_" + std::to_string(i));
    std::optional<io::CsvWriter> csv;
    if (s.csv()) csv.emplace(s.file("sigma_sweep.csv"), head, c.provenance());
    io::json rows = io::json::array();
    for (double sigma : c.method.sigma_sweep) {
      const ControlProblem ps = p.with_cost(RunningCost::constant(sigma));
      const MdpResult rs = solve_mdp(assemble(ps, b));
      std::vector<double> row{sigma, rs.generator.is_generator ? 1.0 : 0.0};
      for (Eigen::Index i = 0; i < m.n_states(); ++i) row.push_back(rs.W_hat.size() ? rs.W_hat[i] : std::nan(""));
      if (csv) csv->row(row);
      rows.push_back({{"sigma", sigma}, {"status", to_string(rs.status)}, {"W_hat", io::to_json(rs.W_hat)}});
    }
    s.json("sigma_sweep.json", {{"rows", rows}});
  }

  if (!c.method.H_sweep.empty()) {
    const auto ref = solve_linear_bvp(p, c.method.h);
    std::vector<double> Hs, errs;
    for (double H : c.method.H_sweep) {
      const Basis bi = make_indicator_basis(p, H, c.method.h);
      const Vec phi_hat = interpolate(bi, solve_discrete_system(assemble(p, bi)));
      Hs.push_back(H);
      errs.push_back(norm_mu(bi.grid, ref.phi - phi_hat));
    }
    const double order = Hs.size() >= 2 ? fit_order(Hs, errs) : std::nan("");
    if (s.csv()) {
      io::CsvWriter csv(s.file("convergence.csv"), {"H", "eps_galerkin", "fitted_order"}, c.provenance());
      for (std::size_t k = 0; k < Hs.size(); ++k) csv.row({Hs[k], errs[k], order});
    }
    s.json("convergence.json", {{"H", Hs}, {"eps_galerkin", errs}, {"fitted_order", order}});
  }
  s.done();
  return r.status == MdpStatus::ok ? kOk : kGalerkinOnly;
}

inline int cmd_sample(const ExperimentConfig& c, const RunOptions& o) {
  detail::Session s(c, o, "sample");
  const auto& p = c.problem();
  const auto& sc = c.sampling;
  const Basis b = detail::make_basis(c, c.method.h);
  const GeneratorModel m = assemble(p, b);
  const Vec phi_hat = solve_discrete_system(m);
  const GeneratorCheck gen = check_generator_condition(m);
  io::json out = {{"n_paths", sc.n_paths}};
  if (gen.is_generator) {
    const std::vector<int> target{static_cast<int>(m.target())};
    const auto fk = feynman_kac_chain_all(m.G, m.Lambda.diagonal(), p.epsilon, target, sc.n_paths, sc.seed, 1e12, o.threads);
    io::json arr = io::json::array();
    for (const auto& e : fk) arr.push_back(io::to_json(e));
    out["feynman_kac"] = arr;
    if (s.csv()) {
      io::CsvWriter csv(s.file("feynman_kac.csv"), {"state", "phi_hat", "estimate", "std_error", "n_censored"}, c.provenance());
      for (std::size_t i = 0; i < fk.size(); ++i)
        csv.row({static_cast<double>(i), phi_hat[static_cast<Eigen::Index>(i)], fk[i].mean, fk[i].std_error,
                 static_cast<double>(fk[i].n_censored)});
    }
  } else {
    out["feynman_kac"] = nullptr;
    out["note"] = "chain Feynman-Kac skipped: G violates the generator condition";
  }

  if (c.method.basis == BasisKind::committor) {
    auto cores = c.method.cores;
    cores.push_back(p.target);
    const auto n_steps = static_cast<std::size_t>(std::llround(sc.T / sc.dt));
    const MilestonedRun run = simulate_milestoned(p, cores, sc.dt, n_steps, sc.x0, sc.seed, sc.stride);
    std::vector<int> lags;
    for (double t : sc.taus) lags.push_back(std::max(1, static_cast<int>(std::lround(t / run.trace.frame_dt))));
    const auto msm = estimate_core_msm(run.trace, lags, sc.n_blocks);
    const auto F = estimate_F(run.trace, run.f_values, sc.n_blocks);
    out["core_msm"] = io::to_json(msm);
    out["F_est"] = io::to_json(F);
    out["K_quadrature"] = io::to_json(m.K);
    out["F_quadrature"] = io::to_json(m.F);
    out["sde"] = {{"dt", sc.dt}, {"T", sc.T}, {"stride", sc.stride}, {"core_changes", run.core_changes}};
    if (sc.trajectory && c.output.has("bin"))
      io::write_trajectory(s.file("trajectory.bin"), simulate_sde(p, sc.dt, n_steps, sc.x0, sc.seed, {}, sc.stride));
  }
  s.json("sample.json", out);
  s.done();
  return kOk;
}

inline int cmd_bounds(const ExperimentConfig& c, const RunOptions& o) {
  detail::Session s(c, o, "bounds");
  const auto& p = c.problem();
  // The basis lives on the reference grid so that every norm is taken on one grid.
  const Basis b = detail::make_basis(c, c.method.h_ref);
  const auto ref = solve_linear_bvp(p, b.grid, *b.op);
  const ErrorReport r = galerkin_error_report(p, b, ref);
  io::json out = {{"error_report", io::to_json(r)}, {"basis", to_string(b.kind)}};
  std::optional<BestApproxBound> best;
  if (b.kind == BasisKind::committor) {
    best = core_best_approx_bound(p, b, ref);
    out["best_approximation"] = io::to_json(*best);
  }
  const Vec phi_hat = interpolate(b, solve_discrete_system(assemble(p, b)));
  if (phi_hat.minCoeff() > 0 && ref.phi.minCoeff() > 0)
    out["value_function"] = io::to_json(value_function_error(b.grid, ref.phi, phi_hat, p.epsilon));
  s.json("bounds.json", out);
  if (s.csv()) {
    io::CsvWriter csv(s.file("bounds.csv"),
                      {"h_ref", "eps_galerkin", "eps_best", "p", "p_bound", "p_bound_coarse", "qbq_norm", "alpha2", "best_rhs"},
                      c.provenance());
    csv.row({r.h_ref, r.eps_galerkin, r.eps_best, r.p, r.p_bound, r.p_bound_coarse, r.qbq_norm, r.alpha2,
             best ? best->rhs : std::nan("")});
  }
  s.done();
  return kOk;
}

inline int cmd_mca(const ExperimentConfig& c, const RunOptions& o) {
  const auto& p = c.problem();
  if (p.dim() != 1) throw ValidationError("mca: only one-dimensional problems are supported");
  if (c.method.mca_h.size() < 2) throw ValidationError("mca: mca_h needs at least two grid sizes");
  detail::Session s(c, o, "mca");
  const double w = c.method.mca_test_width * p.epsilon;
  const auto conv = mca_convergence(p, c.method.mca_h, [w](double x) { return std::exp(-x * x / w); });
  s.json("mca.json", io::to_json(conv));
  if (s.csv()) {
    io::CsvWriter csv(s.file("mca.csv"), {"h", "cost_error", "equivalence_error", "value_gap", "strategy_gap", "iterations"},
                      c.provenance());
    for (const auto& r : conv.rows)
      csv.row({r.h, r.cost_error, r.equivalence_error, r.value_gap, r.strategy_gap, static_cast<double>(r.bellman_iterations)});
  }
  s.done();
  return kOk;
}

inline int cmd_all(const ExperimentConfig& c, const RunOptions& o) {
  int code = kOk;
  for (auto* f : {cmd_reference, cmd_solve, cmd_sample, cmd_bounds}) code = std::max(code, f(c, o));
  if (c.problem().dim() == 1) code = std::max(code, cmd_mca(c, o));
  return code;
}

}  // namespace gctl::cli
