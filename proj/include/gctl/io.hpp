#pragma once

#include "gctl/bounds.hpp"
#include "gctl/mca.hpp"
#include "gctl/sampler.hpp"

#include <json.hpp>

#include <cstring>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace gctl::io {

using nlohmann::json;

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

/// Stamp carried by every output file.
struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;
};

inline json to_json(const Mat& A) {
  json data = json::array();
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) data.push_back(A(i, j));
  return {{"rows", A.rows()}, {"cols", A.cols()}, {"data", data}};
}

inline json to_json(const Vec& v) { return to_std(v); }

inline Mat mat_from_json(const json& j) {
  const auto r = j.at("rows").get<Eigen::Index>(), c = j.at("cols").get<Eigen::Index>();
  const auto& d = j.at("data");
  if (static_cast<Eigen::Index>(d.size()) != r * c) throw ValidationError("matrix json: data length does not match shape");
  Mat A(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index k = 0; k < c; ++k) A(i, k) = d[static_cast<std::size_t>(i * c + k)].get<double>();
  return A;
}

inline json to_json(const GeneratorModel& m) {
  return {{"basis", to_string(m.kind)}, {"n", m.n_states()}, {"epsilon", m.epsilon}, {"K", to_json(m.K)},
          {"F", to_json(m.F)},          {"Lambda", to_json(m.Lambda)}, {"G", to_json(m.G)}, {"M_hat", to_json(m.M_hat)},
          {"pi", to_json(m.pi)}};
}

inline GeneratorModel model_from_json(const json& j) {
  const std::string kind = j.at("basis").get<std::string>();
  if (kind != "indicator" && kind != "committor") throw ValidationError("model json: unknown basis kind " + kind);
  return make_model(mat_from_json(j.at("K")), mat_from_json(j.at("F")), to_vec(j.at("pi").get<std::vector<double>>()),
                    mat_from_json(j.at("M_hat")), j.at("epsilon").get<double>(),
                    kind == "indicator" ? BasisKind::indicator : BasisKind::committor);
}

inline json to_json(const MdpResult& r) {
  json j = {{"status", to_string(r.status)},
            {"generator", {{"is_generator", r.generator.is_generator}, {"max_violation", r.generator.max_violation}}},
            {"phi_hat", to_json(r.phi_hat)},
            {"W_hat", to_json(r.W_hat)}};
  if (r.mdp) {
    j["mdp"] = {{"v_star", to_json(r.mdp->v_star)}, {"G_v", to_json(r.mdp->G_v)}, {"k_v", to_json(r.mdp->k_v)},
                {"pi_v", to_json(r.mdp->pi_v)}};
  }
  return j;
}

inline json to_json(const ErrorReport& r) {
  return {{"h_ref", r.h_ref},
          {"eps_galerkin", r.eps_galerkin},
          {"eps_best", r.eps_best},
          {"eps_best_span", r.eps_best_span},
          {"p", r.p},
          {"qbq_norm", r.qbq_norm},
          {"qbq_norm_power", r.qbq_norm_power},
          {"delta_L", r.delta_L},
          {"delta_f", r.delta_f},
          {"n", r.n},
          {"m", r.m},
          {"alpha2", r.alpha2},
          {"p_bound", r.p_bound},
          {"p_bound_coarse", r.p_bound_coarse},
          {"p_within_bound", r.p_within_bound},
          {"norm_within_estimate", r.norm_within_estimate}};
}

inline json to_json(const BestApproxBound& b) {
  return {{"eps_best", b.eps_best}, {"pperp_l2", b.pperp_l2}, {"pperp_sup", b.pperp_sup},
          {"kappa", b.kappa},       {"mu_T", b.mu_T},         {"f_sup", b.f_sup},
          {"rhs", b.rhs},           {"rhs_unscaled", b.rhs_unscaled}, {"holds", b.holds},
          {"holds_unscaled", b.holds_unscaled}};
}

inline json to_json(const ValueFunctionError& e) {
  return {{"W_error", e.W_error}, {"phi_error", e.phi_error}, {"lipschitz", e.lipschitz}, {"bound", e.bound}, {"holds", e.holds}};
}

inline json to_json(const CoreMsmEstimate& e) {
  json K = json::array(), Kse = json::array(), P = json::array();
  for (std::size_t l = 0; l < e.tau.size(); ++l) {
    K.push_back(to_json(e.K_est[l]));
    Kse.push_back(to_json(e.K_se[l]));
    P.push_back(to_json(e.P[l]));
  }
  return {{"tau", e.tau}, {"P", P},  {"M", to_json(e.M)},     {"pi", to_json(e.pi)},       {"K_est", K},
          {"K_se", Kse},  {"K0", to_json(e.K0)}, {"K0_se", to_json(e.K0_se)}, {"frames_used", e.frames_used},
          {"warnings", e.warnings}};
}

inline json to_json(const MatrixEstimate& e) { return {{"value", to_json(e.value)}, {"se", to_json(e.se)}}; }

inline json to_json(const FkEstimate& e) {
  return {{"mean", e.mean}, {"std_error", e.std_error}, {"n_paths", e.n_paths}, {"n_censored", e.n_censored}};
}

inline json to_json(const KlEstimate& e) {
  return {{"lhs", e.lhs}, {"lhs_se", e.lhs_se}, {"rhs", e.rhs}, {"rhs_se", e.rhs_se}, {"combined_se", e.combined_se},
          {"n_paths", e.n_paths}};
}

inline json to_json(const McaConvergence& c) {
  json rows = json::array();
  for (const auto& r : c.rows)
    rows.push_back({{"h", r.h}, {"cost_error", r.cost_error}, {"equivalence_error", r.equivalence_error},
                    {"value_gap", r.value_gap}, {"strategy_gap", r.strategy_gap}, {"bellman_iterations", r.bellman_iterations}});
  return {{"rows", rows}, {"cost_order", c.cost_order}, {"equivalence_order", c.equivalence_order},
          {"value_order", c.value_order}, {"strategy_order", c.strategy_order}};
}

inline void write_json(const std::filesystem::path& path, json j, const Provenance& prov) {
  j["config_hash"] = prov.config_hash;
  j["seed"] = prov.seed;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string());
  out << j.dump(2) << '\n';
}

/// Comma-separated table; first line is a comment with the provenance stamp.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header, const Provenance& prov)
      : out_(path, std::ios::binary), width_(header.size()) {
    if (!out_) throw Error("cannot open " + path.string());
    out_ << "# config_hash=" << prov.config_hash << " seed=" << prov.seed << '\n';
    for (std::size_t k = 0; k < header.size(); ++k) out_ << (k ? "," : "") << header[k];
    out_ << '\n';
  }

  void row(const std::vector<double>& v) {
    if (v.size() != width_) throw Error("csv: row width does not match header");
    for (std::size_t k = 0; k < v.size(); ++k) out_ << (k ? "," : "") << format_number(v[k]);
    out_ << '\n';
  }

 private:
  std::ofstream out_;
  std::size_t width_;
};

inline void write_reference_csv(const std::filesystem::path& path, const ReferenceSolution& ref, const Provenance& prov) {
  const auto& g = ref.grid;
  std::vector<std::string> header{"x"};
  if (g.dim() == 2) header.push_back("y");
  for (const char* c : {"V", "phi", "W"}) header.emplace_back(c);
  if (g.dim() == 2) {
    header.emplace_back("u_star_x");
    header.emplace_back("u_star_y");
  } else {
    header.emplace_back("u_star");
  }
  CsvWriter csv(path, header, prov);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    const Point x = g.point(k);
    std::vector<double> row{x[0]};
    if (g.dim() == 2) row.push_back(x[1]);
    row.push_back(g.potential_values()[k]);
    row.push_back(ref.phi[i]);
    row.push_back(ref.W[i]);
    for (const auto& u : ref.u_star) row.push_back(u[i]);
    csv.row(row);
  }
}

inline void write_mdp_csv(const std::filesystem::path& path, const GeneratorModel& m, const MdpResult& r, const Provenance& prov) {
  if (!r.mdp) throw Error("mdp csv: no MDP solution (generator condition violated or phi_hat not positive)");
  CsvWriter csv(path, {"state", "pi", "W_hat", "v_star", "k_v"}, prov);
  for (Eigen::Index i = 0; i < m.n_states(); ++i)
    csv.row({static_cast<double>(i), m.pi[i], r.mdp->W_hat[i], r.mdp->v_star[i], r.mdp->k_v[i]});
}

namespace detail {
template <class T>
void put_le(std::ostream& out, T v) {
  static_assert(sizeof(T) == 8);
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(bits >> (8 * k));
  out.write(reinterpret_cast<const char*>(b), 8);
}
template <class T>
T get_le(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw Error("trajectory: truncated file");
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
  T v;
  std::memcpy(&v, &bits, 8);
  return v;
}
}  // namespace detail

/// Binary layout: u64 dim, f64 frame dt, u64 n, then n frames of dim f64 values, all little-endian.
inline void write_trajectory(const std::filesystem::path& path, const SdePath& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string());
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(p.dim));
  detail::put_le<double>(out, p.frame_dt());
  detail::put_le<std::uint64_t>(out, p.states.size());
  for (const auto& x : p.states)
    for (int a = 0; a < p.dim; ++a) detail::put_le<double>(out, x[static_cast<std::size_t>(a)]);
}

inline SdePath read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  SdePath p;
  p.dim = static_cast<int>(detail::get_le<std::uint64_t>(in));
  if (p.dim != 1 && p.dim != 2) throw Error("trajectory: bad dimension");
  p.dt = detail::get_le<double>(in);
  const auto n = detail::get_le<std::uint64_t>(in);
  p.states.resize(n, Point{0.0, 0.0});
  for (auto& x : p.states)
    for (int a = 0; a < p.dim; ++a) x[static_cast<std::size_t>(a)] = detail::get_le<double>(in);
  return p;
}

}  // namespace gctl::io
