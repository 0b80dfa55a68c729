#pragma once

#include "gctl/galerkin.hpp"
#include "gctl/io.hpp"

#include <yaml-cpp/yaml.h>

#include <set>
#include <sstream>

namespace gctl::cli {

/// Schema error; the message carries the line of the offending node.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct MethodConfig {
  BasisKind basis = BasisKind::committor;
  std::vector<Region> cores;      // non-target cores (committor basis)
  double H = 0.05;                // cell size (indicator basis)
  double h = 0.01;                // quadrature grid
  double h_ref = 0.01;            // reference grid
  std::vector<double> sigma_sweep;
  std::vector<double> H_sweep;
  std::vector<double> mca_h{0.2, 0.1, 0.05};
  double mca_test_width = 10.0;   // test strategy exp(-x^2 / (width * eps))
};

struct SamplingConfig {
  std::size_t n_paths = 10000;
  double dt = 2.5e-4;
  std::uint64_t seed = 1;
  std::vector<double> taus{0.01, 0.02, 0.04};  // lag times for the core MSM
  double T = 1000.0;                           // SDE trajectory length
  int stride = 40;
  int n_blocks = 20;
  Point x0{0.0, 0.0};
  bool trajectory = false;                     // dump the SDE path
};

struct OutputConfig {
  std::string directory = "out";
  std::set<std::string> formats{"csv", "json"};
  bool has(const std::string& f) const { return formats.count(f) != 0; }
};

struct ExperimentConfig {
  std::optional<ControlProblem> problem_value;
  MethodConfig method;
  SamplingConfig sampling;
  OutputConfig output;
  std::string hash;

  const ControlProblem& problem() const { return *problem_value; }
  io::Provenance provenance() const { return {hash, sampling.seed}; }
};

namespace detail {

inline int line_of(const YAML::Node& n) { return n.Mark().line + 1; }

[[noreturn]] inline void fail(const YAML::Node& n, const std::string& msg) {
  throw ConfigError("config line " + std::to_string(line_of(n)) + ": " + msg);
}

inline void require_map(const YAML::Node& n, const std::string& where) {
  if (!n.IsMap()) fail(n, where + " must be a mapping");
}

inline void check_keys(const YAML::Node& n, const std::string& where, std::initializer_list<const char*> allowed) {
  require_map(n, where);
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      fail(kv.first, "unknown key '" + key + "' in " + where);
  }
}

template <class T>
T scalar(const YAML::Node& n, const std::string& what) {
  if (!n.IsScalar()) fail(n, what + " must be a scalar");
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    fail(n, what + " has the wrong type");
  }
}

inline YAML::Node need(const YAML::Node& parent, const char* key, const std::string& where) {
  const YAML::Node n = parent[key];
  if (!n) fail(parent, "missing key '" + std::string(key) + "' in " + where);
  return n;
}

inline std::vector<double> numbers(const YAML::Node& n, const std::string& what) {
  if (!n.IsSequence()) fail(n, what + " must be a list");
  std::vector<double> v;
  for (const auto& e : n) v.push_back(scalar<double>(e, what + " entry"));
  return v;
}

inline double positive(const YAML::Node& n, const std::string& what) {
  const double v = scalar<double>(n, what);
  if (!(v > 0) || !std::isfinite(v)) fail(n, what + " must be positive");
  return v;
}

inline Point point(const YAML::Node& n, int dim, const std::string& what) {
  const auto v = numbers(n, what);
  if (static_cast<int>(v.size()) != dim) fail(n, what + " must have " + std::to_string(dim) + " entries");
  Point p{v[0], 0.0};
  if (dim == 2) p[1] = v[1];
  return p;
}

/// A region is a list of boxes; a box is [lo, hi] in 1-D or {lo: [..], hi: [..]}.
inline Region region(const YAML::Node& n, int dim, const std::string& what) {
  if (!n.IsSequence() || n.size() == 0) fail(n, what + " must be a non-empty list of boxes");
  Region r;
  for (const auto& b : n) {
    Box box;
    if (b.IsSequence()) {
      if (dim != 1) fail(b, what + ": use {lo, hi} boxes in two dimensions");
      const auto v = numbers(b, what);
      if (v.size() != 2) fail(b, what + ": interval needs [lo, hi]");
      box = Box{{v[0], 0.0}, {v[1], 0.0}};
    } else {
      check_keys(b, what, {"lo", "hi"});
      box = Box{point(need(b, "lo", what), dim, what + ".lo"), point(need(b, "hi", what), dim, what + ".hi")};
    }
    for (int a = 0; a < dim; ++a)
      if (!(box.lo[static_cast<std::size_t>(a)] < box.hi[static_cast<std::size_t>(a)])) fail(b, what + ": box has lo >= hi");
    r.boxes.push_back(box);
  }
  return r;
}

inline Potential potential(const YAML::Node& n) {
  require_map(n, "problem.potential");
  const auto form = scalar<std::string>(need(n, "form", "problem.potential"), "potential form");
  if (form == "triple_well") {
    check_keys(n, "problem.potential", {"form"});
    return Potential::triple_well();
  }
  if (form == "double_well") {
    check_keys(n, "problem.potential", {"form", "barrier", "a"});
    const double b = n["barrier"] ? positive(n["barrier"], "barrier") : 1.0;
    const double a = n["a"] ? positive(n["a"], "a") : 1.0;
    return Potential::double_well(b, a);
  }
  if (form == "tabulated") {
    check_keys(n, "problem.potential", {"form", "x", "V"});
    try {
      return Potential::tabulated(numbers(need(n, "x", "potential"), "x"), numbers(need(n, "V", "potential"), "V"));
    } catch (const ValidationError& e) {
      fail(n, e.what());
    }
  }
  if (form == "polynomial") {
    check_keys(n, "problem.potential", {"form", "dim", "terms"});
    const int dim = n["dim"] ? scalar<int>(n["dim"], "dim") : 1;
    const YAML::Node t = need(n, "terms", "potential");
    if (!t.IsSequence()) fail(t, "terms must be a list of [coef, px, py]");
    std::vector<PolyTerm> terms;
    for (const auto& e : t) {
      if (!e.IsSequence() || (e.size() != 2 && e.size() != 3)) fail(e, "term must be [coef, px] or [coef, px, py]");
      PolyTerm pt{scalar<double>(e[0], "coef"), scalar<int>(e[1], "px"), e.size() == 3 ? scalar<int>(e[2], "py") : 0};
      if (pt.px < 0 || pt.py < 0) fail(e, "exponents must be nonnegative");
      terms.push_back(pt);
    }
    try {
      return Potential::polynomial(dim, terms);
    } catch (const ValidationError& e) {
      fail(n, e.what());
    }
  }
  fail(n, "unknown potential form '" + form + "'");
}

inline RunningCost cost(const YAML::Node& n, int dim) {
  require_map(n, "problem.cost");
  const auto form = scalar<std::string>(need(n, "form", "problem.cost"), "cost form");
  if (form == "constant") {
    check_keys(n, "problem.cost", {"form", "sigma"});
    const double s = scalar<double>(need(n, "sigma", "problem.cost"), "sigma");
    if (!(s >= 0)) fail(n["sigma"], "sigma must be nonnegative");
    return RunningCost::constant(s);
  }
  if (form == "quadratic") {
    check_keys(n, "problem.cost", {"form", "f0", "f1", "centre"});
    const double f0 = scalar<double>(need(n, "f0", "problem.cost"), "f0");
    const double f1 = scalar<double>(need(n, "f1", "problem.cost"), "f1");
    if (!(f0 >= 0) || !(f1 >= 0)) fail(n, "f0 and f1 must be nonnegative");
    return RunningCost::quadratic(f0, f1, point(need(n, "centre", "problem.cost"), dim, "centre"));
  }
  fail(n, "unknown cost form '" + form + "'");
}

inline ControlProblem problem(const YAML::Node& n) {
  check_keys(n, "problem", {"potential", "domain", "epsilon", "target", "cost"});
  Potential V = potential(need(n, "potential", "problem"));
  const YAML::Node d = need(n, "domain", "problem");
  check_keys(d, "problem.domain", {"lo", "hi"});
  const auto lo = numbers(need(d, "lo", "domain"), "domain.lo"), hi = numbers(need(d, "hi", "domain"), "domain.hi");
  if (lo.size() != hi.size() || lo.empty() || lo.size() > 2) fail(d, "domain lo/hi must both have 1 or 2 entries");
  const int dim = static_cast<int>(lo.size());
  if (dim != V.dim()) fail(d, "domain dimension does not match the potential");
  const double eps = positive(need(n, "epsilon", "problem"), "epsilon");
  const Region target = region(need(n, "target", "problem"), dim, "problem.target");
  const RunningCost f = cost(need(n, "cost", "problem"), dim);
  try {
    Point plo{lo[0], 0.0}, phi{hi[0], 0.0};
    if (dim == 2) {
      plo[1] = lo[1];
      phi[1] = hi[1];
    }
    return ControlProblem(std::move(V), Domain::make(dim, plo, phi), eps, target, f);
  } catch (const ValidationError& e) {
    fail(n, e.what());
  }
}

inline MethodConfig method(const YAML::Node& n, int dim) {
  MethodConfig m;
  if (!n) return m;
  check_keys(n, "method", {"basis", "cores", "H", "h", "h_ref", "sigma_sweep", "H_sweep", "mca_h", "mca_test_width"});
  if (n["basis"]) {
    const auto b = scalar<std::string>(n["basis"], "basis");
    if (b == "committor") m.basis = BasisKind::committor;
    else if (b == "indicator") m.basis = BasisKind::indicator;
    else fail(n["basis"], "basis must be 'committor' or 'indicator'");
  }
  if (n["cores"]) {
    const YAML::Node c = n["cores"];
    if (!c.IsSequence() || c.size() == 0) fail(c, "cores must be a non-empty list of regions");
    for (const auto& r : c) m.cores.push_back(region(r, dim, "core"));
  }
  if (m.basis == BasisKind::committor && m.cores.empty()) fail(n, "committor basis needs method.cores");
  if (n["H"]) m.H = positive(n["H"], "H");
  if (n["h"]) m.h = positive(n["h"], "h");
  if (n["h_ref"]) m.h_ref = positive(n["h_ref"], "h_ref");
  if (n["sigma_sweep"]) m.sigma_sweep = numbers(n["sigma_sweep"], "sigma_sweep");
  for (double s : m.sigma_sweep)
    if (!(s >= 0)) fail(n["sigma_sweep"], "sigma_sweep entries must be nonnegative");
  if (n["H_sweep"]) m.H_sweep = numbers(n["H_sweep"], "H_sweep");
  if (n["mca_h"]) m.mca_h = numbers(n["mca_h"], "mca_h");
  for (const auto* v : {&m.H_sweep, &m.mca_h})
    for (double x : *v)
      if (!(x > 0)) fail(n, "grid sizes must be positive");
  if (n["mca_test_width"]) m.mca_test_width = positive(n["mca_test_width"], "mca_test_width");
  return m;
}

inline SamplingConfig sampling(const YAML::Node& n, int dim) {
  SamplingConfig s;
  if (!n) return s;
  check_keys(n, "sampling", {"n_paths", "dt", "seed", "taus", "T", "stride", "n_blocks", "x0", "trajectory"});
  if (n["n_paths"]) {
    const auto v = scalar<long long>(n["n_paths"], "n_paths");
    if (v < 1) fail(n["n_paths"], "n_paths must be >= 1");
    s.n_paths = static_cast<std::size_t>(v);
  }
  if (n["dt"]) s.dt = positive(n["dt"], "dt");
  if (n["seed"]) s.seed = scalar<std::uint64_t>(n["seed"], "seed");
  if (n["taus"]) {
    s.taus = numbers(n["taus"], "taus");
    if (s.taus.empty()) fail(n["taus"], "taus must not be empty");
    for (double t : s.taus)
      if (!(t > 0)) fail(n["taus"], "taus must be positive");
  }
  if (n["T"]) s.T = positive(n["T"], "T");
  if (n["stride"]) {
    s.stride = scalar<int>(n["stride"], "stride");
    if (s.stride < 1) fail(n["stride"], "stride must be >= 1");
  }
  if (n["n_blocks"]) {
    s.n_blocks = scalar<int>(n["n_blocks"], "n_blocks");
    if (s.n_blocks < 2) fail(n["n_blocks"], "n_blocks must be >= 2");
  }
  if (n["x0"]) s.x0 = point(n["x0"], dim, "x0");
  if (n["trajectory"]) s.trajectory = scalar<bool>(n["trajectory"], "trajectory");
  return s;
}

inline OutputConfig output(const YAML::Node& n) {
  OutputConfig o;
  if (!n) return o;
  check_keys(n, "output", {"directory", "formats"});
  if (n["directory"]) o.directory = scalar<std::string>(n["directory"], "directory");
  if (n["formats"]) {
    const YAML::Node f = n["formats"];
    if (!f.IsSequence()) fail(f, "formats must be a list");
    o.formats.clear();
    for (const auto& e : f) {
      const auto s = scalar<std::string>(e, "format");
      if (s != "csv" && s != "json" && s != "bin") fail(e, "format must be csv, json or bin");
      o.formats.insert(s);
    }
  }
  return o;
}

}  // namespace detail

/// Parses and validates a whole experiment; nothing is computed or written here.
inline ExperimentConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("config line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (!root || root.IsNull()) throw ConfigError("config line 1: empty config");
  detail::check_keys(root, "config", {"problem", "method", "sampling", "output"});
  ExperimentConfig c;
  c.problem_value = detail::problem(detail::need(root, "problem", "config"));
  const int dim = c.problem().dim();
  c.method = detail::method(root["method"], dim);
  c.sampling = detail::sampling(root["sampling"], dim);
  c.output = detail::output(root["output"]);
  if (root["sampling"] && root["sampling"]["x0"] && !c.problem().domain.contains(c.sampling.x0))
    detail::fail(root["sampling"]["x0"], "x0 lies outside the domain");
  c.hash = io::hex64(io::fnv1a64(text));
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace gctl::cli
