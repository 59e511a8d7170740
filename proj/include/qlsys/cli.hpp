#pragma once

// Plain-text run configuration, CSV and field-dump output, and the
// subcommand dispatcher used by tools/qlsys.cpp.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qlsys/coeffs.hpp"
#include "qlsys/solvers.hpp"

namespace qlsys {

struct FamilySpec {
  CoefficientKind kind = CoefficientKind::identity;
  double gamma = 1.0;
  double nu = 1.0;
  double c0 = 1.0;
  std::vector<double> coeffs{1.0};

  CoefficientFamily build() const {
    switch (kind) {
      case CoefficientKind::identity: return CoefficientFamily::identity();
      case CoefficientKind::example: return CoefficientFamily::example(gamma);
      case CoefficientKind::polynomial: return CoefficientFamily::polynomial(coeffs, nu, c0, gamma);
      case CoefficientKind::custom: break;
    }
    throw InvalidParams("custom profiles cannot be configured from a file");
  }
  friend bool operator==(const FamilySpec&, const FamilySpec&) = default;
};

struct CertifyConfig {
  double s_min = -10.0;
  double s_max = 10.0;
  std::size_t samples = 10000;
  int family = 1;
  friend bool operator==(const CertifyConfig&, const CertifyConfig&) = default;
};

struct EigenConfig {
  double tol = 1e-10;
  int max_iter = 500;
  friend bool operator==(const EigenConfig&, const EigenConfig&) = default;
};

struct RunConfig {
  GridSpec grid{63, 63, 1.0, 1.0};
  ProblemParams params{0.0, 0.0, 0.0, 4.0, 1.0};
  FamilySpec family1;
  FamilySpec family2;
  SolverOptions solver;
  CertifyConfig certify;
  EigenConfig eigen;
  std::vector<double> betas{-2.0};
  int component = 1;  ///< 1 or 2, for solve-scalar
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

inline double parse_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || p != end) throw ValidationError(key, "not a number: '" + v + "'");
  return x;
}

template <class Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int x = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || p != end) throw ValidationError(key, "not an integer: '" + v + "'");
  return x;
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  if (out.empty()) throw ValidationError(key, "empty list");
  return out;
}

inline std::string format_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + format17(v[k]);
  return s;
}

inline CoefficientKind parse_kind(const std::string& key, const std::string& v) {
  if (v == "identity") return CoefficientKind::identity;
  if (v == "example") return CoefficientKind::example;
  if (v == "polynomial") return CoefficientKind::polynomial;
  throw ValidationError(key, "kind must be identity, example or polynomial");
}

struct KeyEntry {
  std::string key;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Ref>
KeyEntry real_entry(std::string key, std::string help, Ref ref) {
  return {key, std::move(help),
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_double(key, v); },
          [ref](const RunConfig& c) { return format17(ref(c)); }};
}

template <class Int, class Ref>
KeyEntry int_entry(std::string key, std::string help, Ref ref) {
  return {key, std::move(help),
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_int<Int>(key, v); },
          [ref](const RunConfig& c) { return std::to_string(ref(c)); }};
}

inline void add_family_keys(std::vector<KeyEntry>& t, const std::string& name,
                            FamilySpec RunConfig::*member) {
  auto fam = [member](auto& c) -> auto& { return c.*member; };
  t.push_back({name + ".kind", "identity | example | polynomial (default identity)",
               [fam, name](RunConfig& c, const std::string& v) {
                 fam(c).kind = parse_kind(name + ".kind", v);
               },
               [fam](const RunConfig& c) {
                 return std::string(to_string(fam(c).kind));
               }});
  t.push_back(real_entry(name + ".gamma", "growth constant; the example exponent (default 1)",
                         [fam](auto& c) -> auto& { return fam(c).gamma; }));
  t.push_back(real_entry(name + ".nu", "ellipticity constant, polynomial only (default 1)",
                         [fam](auto& c) -> auto& { return fam(c).nu; }));
  t.push_back(real_entry(name + ".c0", "bound constant, polynomial only (default 1)",
                         [fam](auto& c) -> auto& { return fam(c).c0; }));
  t.push_back({name + ".coeffs", "polynomial coefficients c0, c1, ... of |s|^k (default 1)",
               [fam, name](RunConfig& c, const std::string& v) {
                 fam(c).coeffs = parse_list(name + ".coeffs", v);
               },
               [fam](const RunConfig& c) {
                 return format_list(fam(c).coeffs);
               }});
}

inline const std::vector<KeyEntry>& key_table() {
  static const std::vector<KeyEntry> table = [] {
    std::vector<KeyEntry> t;
    using C = RunConfig;
    t.push_back(int_entry<int>("grid.nx", "interior nodes in x (default 63)",
                               [](auto& c) -> auto& { return c.grid.nx; }));
    t.push_back(int_entry<int>("grid.ny", "interior nodes in y (default 63)",
                               [](auto& c) -> auto& { return c.grid.ny; }));
    t.push_back(real_entry("grid.lx", "rectangle width (default 1)",
                           [](auto& c) -> auto& { return c.grid.lx; }));
    t.push_back(real_entry("grid.ly", "rectangle height (default 1)",
                           [](auto& c) -> auto& { return c.grid.ly; }));
    t.push_back(real_entry("params.lambda1", "linear coefficient of u1 (default 0)",
                           [](auto& c) -> auto& { return c.params.lambda1; }));
    t.push_back(real_entry("params.lambda2", "linear coefficient of u2 (default 0)",
                           [](auto& c) -> auto& { return c.params.lambda2; }));
    t.push_back(real_entry("params.beta", "coupling (default 0)",
                           [](auto& c) -> auto& { return c.params.beta; }));
    t.push_back(real_entry("params.p", "power, p > 2 (default 4)",
                           [](auto& c) -> auto& { return c.params.p; }));
    t.push_back(real_entry("params.gamma", "growth window, 0 < gamma < p - 2 (default 1)",
                           [](auto& c) -> auto& { return c.params.gamma; }));
    add_family_keys(t, "family1", &RunConfig::family1);
    add_family_keys(t, "family2", &RunConfig::family2);
    t.push_back(real_entry("solver.tol", "Euler residual tolerance (default 1e-8)",
                           [](auto& c) -> auto& { return c.solver.tol; }));
    t.push_back(real_entry("solver.nehari_tol", "relative Nehari tolerance (default 1e-10)",
                           [](auto& c) -> auto& { return c.solver.nehari_tol; }));
    t.push_back(int_entry<int>("solver.restarts", "multi-start count (default 4)",
                               [](auto& c) -> auto& { return c.solver.restarts; }));
    t.push_back(int_entry<std::uint64_t>("solver.seed", "random seed (default 0)",
                                         [](auto& c) -> auto& { return c.solver.seed; }));
    t.push_back(int_entry<int>("solver.max_iter", "descent iterations per start (default 3000)",
                               [](auto& c) -> auto& { return c.solver.max_iter; }));
    t.push_back(real_entry("solver.scan_min", "fiber scan box lower end (default 1e-3)",
                           [](auto& c) -> auto& { return c.solver.scan_min; }));
    t.push_back(real_entry("solver.scan_max", "fiber scan box upper end (default 1e3)",
                           [](auto& c) -> auto& { return c.solver.scan_max; }));
    t.push_back(int_entry<int>("solver.scan_points", "fiber scan points per axis (default 64)",
                               [](auto& c) -> auto& { return c.solver.scan_points; }));
    t.push_back(real_entry("certify.s_min", "sample range start (default -10)",
                           [](auto& c) -> auto& { return c.certify.s_min; }));
    t.push_back(real_entry("certify.s_max", "sample range end (default 10)",
                           [](auto& c) -> auto& { return c.certify.s_max; }));
    t.push_back(int_entry<std::size_t>("certify.samples", "sample count (default 10000)",
                                       [](auto& c) -> auto& { return c.certify.samples; }));
    t.push_back(int_entry<int>("certify.family", "which family to certify, 1 or 2 (default 1)",
                               [](auto& c) -> auto& { return c.certify.family; }));
    t.push_back(real_entry("eigen.tol", "inverse iteration tolerance (default 1e-10)",
                           [](auto& c) -> auto& { return c.eigen.tol; }));
    t.push_back(int_entry<int>("eigen.max_iter", "inverse iteration cap (default 500)",
                               [](auto& c) -> auto& { return c.eigen.max_iter; }));
    t.push_back({"sweep.betas", "comma-separated coupling values (default -2)",
                 [](C& c, const std::string& v) { c.betas = parse_list("sweep.betas", v); },
                 [](const C& c) { return format_list(c.betas); }});
    t.push_back(int_entry<int>("solve.component", "component for solve-scalar, 1 or 2 (default 1)",
                               [](auto& c) -> auto& { return c.component; }));
    return t;
  }();
  return table;
}

}  // namespace detail

/// Checks everything a run relies on; throws ValidationError naming the key.
inline void validate(const RunConfig& c) {
  try {
    validate(c.grid);
  } catch (const Error& e) {
    throw ValidationError("grid", e.what());
  }
  const ProblemParams& pp = c.params;
  if (!(pp.p > 2.0) || !std::isfinite(pp.p)) throw ValidationError("params.p", "p > 2 required");
  if (!(pp.gamma > 0.0 && pp.gamma < pp.p - 2.0))
    throw ValidationError("params.gamma", "0 < gamma < p - 2 required");
  for (auto [k, v] : {std::pair{"params.lambda1", pp.lambda1}, std::pair{"params.lambda2", pp.lambda2},
                      std::pair{"params.beta", pp.beta}})
    if (!std::isfinite(v)) throw ValidationError(k, "must be finite");
  for (auto [name, f] : {std::pair{"family1", &c.family1}, std::pair{"family2", &c.family2}}) {
    try {
      (void)f->build();
    } catch (const Error& e) {
      throw ValidationError(name, e.what());
    }
  }
  if (!(c.solver.tol > 0.0)) throw ValidationError("solver.tol", "must be positive");
  if (!(c.solver.nehari_tol > 0.0)) throw ValidationError("solver.nehari_tol", "must be positive");
  if (c.solver.restarts < 1) throw ValidationError("solver.restarts", "must be at least 1");
  if (c.solver.max_iter < 0) throw ValidationError("solver.max_iter", "must be nonnegative");
  if (!(c.solver.scan_min > 0.0 && c.solver.scan_min < c.solver.scan_max))
    throw ValidationError("solver.scan_min", "need 0 < scan_min < scan_max");
  if (c.solver.scan_points < 3) throw ValidationError("solver.scan_points", "need at least 3");
  if (!(c.certify.s_min < c.certify.s_max))
    throw ValidationError("certify.s_min", "need s_min < s_max");
  if (c.certify.samples < 100) throw ValidationError("certify.samples", "need at least 100");
  if (c.certify.family != 1 && c.certify.family != 2)
    throw ValidationError("certify.family", "must be 1 or 2");
  if (!(c.eigen.tol > 0.0)) throw ValidationError("eigen.tol", "must be positive");
  if (c.eigen.max_iter < 1) throw ValidationError("eigen.max_iter", "must be at least 1");
  for (double b : c.betas)
    if (!std::isfinite(b)) throw ValidationError("sweep.betas", "must be finite");
  if (c.component != 1 && c.component != 2)
    throw ValidationError("solve.component", "must be 1 or 2");
}

/// `key = value` lines; `#` starts a comment. Unknown or repeated keys are errors.
inline RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, const detail::KeyEntry*> index;
  for (const auto& e : detail::key_table()) index[e.key] = &e;
  std::map<std::string, int> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected 'key = value'");
    const std::string key = detail::trim(std::string_view(body).substr(0, eq));
    const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ParseError(lineno, "missing key");
    if (value.empty()) throw ParseError(lineno, "missing value for " + key);
    auto it = index.find(key);
    if (it == index.end()) throw ParseError(lineno, "unknown key " + key);
    if (seen.count(key))
      throw ParseError(lineno, key + " already set on line " + std::to_string(seen[key]));
    seen[key] = lineno;
    it->second->set(cfg, value);
  }
  validate(cfg);
  return cfg;
}

inline std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& e : detail::key_table()) out += e.key + " = " + e.get(cfg) + "\n";
  return out;
}

/// One line per key with its meaning and default.
inline std::string config_help() {
  std::string out = "Config keys (key = value, '#' comments):\n";
  for (const auto& e : detail::key_table()) {
    out += "  " + e.key;
    out.append(e.key.size() < 22 ? 22 - e.key.size() : 1, ' ');
    out += e.help + "\n";
  }
  return out;
}

/// FNV-1a over the canonical serialization.
inline std::uint64_t config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize_config(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string provenance(const RunConfig& cfg, const std::string& command) {
  std::ostringstream os;
  os << "# qlsys " << command << " config_hash=" << std::hex << std::setw(16)
     << std::setfill('0') << config_hash(cfg) << std::dec << " seed=" << cfg.solver.seed
     << " grid=" << cfg.grid.nx << "x" << cfg.grid.ny << " lx=" << format17(cfg.grid.lx)
     << " ly=" << format17(cfg.grid.ly) << " tol=" << format17(cfg.solver.tol)
     << " nehari_tol=" << format17(cfg.solver.nehari_tol) << "\n";
  return os.str();
}

inline constexpr const char* kSweepHeader =
    "beta,energy,L1,L2,e_beta,euler_res,nehari_r1,nehari_r2,fully_nontrivial,nonnegative,"
    "iterations,status";

inline std::string sweep_csv_row(double beta, const SolveReport& r, const std::string& status) {
  const bool ok = status == "ok";
  auto num = [ok](double v) { return ok ? format17(v) : std::string("nan"); };
  std::ostringstream os;
  os << format17(beta) << ',' << num(r.energy) << ',' << format17(r.L1) << ','
     << format17(r.L2) << ',' << num(r.e_beta_estimate) << ',' << num(r.euler_residual_norm)
     << ',' << num(r.nehari_residual.r1) << ',' << num(r.nehari_residual.r2) << ','
     << (ok && r.fully_nontrivial ? 1 : 0) << ',' << (ok && r.nonnegative ? 1 : 0) << ','
     << r.iterations << ',' << status;
  return os.str();
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows,
                            const std::string& header_comment) {
  os << header_comment << kSweepHeader << "\n";
  for (const auto& r : rows) os << sweep_csv_row(r.beta, r.report, r.status) << "\n";
}

inline void write_certify_csv(std::ostream& os, const CertReport& rep,
                              const std::string& header_comment) {
  os << header_comment << "condition,verdict,witness_s\n";
  for (const auto& c : rep.conditions)
    os << c.condition << ',' << to_string(c.verdict) << ',' << format17(c.witness_s) << "\n";
}

inline void write_eigen_csv(std::ostream& os, const EigenPair& e,
                            const std::string& header_comment) {
  os << header_comment << "mu1,residual,iterations\n"
     << format17(e.mu) << ',' << format17(e.residual) << ',' << e.iterations << "\n";
}

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_no_convergence = 2, exit_inadmissible = 3 };

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f << content;
  if (!f) throw Error("write failed for " + path.string());
}

inline std::string field_text(const ScalarField& f, const Grid& g) {
  std::ostringstream os;
  write_field(os, f, g);
  return os.str();
}

/// Admissibility gate shared by the solving subcommands.
inline void gate(const RunConfig& cfg, const Grid& g, std::ostream& err) {
  const double mu1 = conservative_mu1(g, principal_eigenpair(g));
  std::vector<std::string> warnings;
  check_admissible(cfg.params.lambda1, cfg.params.p, cfg.family1.build(), mu1, 0, warnings);
  check_admissible(cfg.params.lambda2, cfg.params.p, cfg.family2.build(), mu1, 1, warnings);
  for (const auto& w : warnings) err << "warning: " << w << "\n";
}

}  // namespace detail

/// Runs one subcommand; CSVs go to out_dir and are echoed on `out`.
inline int run(const std::string& command, const RunConfig& cfg,
               const std::filesystem::path& out_dir, std::ostream& out, std::ostream& err) {
  try {
    validate(cfg);
    std::filesystem::create_directories(out_dir);
    const Grid g(cfg.grid);
    const auto f1 = cfg.family1.build();
    const auto f2 = cfg.family2.build();
    const std::string prov = provenance(cfg, command);
    auto emit = [&](const std::string& name, const std::string& csv) {
      detail::write_file(out_dir / name, csv);
      out << csv;
    };

    if (command == "certify") {
      const auto& fam = cfg.certify.family == 1 ? f1 : f2;
      const auto rep =
          certify(fam, cfg.params.p, cfg.certify.s_min, cfg.certify.s_max, cfg.certify.samples);
      std::ostringstream os;
      write_certify_csv(os, rep, prov);
      emit("certify.csv", os.str());
      return exit_ok;
    }
    if (command == "eigen") {
      const auto e = principal_eigenpair(g, cfg.eigen.tol, cfg.eigen.max_iter);
      std::ostringstream os;
      write_eigen_csv(os, e, prov);
      emit("eigen.csv", os.str());
      detail::write_file(out_dir / "phi1.field", detail::field_text(e.phi, g));
      return exit_ok;
    }
    if (command == "solve-scalar") {
      const int i = cfg.component - 1;
      const auto s = scalar_ground_state(i, cfg.params, i == 0 ? f1 : f2, g, cfg.solver);
      for (const auto& w : s.warnings) err << "warning: " << w << "\n";
      std::ostringstream os;
      os << prov << "component,L,euler_res,nehari,iterations,nonnegative\n"
         << cfg.component << ',' << format17(s.L) << ',' << format17(s.residual) << ','
         << format17(s.nehari) << ',' << s.iterations << ',' << (s.nonnegative ? 1 : 0) << "\n";
      emit("scalar.csv", os.str());
      detail::write_file(out_dir / ("z" + std::to_string(cfg.component) + ".field"),
                         detail::field_text(s.z, g));
      return exit_ok;
    }
    if (command == "solve-system") {
      detail::gate(cfg, g, err);
      const auto sol = solve_system(cfg.params, f1, f2, g, cfg.solver);
      for (const auto& w : sol.report.warnings) err << "warning: " << w << "\n";
      std::ostringstream os;
      os << prov << kSweepHeader << "\n" << sweep_csv_row(cfg.params.beta, sol.report, "ok") << "\n";
      emit("system.csv", os.str());
      detail::write_file(out_dir / "u1.field", detail::field_text(sol.u.u1, g));
      detail::write_file(out_dir / "u2.field", detail::field_text(sol.u.u2, g));
      return exit_ok;
    }
    if (command == "sweep") {
      detail::gate(cfg, g, err);
      const auto rows = beta_sweep(cfg.betas, cfg.params, f1, f2, g, cfg.solver);
      std::ostringstream os, diag;
      write_sweep_csv(os, rows, prov);
      emit("sweep.csv", os.str());
      // diagonal-candidate moments kept out of the fixed sweep schema
      diag << prov << "beta,diag_lp\n";
      for (const auto& r : rows) {
        if (r.status != "ok") err << "beta " << format17(r.beta) << ": " << r.message << "\n";
        diag << format17(r.beta) << ',' << format17(r.report.diag_lp) << "\n";
      }
      detail::write_file(out_dir / "diagonal.csv", diag.str());
      return exit_ok;
    }
    err << "unknown command '" << command << "'\n";
    return exit_usage;
  } catch (const InadmissibleLambda& e) {
    err << "inadmissible parameters: " << e.what() << " (threshold " << format17(e.threshold())
        << ")\n";
    return exit_inadmissible;
  } catch (const NoConvergence& e) {
    err << "no convergence: " << e.what() << "\n";
    return exit_no_convergence;
  } catch (const NoFullyNontrivialCandidate& e) {
    err << "no convergence: " << e.what() << "\n";
    return exit_no_convergence;
  } catch (const InvariantViolation& e) {
    err << "invariant violation: " << e.what() << "\n";
    return exit_no_convergence;
  } catch (const ValidationError& e) {
    err << "invalid config: " << e.what() << "\n";
    return exit_usage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_usage;
  }
}

}  // namespace qlsys
