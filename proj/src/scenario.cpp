#include "clab/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>

namespace clab {
namespace {

using nlohmann::json;

struct Issues {
  std::vector<std::string> v;
  void add(const std::string& path, const std::string& msg) {
    v.push_back(path + ": " + msg);
  }
  bool ok() const { return v.empty(); }
};

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed, Issues& is) {
  if (!j.is_object()) return;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(),
                     [&](const char* k) { return it.key() == k; }))
      is.add(path + "." + it.key(), "unknown field");
  }
}

double get_num(const json& j, const char* key, double def,
               const std::string& path, Issues& is) {
  if (!j.contains(key)) return def;
  if (!j[key].is_number()) {
    is.add(path + "." + key, "expected a number");
    return def;
  }
  return j[key].get<double>();
}

long long get_int(const json& j, const char* key, long long def,
                  const std::string& path, Issues& is) {
  if (!j.contains(key)) return def;
  if (!j[key].is_number_integer()) {
    is.add(path + "." + key, "expected an integer");
    return def;
  }
  return j[key].get<long long>();
}

bool get_bool(const json& j, const char* key, bool def,
              const std::string& path, Issues& is) {
  if (!j.contains(key)) return def;
  if (!j[key].is_boolean()) {
    is.add(path + "." + key, "expected a boolean");
    return def;
  }
  return j[key].get<bool>();
}

std::string get_str(const json& j, const char* key, std::string def,
                    const std::string& path, Issues& is) {
  if (!j.contains(key)) return def;
  if (!j[key].is_string()) {
    is.add(path + "." + key, "expected a string");
    return def;
  }
  return j[key].get<std::string>();
}

cdouble get_complex(const json& v, const std::string& path, Issues& is) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() ||
      !v[1].is_number()) {
    is.add(path, "expected a complex number as [re, im]");
    return cdouble(0.0);
  }
  return cdouble(v[0].get<double>(), v[1].get<double>());
}

cvec get_cvec(const json& v, std::size_t n, const std::string& path,
              Issues& is) {
  cvec out(n, cdouble(0.0));
  if (!v.is_array() || v.size() != n) {
    is.add(path, "expected an array of " + std::to_string(n) +
                     " complex numbers");
    return out;
  }
  for (std::size_t i = 0; i < n; ++i)
    out[i] = get_complex(v[i], path + "[" + std::to_string(i) + "]", is);
  return out;
}

// Adds g * (tensor product of the given per-subsystem operators, identity
// elsewhere) to the dense accumulator.
void add_site_term(const TensorPartition& p,
                   const std::vector<std::pair<int, cvec>>& ops, cdouble g,
                   cvec& acc) {
  const std::size_t D = p.total_dim;
  std::vector<std::vector<int>> ridx(D);
  for (std::size_t r = 0; r < D; ++r) ridx[r] = unflatten_index(p, r);
  for (std::size_t r = 0; r < D; ++r) {
    for (std::size_t c = 0; c < D; ++c) {
      cdouble v = g;
      bool zero = false;
      for (int s = 0; s < p.n_subsystems() && !zero; ++s) {
        const cvec* m = nullptr;
        for (const auto& [os, mat] : ops)
          if (os == s) {
            m = &mat;
            break;
          }
        if (m) {
          const int d = p.dim(s);
          v *= (*m)[static_cast<std::size_t>(ridx[r][static_cast<std::size_t>(
                        s)]) * d +
                    ridx[c][static_cast<std::size_t>(s)]];
        } else if (ridx[r][static_cast<std::size_t>(s)] !=
                   ridx[c][static_cast<std::size_t>(s)]) {
          zero = true;
        }
      }
      if (!zero && v != cdouble(0.0)) acc[r * D + c] += v;
    }
  }
}

void build_term(const json& term, const TensorPartition& p, cvec& acc,
                const std::string& path, Issues& is) {
  if (!term.is_object()) {
    is.add(path, "expected an object");
    return;
  }
  const std::string kind = get_str(term, "kind", "", path, is);
  if (kind == "dense") {
    check_keys(term, path, {"kind", "matrix"}, is);
    const std::size_t D = p.total_dim;
    if (!term.contains("matrix") || !term["matrix"].is_array() ||
        term["matrix"].size() != D) {
      is.add(path + ".matrix", "expected " + std::to_string(D) + " rows");
      return;
    }
    for (std::size_t r = 0; r < D; ++r) {
      const cvec row = get_cvec(term["matrix"][r], D,
                                path + ".matrix[" + std::to_string(r) + "]",
                                is);
      for (std::size_t c = 0; c < D; ++c) acc[r * D + c] += row[c];
    }
  } else if (kind == "diagonal") {
    check_keys(term, path, {"kind", "subsystem", "values"}, is);
    const int s = static_cast<int>(get_int(term, "subsystem", 0, path, is));
    if (s < 0 || s >= p.n_subsystems()) {
      is.add(path + ".subsystem", "out of range");
      return;
    }
    const int d = p.dim(s);
    if (!term.contains("values") || !term["values"].is_array() ||
        term["values"].size() != static_cast<std::size_t>(d)) {
      is.add(path + ".values", "expected " + std::to_string(d) + " numbers");
      return;
    }
    cvec diag(static_cast<std::size_t>(d) * d, cdouble(0.0));
    for (int i = 0; i < d; ++i) {
      const auto& v = term["values"][static_cast<std::size_t>(i)];
      if (!v.is_number()) {
        is.add(path + ".values[" + std::to_string(i) + "]",
               "expected a real number");
        return;
      }
      diag[static_cast<std::size_t>(i) * d + i] = v.get<double>();
    }
    add_site_term(p, {{s, std::move(diag)}}, cdouble(1.0), acc);
  } else if (kind == "pauli_chain") {
    check_keys(term, path, {"kind", "strength"}, is);
    const double g = get_num(term, "strength", 1.0, path, is);
    for (int s = 0; s < p.n_subsystems(); ++s)
      if (p.dim(s) != 2) {
        is.add(path, "pauli_chain requires every subsystem dimension to be 2");
        return;
      }
    const cvec sz = {cdouble(1.0), cdouble(0.0), cdouble(0.0), cdouble(-1.0)};
    const cvec sx = {cdouble(0.0), cdouble(1.0), cdouble(1.0), cdouble(0.0)};
    for (int s = 0; s < p.n_subsystems(); ++s)
      add_site_term(p, {{s, sz}}, g, acc);
    for (int s = 0; s + 1 < p.n_subsystems(); ++s)
      add_site_term(p, {{s, sx}, {s + 1, sx}}, g, acc);
  } else if (kind == "position_coupling") {
    check_keys(term, path, {"kind", "subsystem_a", "subsystem_b", "strength"},
               is);
    const int a = static_cast<int>(get_int(term, "subsystem_a", 0, path, is));
    const int b = static_cast<int>(get_int(term, "subsystem_b", 1, path, is));
    const double g = get_num(term, "strength", 1.0, path, is);
    if (a < 0 || a >= p.n_subsystems() || b < 0 || b >= p.n_subsystems() ||
        a == b) {
      is.add(path, "subsystem_a and subsystem_b must be distinct and in range");
      return;
    }
    auto position = [&](int s) {
      const int d = p.dim(s);
      cvec x(static_cast<std::size_t>(d) * d, cdouble(0.0));
      for (int i = 0; i < d; ++i)
        x[static_cast<std::size_t>(i) * d + i] = static_cast<double>(i);
      return x;
    };
    add_site_term(p, {{a, position(a)}, {b, position(b)}}, g, acc);
  } else {
    is.add(path + ".kind", "unknown Hamiltonian term kind '" + kind + "'");
  }
}

PreferredBasis parse_pinned(const json& pj, const TensorPartition& p,
                            const std::string& path, Issues& is) {
  const int s = static_cast<int>(get_int(pj, "subsystem", 0, path, is));
  check_keys(pj, path, {"subsystem", "columns"}, is);
  if (s < 0 || s >= p.n_subsystems()) {
    is.add(path + ".subsystem", "out of range");
    return PreferredBasis::identity(0, 1);
  }
  const int d = p.dim(s);
  PreferredBasis b = PreferredBasis::identity(s, d);
  if (!pj.contains("columns") || !pj["columns"].is_array() ||
      pj["columns"].size() != static_cast<std::size_t>(d)) {
    is.add(path + ".columns", "expected " + std::to_string(d) + " columns");
    return b;
  }
  for (int k = 0; k < d; ++k) {
    const cvec col = get_cvec(pj["columns"][static_cast<std::size_t>(k)],
                              static_cast<std::size_t>(d),
                              path + ".columns[" + std::to_string(k) + "]",
                              is);
    for (int i = 0; i < d; ++i)
      b.U[static_cast<std::size_t>(k) * d + i] = col[static_cast<std::size_t>(i)];
  }
  if (is.ok() && b.max_unitarity_defect() > 1e-10)
    is.add(path + ".columns", "not unitary (defect " +
                                  std::to_string(b.max_unitarity_defect()) +
                                  ")");
  return b;
}

}  // namespace

Scenario parse_scenario_json(const json& j, const std::string& origin) {
  Issues is;
  if (!j.is_object()) {
    is.add(origin, "scenario root must be a JSON object");
    throw ValidationError(std::move(is.v));
  }
  check_keys(j, origin,
             {"name", "dims", "hamiltonian", "initial", "window", "schedule",
              "trajectories", "sample_cap", "out", "solve_subsystem"},
             is);

  // --- partition ---
  std::vector<int> dims;
  if (!j.contains("dims") || !j["dims"].is_array() || j["dims"].empty()) {
    is.add(origin + ".dims", "missing or empty subsystem dimension list");
  } else {
    for (std::size_t i = 0; i < j["dims"].size(); ++i) {
      const auto& d = j["dims"][i];
      if (!d.is_number_integer() || d.get<long long>() < 1) {
        is.add(origin + ".dims[" + std::to_string(i) + "]",
               "expected an integer >= 1");
        dims.push_back(1);
      } else {
        dims.push_back(static_cast<int>(d.get<long long>()));
      }
    }
  }
  if (dims.empty()) dims.push_back(1);
  TensorPartition part(dims);
  const std::size_t D = part.total_dim;

  // --- Hamiltonian ---
  cvec acc(D * D, cdouble(0.0));
  if (!j.contains("hamiltonian") || !j["hamiltonian"].is_array()) {
    is.add(origin + ".hamiltonian", "missing term list");
  } else {
    for (std::size_t i = 0; i < j["hamiltonian"].size(); ++i)
      build_term(j["hamiltonian"][i], part, acc,
                 origin + ".hamiltonian[" + std::to_string(i) + "]", is);
  }
  double asym = 0.0;
  for (std::size_t r = 0; r < D; ++r)
    for (std::size_t c = 0; c < D; ++c)
      asym = std::max(asym, std::abs(acc[r * D + c] -
                                     std::conj(acc[c * D + r])));
  if (asym > 1e-10) {
    std::ostringstream os;
    os << "non-Hermitian after assembly (max asymmetry " << asym << ")";
    is.add(origin + ".hamiltonian", os.str());
  } else {
    // Scrub roundoff so downstream Hermitian-flagged paths are exact.
    for (std::size_t r = 0; r < D; ++r)
      for (std::size_t c = r; c < D; ++c) {
        const cdouble v =
            0.5 * (acc[r * D + c] + std::conj(acc[c * D + r]));
        acc[r * D + c] = v;
        acc[c * D + r] = std::conj(v);
      }
  }
  OperatorMatrix H(part, std::move(acc), asym <= 1e-10);

  // --- initial state ---
  cvec amps(D, cdouble(0.0));
  amps[0] = 1.0;
  if (!j.contains("initial") || !j["initial"].is_object()) {
    is.add(origin + ".initial", "missing initial-state object");
  } else {
    const json& ij = j["initial"];
    check_keys(ij, origin + ".initial", {"product", "dense"}, is);
    if (ij.contains("product") == ij.contains("dense")) {
      is.add(origin + ".initial", "give exactly one of 'product' or 'dense'");
    } else if (ij.contains("dense")) {
      amps = get_cvec(ij["dense"], D, origin + ".initial.dense", is);
    } else {
      const json& pr = ij["product"];
      if (!pr.is_array() ||
          pr.size() != static_cast<std::size_t>(part.n_subsystems())) {
        is.add(origin + ".initial.product",
               "expected one factor per subsystem (" +
                   std::to_string(part.n_subsystems()) + ")");
      } else {
        std::vector<StateVector> parts;
        for (int s = 0; s < part.n_subsystems(); ++s) {
          const std::size_t d = static_cast<std::size_t>(part.dim(s));
          cvec f = get_cvec(pr[static_cast<std::size_t>(s)], d,
                            origin + ".initial.product[" + std::to_string(s) +
                                "]",
                            is);
          parts.emplace_back(TensorPartition({part.dim(s)}), std::move(f));
        }
        if (is.ok())
          amps = tensor_state(std::span<const StateVector>(parts)).amps;
      }
    }
  }
  {
    const double n =
        std::sqrt(kern::norm_sq(amps.data(), amps.size()));
    if (n < 1e-12)
      is.add(origin + ".initial", "state has (near) zero norm");
    else
      kern::scale(1.0 / n, amps.data(), amps.size());
  }
  StateVector initial(part, std::move(amps));

  // --- schedule + window template ---
  ScheduleConfig cfg;
  if (!j.contains("window") || !j["window"].is_object()) {
    is.add(origin + ".window", "missing window object");
  } else {
    const json& wj = j["window"];
    check_keys(wj, origin + ".window", {"T", "coeffs", "gamma", "eta"}, is);
    if (!wj.contains("T"))
      is.add(origin + ".window.T", "missing required field");
    cfg.T = get_num(wj, "T", 1.0, origin + ".window", is);
    cfg.gamma = get_num(wj, "gamma", 0.0, origin + ".window", is);
    cfg.eta = get_num(wj, "eta", 1e-3, origin + ".window", is);
    if (wj.contains("coeffs")) {
      if (!wj["coeffs"].is_array() || wj["coeffs"].empty()) {
        is.add(origin + ".window.coeffs", "expected a nonempty number array");
      } else {
        cfg.coeffs.clear();
        for (std::size_t i = 0; i < wj["coeffs"].size(); ++i) {
          const auto& c = wj["coeffs"][i];
          if (!c.is_number()) {
            is.add(origin + ".window.coeffs[" + std::to_string(i) + "]",
                   "expected a number");
            cfg.coeffs.push_back(0.0);
          } else {
            cfg.coeffs.push_back(c.get<double>());
          }
        }
      }
    }
  }

  if (j.contains("schedule")) {
    const json& sj = j["schedule"];
    const std::string sp = origin + ".schedule";
    check_keys(sj, sp,
               {"t0", "n_half_cycles", "qualified_parity", "seed",
                "single_target", "grid_per_cycle", "policy", "pinned_basis",
                "fallback", "integrator", "solver"},
               is);
    cfg.t0 = get_num(sj, "t0", 0.0, sp, is);
    cfg.n_half_cycles =
        static_cast<int>(get_int(sj, "n_half_cycles", 0, sp, is));
    cfg.qualified_parity =
        static_cast<int>(get_int(sj, "qualified_parity", 0, sp, is));
    cfg.seed = static_cast<std::uint64_t>(get_int(sj, "seed", 0, sp, is));
    cfg.single_target = get_bool(sj, "single_target", false, sp, is);
    cfg.grid_per_cycle =
        static_cast<int>(get_int(sj, "grid_per_cycle", 0, sp, is));
    if (sj.contains("policy")) {
      const json& pj = sj["policy"];
      const std::string pp = sp + ".policy";
      check_keys(pj, pp, {"kind", "theta", "enabled"}, is);
      const std::string kind = get_str(pj, "kind", "threshold", pp, is);
      if (kind == "threshold")
        cfg.policy.kind = TriggerPolicy::Kind::threshold;
      else if (kind == "linear")
        cfg.policy.kind = TriggerPolicy::Kind::linear;
      else
        is.add(pp + ".kind", "expected 'threshold' or 'linear'");
      cfg.policy.theta = get_num(pj, "theta", 1.0, pp, is);
      if (pj.contains("enabled")) {
        if (!pj["enabled"].is_array()) {
          is.add(pp + ".enabled", "expected an array of subsystem ids");
        } else {
          cfg.policy.enabled.clear();
          for (const auto& e : pj["enabled"])
            if (e.is_number_integer())
              cfg.policy.enabled.push_back(
                  static_cast<int>(e.get<long long>()));
            else
              is.add(pp + ".enabled", "expected integers");
        }
      }
    }
    if (sj.contains("pinned_basis")) {
      if (!sj["pinned_basis"].is_array()) {
        is.add(sp + ".pinned_basis", "expected an array");
      } else {
        for (std::size_t i = 0; i < sj["pinned_basis"].size(); ++i)
          cfg.pinned.push_back(parse_pinned(
              sj["pinned_basis"][i], part,
              sp + ".pinned_basis[" + std::to_string(i) + "]", is));
      }
    }
    const std::string fb = get_str(sj, "fallback", "skip", sp, is);
    if (fb == "skip")
      cfg.on_nonconverged = ScheduleConfig::SolverFallback::skip;
    else if (fb == "pinned")
      cfg.on_nonconverged = ScheduleConfig::SolverFallback::use_pinned;
    else
      is.add(sp + ".fallback", "expected 'skip' or 'pinned'");
    if (sj.contains("integrator")) {
      const json& nj = sj["integrator"];
      const std::string np = sp + ".integrator";
      check_keys(nj, np, {"rtol", "atol", "hbar", "renormalize"}, is);
      cfg.integ.rtol = get_num(nj, "rtol", cfg.integ.rtol, np, is);
      cfg.integ.atol = get_num(nj, "atol", cfg.integ.atol, np, is);
      cfg.integ.hbar = get_num(nj, "hbar", cfg.integ.hbar, np, is);
      cfg.hbar = cfg.integ.hbar;
      cfg.integ.renormalize =
          get_bool(nj, "renormalize", cfg.integ.renormalize, np, is);
    }
    if (sj.contains("solver")) {
      const json& oj = sj["solver"];
      const std::string op = sp + ".solver";
      check_keys(oj, op, {"seed", "n_random_starts", "max_sweeps"}, is);
      cfg.solver.seed = static_cast<std::uint64_t>(
          get_int(oj, "seed", static_cast<long long>(cfg.solver.seed), op, is));
      cfg.solver.n_random_starts = static_cast<int>(get_int(
          oj, "n_random_starts", cfg.solver.n_random_starts, op, is));
      cfg.solver.max_sweeps = static_cast<int>(
          get_int(oj, "max_sweeps", cfg.solver.max_sweeps, op, is));
    }
  }

  Scenario sc{get_str(j, "name", "", origin, is),
              std::move(part),
              std::move(H),
              std::move(initial),
              std::move(cfg),
              static_cast<std::uint64_t>(
                  std::max<long long>(1, get_int(j, "trajectories", 1, origin, is))),
              static_cast<int>(get_int(j, "sample_cap", 16, origin, is)),
              get_str(j, "out", "out", origin, is),
              static_cast<int>(get_int(j, "solve_subsystem", 0, origin, is))};

  // Structural validation against the assembled objects.
  if (is.ok()) {
    try {
      sc.schedule.validate(sc.partition);
    } catch (const Error& e) {
      is.add(origin + ".schedule", e.what());
    }
    try {
      const CollapseWindow w = sc.schedule.window_for(0);
      const WindowReport rep = validate_window(w);
      if (!rep.valid)
        for (const auto& viol : rep.violations)
          is.add(origin + ".window", viol);
    } catch (const Error& e) {
      is.add(origin + ".window", e.what());
    }
    if (sc.solve_subsystem < 0 ||
        sc.solve_subsystem >= sc.partition.n_subsystems())
      is.add(origin + ".solve_subsystem", "out of range");
  }

  if (!is.ok()) throw ValidationError(std::move(is.v));
  return sc;
}

Scenario parse_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw ValidationError({path + ": cannot open scenario file"});
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    // Keep the parser's positional message ("… at line L, column C").
    throw ValidationError({path + ": " + e.what()});
  }
  return parse_scenario_json(j, path);
}

}  // namespace clab
