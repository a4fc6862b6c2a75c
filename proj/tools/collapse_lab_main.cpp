// collapse-lab: scenario-driven runs of the collapse dynamics, preferred-basis
// solves, invariant verification, and endpoint-exponent fits.
//
// Exit codes: 0 success, 2 validation failure (bad flags, bad scenario),
// 3 numeric failure (integration, invariant breach, non-convergence),
// 4 statistical acceptance failure (fit quality, frequency bounds).

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "clab/scenario.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Shortest round-trip decimal, for stable CSV bytes.
std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

ojson jcomplex(clab::cdouble z) { return ojson::array({z.real(), z.imag()}); }

ojson jcolumns(const clab::PreferredBasis& b) {
  ojson cols = ojson::array();
  for (int k = 0; k < b.d; ++k) {
    ojson col = ojson::array();
    for (int i = 0; i < b.d; ++i)
      col.push_back(jcomplex(b.U[static_cast<std::size_t>(k) * b.d + i]));
    cols.push_back(std::move(col));
  }
  return cols;
}

struct CommonFlags {
  std::string scenario_path;
  std::optional<std::uint64_t> trajectories;
  std::optional<std::uint64_t> seed;
  int workers = 0;
  std::string out_dir;
  std::optional<int> grid;
};

// Seed precedence: --seed flag, then COLLAPSE_LAB_SEED, then the scenario.
void apply_overrides(clab::Scenario& sc, const CommonFlags& fl) {
  if (fl.trajectories) sc.n_traj = *fl.trajectories;
  std::optional<std::uint64_t> seed = fl.seed;
  if (!seed) {
    if (const char* env = std::getenv("COLLAPSE_LAB_SEED")) {
      std::uint64_t v = 0;
      const auto res = std::from_chars(env, env + std::string(env).size(), v);
      if (res.ec != std::errc{} || *res.ptr != '\0')
        throw clab::ValidationError(
            {std::string("COLLAPSE_LAB_SEED: not an unsigned integer: ") +
             env});
      seed = v;
    }
  }
  if (seed) {
    sc.schedule.seed = *seed;
    sc.schedule.solver.seed = *seed;
  }
  if (!fl.out_dir.empty()) sc.out_dir = fl.out_dir;
  if (fl.grid) sc.schedule.grid_per_cycle = *fl.grid;
}

clab::PreferredBasis observation_basis(const clab::Scenario& sc) {
  const int s = sc.schedule.policy.enabled.empty()
                    ? 0
                    : sc.schedule.policy.enabled.front();
  if (const clab::PreferredBasis* pb = sc.schedule.find_pinned(s)) return *pb;
  return clab::PreferredBasis::identity(s, sc.partition.dim(s));
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw clab::Error("cannot write " + p.string());
  out << text;
}

void write_trajectory_csv(const fs::path& p, const clab::RunRecord& rec,
                          const clab::PreferredBasis& obs) {
  std::ostringstream os;
  os << "t,norm,energy,coherence";
  for (int k = 0; k < obs.d; ++k) os << ",w_" << k;
  os << "\n";
  for (const auto& s : rec.samples) {
    const auto M = clab::reduced_density_matrix(s.psi, obs);
    const double coh =
        obs.d >= 2 ? clab::coherence_l1(M) / (obs.d - 1) : 0.0;
    os << fmt(s.t) << ',' << fmt(s.norm) << ',' << fmt(s.energy) << ','
       << fmt(coh);
    for (int k = 0; k < obs.d; ++k) os << ',' << fmt(M.at(k, k).real());
    os << "\n";
  }
  write_text(p, os.str());
}

int cmd_run(clab::Scenario& sc, const CommonFlags& fl) {
  std::vector<clab::RunRecord> records;
  const clab::EnsembleSummary sum =
      clab::run_ensemble(sc.initial, sc.H, sc.schedule, sc.n_traj, fl.workers,
                         sc.sample_cap, &records);

  const bool norm_ok = sum.max_norm_drift <= 1e-8;
  const bool identity_ok = sum.max_identity_gap <= 1e-10;
  const bool parity_ok = sum.unqualified_triggered == 0;

  ojson summary;
  summary["scenario"] = sc.name;
  summary["dims"] = sc.partition.dims;
  summary["seed"] = sc.schedule.seed;
  summary["trajectories"] = sum.n_traj;
  summary["n_half_cycles"] = sc.schedule.n_half_cycles;
  summary["n_events"] = sum.n_events;
  summary["qualified_half_cycles"] = sum.qualified_half_cycles;
  summary["no_trigger_qualified"] = sum.no_trigger_qualified;
  summary["unqualified_triggered"] = sum.unqualified_triggered;
  summary["mean_coherence_at_trigger"] = sum.mean_coherence_at_trigger;
  ojson outcomes = ojson::array();
  for (const auto& [s, hist] : sum.outcome_counts) {
    std::uint64_t total = 0;
    for (auto c : hist) total += c;
    ojson entry;
    entry["subsystem"] = s;
    entry["counts"] = hist;
    ojson freqs = ojson::array(), cis = ojson::array();
    for (auto c : hist) {
      const double f =
          total ? static_cast<double>(c) / static_cast<double>(total) : 0.0;
      freqs.push_back(f);
      // 3-sigma normal approximation of the binomial interval.
      const double half =
          total ? 3.0 * std::sqrt(f * (1.0 - f) /
                                  static_cast<double>(total))
                : 0.0;
      cis.push_back(ojson::array({std::max(0.0, f - half),
                                  std::min(1.0, f + half)}));
    }
    entry["frequencies"] = std::move(freqs);
    entry["ci3sigma"] = std::move(cis);
    outcomes.push_back(std::move(entry));
  }
  summary["outcomes"] = std::move(outcomes);
  summary["invariants"] = {{"max_norm_drift", sum.max_norm_drift},
                           {"max_identity_gap", sum.max_identity_gap},
                           {"norm_drift_ok", norm_ok},
                           {"identity_gap_ok", identity_ok},
                           {"parity_ok", parity_ok}};

  fs::create_directories(sc.out_dir);
  write_text(fs::path(sc.out_dir) / "summary.json", summary.dump(2) + "\n");

  std::ostringstream events;
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (const auto& ev : records[i].events) {
      ojson e;
      e["traj"] = i;
      e["j"] = ev.j;
      e["qualified"] = ev.qualified;
      e["coherence"] = ev.coherence;
      e["triggered"] = ev.triggered;
      e["subsystem"] = ev.subsystems;
      e["k_tilde"] = ev.k_tilde;
      e["p_target"] = ev.p_target;
      e["fallback"] = ev.basis_fallback;
      events << e.dump() << "\n";
    }
  }
  write_text(fs::path(sc.out_dir) / "events.jsonl", events.str());

  const clab::PreferredBasis obs = observation_basis(sc);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].samples.empty()) continue;
    write_trajectory_csv(
        fs::path(sc.out_dir) / ("traj_" + std::to_string(i) + ".csv"),
        records[i], obs);
  }

  std::cout << "run: " << sum.n_events << " collapse events over "
            << sum.n_traj << " trajectories; artifacts in " << sc.out_dir
            << "\n";
  if (!(norm_ok && identity_ok && parity_ok)) {
    std::cerr << "run: invariant breach (norm_drift_ok=" << norm_ok
              << " identity_gap_ok=" << identity_ok
              << " parity_ok=" << parity_ok << ")\n";
    return 3;
  }
  return 0;
}

int cmd_solve_basis(clab::Scenario& sc) {
  const clab::BasisSolution sol = clab::solve_preferred_basis(
      sc.H, sc.initial, sc.solve_subsystem, sc.schedule.solver);

  ojson rep;
  rep["scenario"] = sc.name;
  rep["subsystem"] = sc.solve_subsystem;
  rep["converged"] = sol.converged;
  rep["residual"] = sol.residual;
  rep["iterations"] = sol.iterations;
  rep["winning_start"] = sol.winning_seed;
  ojson evals = ojson::array();
  for (const auto& e : sol.E) evals.push_back(jcomplex(e));
  rep["E"] = std::move(evals);
  rep["vacuous"] = sol.vacuous;
  rep["columns"] = jcolumns(sol.basis);

  fs::create_directories(sc.out_dir);
  write_text(fs::path(sc.out_dir) / "basis.json", rep.dump(2) + "\n");
  std::cout << "solve-basis: residual " << sol.residual << " after "
            << sol.iterations << " sweeps ("
            << (sol.converged ? "converged" : "NOT converged") << ")\n";
  return sol.converged ? 0 : 3;
}

int cmd_fit_exponent(clab::Scenario& sc, const std::string& csv_path,
                     int column) {
  std::ifstream in(csv_path);
  if (!in)
    throw clab::ValidationError({csv_path + ": cannot open CSV"});
  std::string line;
  if (!std::getline(in, line))
    throw clab::ValidationError({csv_path + ": empty file"});
  std::vector<std::string> header;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
  }
  const auto col_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw clab::ValidationError({csv_path + ": no column '" + name + "'"});
  };
  const int t_col = col_index("t");

  std::vector<std::vector<double>> w_cols;
  std::vector<int> w_idx;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i].rfind("w_", 0) == 0) w_idx.push_back(static_cast<int>(i));
  if (w_idx.empty())
    throw clab::ValidationError({csv_path + ": no w_* columns"});
  w_cols.resize(w_idx.size());

  std::vector<double> t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != header.size())
      throw clab::ValidationError({csv_path + ": ragged row"});
    t.push_back(row[static_cast<std::size_t>(t_col)]);
    for (std::size_t k = 0; k < w_idx.size(); ++k)
      w_cols[k].push_back(row[static_cast<std::size_t>(w_idx[k])]);
  }

  // Column choice: explicit flag, else the fastest-decaying weight column.
  int chosen = column;
  if (chosen < 0) {
    double best = -1.0;
    for (std::size_t k = 0; k < w_cols.size(); ++k) {
      const double first = w_cols[k].front(), last = w_cols[k].back();
      if (first > 0.0 && last >= 0.0 && first > last) {
        const double decay = first - last;
        if (decay > best) {
          best = decay;
          chosen = static_cast<int>(k);
        }
      }
    }
    if (chosen < 0)
      throw clab::FitError("fit-exponent: no decaying w_* column found");
  } else if (chosen >= static_cast<int>(w_cols.size())) {
    throw clab::ValidationError({csv_path + ": column w_" +
                                 std::to_string(chosen) + " out of range"});
  }

  const clab::CollapseWindow w = sc.schedule.window_for(0);
  const clab::AsymptoticFit fit = clab::fit_asymptotic_exponent(
      t, w_cols[static_cast<std::size_t>(chosen)], w);

  ojson rep;
  rep["csv"] = csv_path;
  rep["column"] = chosen;
  rep["alpha_hat"] = fit.alpha_hat;
  rep["beta_hat"] = fit.beta_hat;
  rep["r_squared"] = fit.r_squared;
  rep["s_lo"] = fit.s_lo;
  rep["s_hi"] = fit.s_hi;
  rep["n_points"] = fit.n_points;
  fs::create_directories(sc.out_dir);
  write_text(fs::path(sc.out_dir) / "fit.json", rep.dump(2) + "\n");
  std::cout << "fit-exponent: alpha_hat " << fit.alpha_hat << ", beta_hat "
            << fit.beta_hat << ", r^2 " << fit.r_squared << " (w_" << chosen
            << ")\n";
  return 0;
}

// The scenario used by `verify` when none is supplied: a qubit pair with
// per-subsystem level splittings and a diagonal-diagonal coupling, standard
// window, always-trigger on subsystem 0.  The Hamiltonian commutes with the
// observation-basis projectors on purpose: a coupling that repopulates
// off-target columns leaves a slaved source term in the RHS at the cutoff,
// and the second derivative then genuinely jumps at the projection hand-off.
const char* kDefaultVerifyScenario = R"({
  "name": "builtin-verify",
  "dims": [2, 2],
  "hamiltonian": [
    {"kind": "diagonal", "subsystem": 0, "values": [0.35, -0.2]},
    {"kind": "diagonal", "subsystem": 1, "values": [0.15, -0.3]},
    {"kind": "position_coupling", "subsystem_a": 0, "subsystem_b": 1,
     "strength": 0.4}
  ],
  "initial": {"product": [[[0.8, 0], [0.6, 0]], [[0.6, 0], [0, 0.8]]]},
  "window": {"T": 1.0, "eta": 3e-3},
  "schedule": {
    "n_half_cycles": 2,
    "policy": {"kind": "threshold", "theta": 1.0, "enabled": [0]},
    "seed": 7
  }
})";

struct VerifyRow {
  std::string name;
  bool pass = false;
  bool statistical = false;  // failure maps to exit 4 instead of 3
  std::string detail;
};

int cmd_verify(clab::Scenario& sc) {
  std::vector<VerifyRow> rows;
  const clab::CollapseWindow w = sc.schedule.window_for(0);

  {  // Window validation (boundary sums, derivative conditions, positivity).
    const clab::WindowReport rep = clab::validate_window(w);
    std::ostringstream d;
    d << "sum_err " << rep.sum_error << ", alt_sum_err " << rep.alt_sum_error;
    rows.push_back({"window-validation", rep.valid, false, d.str()});
  }

  // One collapse window from the scenario's initial state, deterministic
  // target: the heaviest weight in the observation basis.
  const clab::PreferredBasis obs = observation_basis(sc);
  const auto M0 = clab::reduced_density_matrix(sc.initial, obs);
  int k_heavy = 0;
  for (int k = 1; k < obs.d; ++k)
    if (M0.at(k, k).real() > M0.at(k_heavy, k_heavy).real()) k_heavy = k;
  clab::CollapseTarget target;
  target.subsystem = obs.subsystem;
  target.basis = obs;
  target.k_tilde = k_heavy;

  clab::IntegratorOptions iopts = sc.schedule.integ;
  const auto res =
      clab::integrate_window(sc.H, sc.initial, w, {target}, {}, iopts);
  {
    std::ostringstream d;
    d << "max drift " << res.max_norm_drift;
    rows.push_back({"norm-drift", res.max_norm_drift <= 1e-8, false, d.str()});
  }
  {
    std::ostringstream d;
    d << "max gap " << res.max_identity_gap;
    rows.push_back(
        {"energy-identity", res.max_identity_gap <= 1e-10, false, d.str()});
  }

  {  // Continuity at both window boundaries.
    const auto start = clab::continuity_check(sc.H, sc.initial, w, {target},
                                              clab::WindowBoundary::start);
    const auto end = clab::continuity_check(sc.H, sc.initial, w, {target},
                                            clab::WindowBoundary::end);
    std::ostringstream d;
    d << "start " << start.mismatch << ", end " << end.mismatch;
    rows.push_back({"continuity",
                    start.mismatch <= 1e-4 && end.mismatch <= 1e-4, false,
                    d.str()});
  }

  {  // Endpoint exponent fit on an H = 0 run under the scenario's window.
    const clab::OperatorMatrix H0(
        sc.partition, clab::cvec(sc.partition.total_dim * sc.partition.total_dim,
                                 clab::cdouble(0.0)),
        true);
    // Log-spaced in s = tau + T - t so the fit range is sampled evenly in
    // ln s.
    std::vector<double> grid;
    const int n = 240;
    const double s_top = 0.2 * w.T, s_bot = w.eta * w.T;
    for (int i = 0; i <= n; ++i) {
      const double s = s_top * std::pow(s_bot / s_top,
                                        static_cast<double>(i) / n);
      grid.push_back(w.t_end() - s);
    }
    const auto runfit =
        clab::integrate_window(H0, sc.initial, w, {target}, grid, iopts);
    std::vector<double> ts, ws;
    int k_off = -1;  // an off-target component with nonzero weight
    for (int k = 0; k < obs.d; ++k)
      if (k != k_heavy && M0.at(k, k).real() > 1e-6) k_off = k;
    if (k_off < 0) {
      rows.push_back({"exponent-fit", false, true,
                      "no off-target weight to fit"});
    } else {
      for (const auto& s : runfit.samples) {
        ts.push_back(s.t);
        ws.push_back(s.weights[static_cast<std::size_t>(k_off)]);
      }
      // Generic endpoint law: beta = 2, alpha = -2 gamma / f''(t_end).
      double fpp = 0.0;
      for (std::size_t m = 0; m < w.coeffs.size(); ++m) {
        const double sign = (m % 2 == 0) ? 1.0 : -1.0;
        const double k = static_cast<double>(m) * 3.14159265358979323846 / w.T;
        fpp += -sign * w.coeffs[m] * k * k;
      }
      const double alpha_expect = -2.0 * w.gamma / fpp;
      try {
        const auto fit = clab::fit_asymptotic_exponent(ts, ws, w);
        const bool ok = std::abs(fit.beta_hat - 2.0) <= 0.02 &&
                        std::abs(fit.alpha_hat - alpha_expect) <=
                            0.02 * std::abs(alpha_expect) &&
                        fit.r_squared >= 0.999;
        std::ostringstream d;
        d << "alpha " << fit.alpha_hat << " (expect " << alpha_expect
          << "), beta " << fit.beta_hat << ", r2 " << fit.r_squared;
        rows.push_back({"exponent-fit", ok, true, d.str()});
      } catch (const clab::FitError& e) {
        rows.push_back({"exponent-fit", false, true, e.what()});
      }
    }
  }

  {  // Factorization on a canonical qubit x qubit product configuration.
    const clab::TensorPartition q({2});
    clab::cvec z = {clab::cdouble(0.3), clab::cdouble(0.0), clab::cdouble(0.0),
                    clab::cdouble(-0.3)};
    clab::cvec x = {clab::cdouble(0.0), clab::cdouble(0.2), clab::cdouble(0.2),
                    clab::cdouble(0.0)};
    const clab::OperatorMatrix H1(q, z, true), Henv(q, x, true);
    const clab::StateVector psi1(q, {clab::cdouble(0.6),
                                     clab::cdouble(0.0, 0.8)});
    const clab::StateVector chi(q, {clab::cdouble(std::sqrt(0.5)),
                                    clab::cdouble(std::sqrt(0.5))});
    const clab::CollapseWindow wf(0.0, w.T, w.coeffs, w.gamma, w.eta);
    const clab::PreferredBasis idb = clab::PreferredBasis::identity(0, 2);
    const double dev =
        clab::factorization_check(H1, Henv, psi1, chi, wf, 0, idb);
    // Entangling control: sigma_x x sigma_x spoils the product form.
    clab::cvec xx(16, clab::cdouble(0.0));
    const clab::TensorPartition qq({2, 2});
    for (int r = 0; r < 4; ++r) {
      const int rc = (r ^ 3);  // flip both qubits
      xx[static_cast<std::size_t>(r) * 4 + rc] = 0.5;
    }
    const clab::OperatorMatrix Hint(qq, xx, true);
    const double dev_ctrl =
        clab::factorization_check(H1, Henv, psi1, chi, wf, 0, idb, 33, &Hint);
    std::ostringstream d;
    d << "deviation " << dev << ", entangled control " << dev_ctrl;
    rows.push_back(
        {"factorization", dev <= 1e-8 && dev_ctrl >= 1e-2, false, d.str()});
  }

  bool any_numeric = false, any_statistical = false;
  for (const auto& r : rows) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail
              << "\n";
    if (!r.pass) (r.statistical ? any_statistical : any_numeric) = true;
  }
  if (any_numeric) return 3;
  if (any_statistical) return 4;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"collapse-lab: collapse dynamics, preferred bases, and "
               "diagnostics on finite composite quantum systems"};
  app.require_subcommand(1);

  CommonFlags fl;
  std::string csv_path;
  int fit_column = -1;

  auto add_common = [&](CLI::App* cmd, bool scenario_required) {
    auto* opt = cmd->add_option("--scenario", fl.scenario_path,
                                "Scenario JSON path");
    if (scenario_required) opt->required();
    cmd->add_option("--seed", fl.seed,
                    "Seed override (beats COLLAPSE_LAB_SEED and the scenario)");
    cmd->add_option("--out", fl.out_dir, "Output directory override");
  };

  CLI::App* run = app.add_subcommand("run", "Run a trajectory ensemble");
  add_common(run, true);
  run->add_option("--trajectories", fl.trajectories, "Ensemble size override");
  run->add_option("--workers", fl.workers, "Worker thread count (0 = auto)");
  run->add_option("--grid", fl.grid, "Samples per half-cycle for CSV output");

  CLI::App* solve =
      app.add_subcommand("solve-basis", "Solve the preferred basis for the "
                                        "scenario's initial state");
  add_common(solve, true);

  CLI::App* verify =
      app.add_subcommand("verify", "Run the invariant suite (window, norm, "
                                   "energy identity, continuity, exponent "
                                   "fit, factorization)");
  add_common(verify, false);

  CLI::App* fitcmd =
      app.add_subcommand("fit-exponent", "Fit the endpoint decay exponents "
                                         "from a trajectory CSV");
  add_common(fitcmd, true);
  fitcmd->add_option("--csv", csv_path, "Trajectory CSV path")->required();
  fitcmd->add_option("--column", fit_column,
                     "w_<k> column to fit (default: fastest-decaying)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

#ifdef _OPENMP
  if (fl.workers > 0) omp_set_num_threads(fl.workers);
#endif

  try {
    clab::Scenario sc =
        fl.scenario_path.empty()
            ? clab::parse_scenario_json(
                  nlohmann::json::parse(kDefaultVerifyScenario), "<builtin>")
            : clab::parse_scenario(fl.scenario_path);
    apply_overrides(sc, fl);

    if (run->parsed()) return cmd_run(sc, fl);
    if (solve->parsed()) return cmd_solve_basis(sc);
    if (verify->parsed()) return cmd_verify(sc);
    if (fitcmd->parsed()) return cmd_fit_exponent(sc, csv_path, fit_column);
  } catch (const clab::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const clab::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const clab::FitError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const clab::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
