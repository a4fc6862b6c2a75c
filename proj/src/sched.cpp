#include "clab/sched.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <optional>
#include <set>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "clab/rng.hpp"

namespace clab {

void TriggerPolicy::validate() const {
  if (!(theta >= 0.0 && theta <= 1.0))
    throw DomainError("TriggerPolicy: theta must lie in [0, 1]");
  std::set<int> seen(enabled.begin(), enabled.end());
  if (seen.size() != enabled.size())
    throw DomainError("TriggerPolicy: duplicate enabled subsystem");
}

double trigger_probability(const ReducedDensityMatrix& M,
                           const TriggerPolicy& policy) {
  policy.validate();
  M.validate();
  const int d = M.basis.d;
  if (d == 1) return 1.0;
  const double cbar = coherence_l1(M) / (d - 1);
  switch (policy.kind) {
    case TriggerPolicy::Kind::threshold:
      return cbar < policy.theta ? 1.0 : 0.0;
    case TriggerPolicy::Kind::linear:
      if (policy.theta <= 0.0) return 0.0;
      return std::clamp(1.0 - cbar / policy.theta, 0.0, 1.0);
  }
  throw DomainError("TriggerPolicy: unknown kind");
}

int sample_target(const ReducedDensityMatrix& M, double u, double floor) {
  const int d = M.basis.d;
  double total = 0.0;
  for (int k = 0; k < d; ++k) total += std::max(M.at(k, k).real(), 0.0);
  if (total < floor)
    throw DomainError("sample_target: all diagonal weights below floor");
  if (std::abs(total - 1.0) > 1e-9)
    throw DomainError("sample_target: diagonal weights sum to " +
                      std::to_string(total) + ", not 1");
  double cum = 0.0;
  int last_positive = -1;
  for (int k = 0; k < d; ++k) {
    const double p = std::max(M.at(k, k).real(), 0.0);
    if (p <= 0.0) continue;
    last_positive = k;
    cum += p / total;
    if (u < cum) return k;
  }
  return last_positive;  // u landed in the rounding gap below 1
}

CollapseWindow ScheduleConfig::window_for(int j) const {
  const double g = gamma == 0.0 ? 1.0 / T : gamma;
  return CollapseWindow(t0 + j * T, T, coeffs, g, eta);
}

bool ScheduleConfig::qualified(int j) const {
  return j % 2 == qualified_parity;
}

const PreferredBasis* ScheduleConfig::find_pinned(int s) const {
  for (const auto& b : pinned)
    if (b.subsystem == s) return &b;
  return nullptr;
}

void ScheduleConfig::validate(const TensorPartition& p) const {
  if (n_half_cycles < 0) throw DomainError("ScheduleConfig: n_half_cycles < 0");
  if (qualified_parity != 0 && qualified_parity != 1)
    throw DomainError("ScheduleConfig: qualified_parity must be 0 or 1");
  if (!(T > 0.0)) throw DomainError("ScheduleConfig: T must be positive");
  if (!(hbar > 0.0)) throw DomainError("ScheduleConfig: hbar must be positive");
  if (grid_per_cycle == 1)
    throw DomainError("ScheduleConfig: grid_per_cycle must be 0 or >= 2");
  policy.validate();
  for (int s : policy.enabled)
    if (s < 0 || s >= p.n_subsystems())
      throw DomainError("ScheduleConfig: enabled subsystem out of range");
  for (const auto& b : pinned) {
    if (b.subsystem < 0 || b.subsystem >= p.n_subsystems() ||
        b.d != p.dim(b.subsystem))
      throw DomainError("ScheduleConfig: pinned basis does not fit partition");
  }
  // The window template itself is validated when instantiated per cycle.
  window_for(0);
}

HalfCycleResult advance_half_cycle(const StateVector& state,
                                   const OperatorMatrix& H,
                                   const ScheduleConfig& cfg, int j,
                                   std::uint64_t trajectory) {
  const CollapseWindow w = cfg.window_for(j);
  HalfCycleEvent ev;
  ev.j = j;
  ev.qualified = cfg.qualified(j);

  std::vector<CollapseTarget> targets;
  if (ev.qualified) {
    for (std::size_t i = 0; i < cfg.policy.enabled.size(); ++i) {
      const int s = cfg.policy.enabled[i];
      std::optional<PreferredBasis> basis;
      const PreferredBasis* pb = cfg.find_pinned(s);
      const bool pin_is_fallback =
          cfg.on_nonconverged == ScheduleConfig::SolverFallback::use_pinned;
      if (pb && !pin_is_fallback) {
        basis = *pb;
      } else {
        const BasisSolution sol = solve_preferred_basis(H, state, s, cfg.solver);
        if (sol.converged) {
          basis = sol.basis;
        } else {
          ev.basis_fallback = true;
          if (pin_is_fallback && pb) basis = *pb;
          // skip fallback: leave basis empty, subsystem cannot trigger
        }
      }
      if (!basis) continue;

      const ReducedDensityMatrix M = reduced_density_matrix(state, *basis);
      const double prob = trigger_probability(M, cfg.policy);
      ev.considered.push_back(s);
      ev.coherence.push_back(
          M.basis.d >= 2 ? coherence_l1(M) / (M.basis.d - 1) : 0.0);

      const double u = uniform01(cfg.seed, trajectory,
                                 static_cast<std::uint64_t>(j), 2 * i);
      if (u < prob) {
        const double u2 = uniform01(cfg.seed, trajectory,
                                    static_cast<std::uint64_t>(j), 2 * i + 1);
        const int k = sample_target(M, u2);
        CollapseTarget tg;
        tg.subsystem = s;
        tg.basis = *basis;
        tg.k_tilde = k;
        targets.push_back(std::move(tg));
        ev.subsystems.push_back(s);
        ev.k_tilde.push_back(k);
        double total = 0.0;
        for (int kk = 0; kk < M.basis.d; ++kk)
          total += std::max(M.at(kk, kk).real(), 0.0);
        ev.p_target.push_back(std::max(M.at(k, k).real(), 0.0) / total);
      }
    }
    if (cfg.single_target && targets.size() > 1) {
      std::size_t keep = 0;
      for (std::size_t i = 1; i < targets.size(); ++i)
        if (targets[i].subsystem < targets[keep].subsystem) keep = i;
      targets = {targets[keep]};
      ev.subsystems = {ev.subsystems[keep]};
      ev.k_tilde = {ev.k_tilde[keep]};
      ev.p_target = {ev.p_target[keep]};
    }
  }
  ev.triggered = !targets.empty();

  std::vector<double> grid;
  if (cfg.grid_per_cycle > 1) {
    grid.resize(static_cast<std::size_t>(cfg.grid_per_cycle));
    for (int i = 0; i < cfg.grid_per_cycle; ++i)
      grid[static_cast<std::size_t>(i)] =
          w.tau + (w.t_end() - w.tau) * i / (cfg.grid_per_cycle - 1);
  }

  IntegrationResult res = integrate_window(H, state, w, targets, grid,
                                           cfg.integ);
  HalfCycleResult out{std::move(res.final_state), std::move(ev),
                      std::move(res.samples), res.max_norm_drift,
                      res.max_identity_gap};
  return out;
}

RunRecord run_trajectory(const StateVector& initial, const OperatorMatrix& H,
                         const ScheduleConfig& cfg, std::uint64_t trajectory) {
  cfg.validate(initial.partition);
  RunRecord rec{initial, {}, {}, 0.0, 0.0, 0};
  StateVector state = initial;
  for (int j = 0; j < cfg.n_half_cycles; ++j) {
    HalfCycleResult r = advance_half_cycle(state, H, cfg, j, trajectory);
    state = std::move(r.state);
    rec.n_events += r.event.subsystems.size();
    rec.events.push_back(std::move(r.event));
    for (auto& s : r.samples) {
      // Consecutive windows share a boundary time; keep one sample for it.
      if (!rec.samples.empty() && s.t == rec.samples.back().t) continue;
      rec.samples.push_back(std::move(s));
    }
    rec.max_norm_drift = std::max(rec.max_norm_drift, r.max_norm_drift);
    rec.max_identity_gap = std::max(rec.max_identity_gap, r.max_identity_gap);
    const double drift = std::abs(state.norm() - 1.0);
    if (drift > 1e-8)
      throw NumericError("run_trajectory: norm drift " +
                         std::to_string(drift) + " at half-cycle boundary");
  }
  rec.final_state = std::move(state);
  return rec;
}

EnsembleSummary run_ensemble(const StateVector& initial,
                             const OperatorMatrix& H,
                             const ScheduleConfig& cfg, std::uint64_t n_traj,
                             int n_workers, int sample_cap,
                             std::vector<RunRecord>* records) {
  if (n_traj < 1) throw DomainError("run_ensemble: n_traj must be >= 1");
  cfg.validate(initial.partition);

  std::vector<std::optional<RunRecord>> slots(n_traj);
  std::vector<std::exception_ptr> errors(n_traj);

  ScheduleConfig unsampled = cfg;
  unsampled.grid_per_cycle = 0;

  const long long n = static_cast<long long>(n_traj);
#ifdef _OPENMP
  const int nt = n_workers > 0 ? n_workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(nt)
#else
  (void)n_workers;
#endif
  for (long long i = 0; i < n; ++i) {
    try {
      const ScheduleConfig& c =
          (sample_cap >= 0 && i >= sample_cap) ? unsampled : cfg;
      slots[static_cast<std::size_t>(i)] =
          run_trajectory(initial, H, c, static_cast<std::uint64_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  // Aggregate strictly in trajectory order: the summary is invariant under
  // the worker count.
  EnsembleSummary sum;
  sum.n_traj = n_traj;
  double coh_sum = 0.0;
  std::size_t coh_n = 0;
  for (auto& slot : slots) {
    RunRecord& rec = *slot;
    sum.n_events += rec.n_events;
    sum.max_norm_drift = std::max(sum.max_norm_drift, rec.max_norm_drift);
    sum.max_identity_gap =
        std::max(sum.max_identity_gap, rec.max_identity_gap);
    for (const auto& ev : rec.events) {
      if (ev.qualified) {
        ++sum.qualified_half_cycles;
        if (!ev.triggered) ++sum.no_trigger_qualified;
      } else if (ev.triggered) {
        ++sum.unqualified_triggered;
      }
      for (std::size_t i = 0; i < ev.subsystems.size(); ++i) {
        const int s = ev.subsystems[i];
        auto& hist = sum.outcome_counts[s];
        if (hist.empty())
          hist.assign(static_cast<std::size_t>(initial.partition.dim(s)), 0);
        hist[static_cast<std::size_t>(ev.k_tilde[i])] += 1;
        for (std::size_t c = 0; c < ev.considered.size(); ++c)
          if (ev.considered[c] == s) {
            coh_sum += ev.coherence[c];
            ++coh_n;
            break;
          }
      }
    }
    if (records) records->push_back(std::move(rec));
  }
  if (coh_n > 0) sum.mean_coherence_at_trigger = coh_sum / coh_n;
  return sum;
}

double bernoulli_no_trigger_fraction(std::uint64_t seed, std::size_t n_cycles,
                                     int n_subsystems, double p_each) {
  if (n_subsystems < 1 || !(p_each >= 0.0 && p_each <= 1.0))
    throw DomainError("bernoulli_no_trigger_fraction: bad parameters");
  std::uint64_t quiet = 0;
  const long long n = static_cast<long long>(n_cycles);
#ifdef _OPENMP
#pragma omp parallel for reduction(+ : quiet) schedule(static)
#endif
  for (long long c = 0; c < n; ++c) {
    bool any = false;
    for (int s = 0; s < n_subsystems; ++s)
      if (uniform01(seed, static_cast<std::uint64_t>(c),
                    static_cast<std::uint64_t>(s), 0) < p_each) {
        any = true;
        break;
      }
    quiet += any ? 0 : 1;
  }
  return static_cast<double>(quiet) / static_cast<double>(n_cycles);
}

}  // namespace clab
