#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "clab/analysis.hpp"

namespace clab {

// Maps the coherence of a reduced density matrix to a probability of
// switching from Schrodinger to collapse evolution.  Both kinds treat low
// coherence as collapse-ready (the decoherence reading); theta = 0 is the
// never-trigger policy.
struct TriggerPolicy {
  enum class Kind { threshold, linear };
  Kind kind = Kind::threshold;
  double theta = 1.0;
  std::vector<int> enabled;  // subsystems allowed to collapse

  void validate() const;  // theta in [0, 1], enabled ids distinct
};

// C-bar = l1 off-diagonal mass / (d - 1), in [0, 1] for normalized states.
// threshold: 1 if C-bar < theta else 0.  linear: clamp(1 - C-bar/theta).
// d = 1 has no off-diagonals and always triggers.
double trigger_probability(const ReducedDensityMatrix& M,
                           const TriggerPolicy& policy);

// Categorical draw over the diagonal weights of M given a uniform u in
// [0, 1).  Zero-weight indices are never selected.
int sample_target(const ReducedDensityMatrix& M, double u,
                  double floor = 1e-12);

struct ScheduleConfig {
  double t0 = 0.0;
  int n_half_cycles = 0;
  int qualified_parity = 0;  // j may collapse iff j mod 2 == qualified_parity
  // Window template, instantiated per half-cycle j on [t0 + jT, t0 + (j+1)T].
  double T = 1.0;
  std::vector<double> coeffs = {0.5, 0.5};
  double gamma = 0.0;  // 0 -> 1/T
  double eta = 1e-3;
  TriggerPolicy policy;
  std::uint64_t seed = 0;
  double hbar = 1.0;
  // Collapse at most one subsystem per half-cycle (lowest id wins) instead of
  // all triggered subsystems sharing one window.
  bool single_target = false;
  // Bases pinned per subsystem.  Under the default `skip` fallback a pinned
  // subsystem bypasses the solver entirely; under `use_pinned` the solver
  // always runs and the pinned entry is only the safety net taken when the
  // solve fails to converge.
  std::vector<PreferredBasis> pinned;
  enum class SolverFallback { skip, use_pinned };
  SolverFallback on_nonconverged = SolverFallback::skip;
  BasisSolveOptions solver;
  IntegratorOptions integ;
  int grid_per_cycle = 0;  // trajectory samples per half-cycle (0 = none)

  CollapseWindow window_for(int j) const;
  bool qualified(int j) const;
  const PreferredBasis* find_pinned(int s) const;
  void validate(const TensorPartition& p) const;
};

struct HalfCycleEvent {
  int j = 0;
  bool qualified = false;
  std::vector<int> considered;    // enabled subsystems that were evaluated
  std::vector<double> coherence;  // C-bar per considered subsystem
  bool triggered = false;
  std::vector<int> subsystems;  // triggered subsystems
  std::vector<int> k_tilde;
  std::vector<double> p_target;  // target weight at trigger time
  bool basis_fallback = false;   // a basis solve failed to converge
};

struct HalfCycleResult {
  StateVector state;
  HalfCycleEvent event;
  std::vector<TrajectorySample> samples;
  double max_norm_drift = 0.0;
  double max_identity_gap = 0.0;
};

// One half-cycle: Schrodinger when unqualified; otherwise per enabled
// subsystem solve/fetch the preferred basis, evaluate the trigger, and
// integrate the window with all triggered targets at once.
// Draw indices (seed, trajectory, j, 2i) and (…, 2i+1) are the trigger and
// target draws for the i-th enabled subsystem.
HalfCycleResult advance_half_cycle(const StateVector& state,
                                   const OperatorMatrix& H,
                                   const ScheduleConfig& cfg, int j,
                                   std::uint64_t trajectory);

struct RunRecord {
  StateVector final_state;
  std::vector<HalfCycleEvent> events;
  std::vector<TrajectorySample> samples;
  double max_norm_drift = 0.0;
  double max_identity_gap = 0.0;
  std::size_t n_events = 0;  // triggered (subsystem, cycle) pairs
};

RunRecord run_trajectory(const StateVector& initial, const OperatorMatrix& H,
                         const ScheduleConfig& cfg,
                         std::uint64_t trajectory = 0);

struct EnsembleSummary {
  std::uint64_t n_traj = 0;
  std::size_t n_events = 0;
  std::size_t qualified_half_cycles = 0;
  std::size_t no_trigger_qualified = 0;
  std::size_t unqualified_triggered = 0;  // must stay 0 (parity invariant)
  // Histogram over k of collapse outcomes, per subsystem.
  std::map<int, std::vector<std::uint64_t>> outcome_counts;
  double mean_coherence_at_trigger = 0.0;
  double max_norm_drift = 0.0;
  double max_identity_gap = 0.0;
};

// Trajectories run independently (OpenMP when workers != 1) and are
// aggregated in index order, so the summary does not depend on the worker
// count.  Only trajectories below sample_cap produce time-series samples.
// When `records` is given it receives every RunRecord in trajectory order.
EnsembleSummary run_ensemble(const StateVector& initial,
                             const OperatorMatrix& H,
                             const ScheduleConfig& cfg, std::uint64_t n_traj,
                             int n_workers = 0, int sample_cap = 16,
                             std::vector<RunRecord>* records = nullptr);

// Trigger-layer model of the many-subsystem thought experiment: n_subsystems
// independent Bernoulli(p_each) triggers per cycle start; returns the
// fraction of cycle starts with no trigger at all (expected (1-p)^n).
double bernoulli_no_trigger_fraction(std::uint64_t seed,
                                     std::size_t n_cycles, int n_subsystems,
                                     double p_each);

}  // namespace clab
