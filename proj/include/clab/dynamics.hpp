#pragma once

#include <optional>
#include <vector>

#include "clab/basis.hpp"
#include "clab/hilbert.hpp"
#include "clab/window.hpp"

namespace clab {

// One collapse target: subsystem s collapses onto column k_tilde of basis.
struct CollapseTarget {
  int subsystem = 0;
  PreferredBasis basis;
  int k_tilde = 0;

  // Throws DomainError unless the basis matches the partition, is unitary
  // within 1e-10, and k_tilde is in range.
  void validate(const TensorPartition& p) const;
};

struct TrajectorySample {
  double t = 0.0;
  StateVector psi;
  std::vector<double> weights;  // ||<u_k x .|psi>||^2 in the observed basis
  double energy = 0.0;          // Re <psi|H|psi>
  double norm = 0.0;
};

struct IntegratorOptions {
  double rtol = 1e-9;
  double atol = 1e-12;
  double hbar = 1.0;
  // Step caps near the window-end singularity: h <= endpoint_frac*(tau+T-t)
  // and h <= stiff_limit/|lambda_inv(t)|.  The second matters: components far
  // below the error-control floor are invisible to the controller, and an
  // explicit method goes unstable on them once |lambda_inv|*h is O(1), which
  // would wreck the measured decay exponents.
  double endpoint_frac = 0.1;
  double stiff_limit = 0.25;
  bool renormalize = true;      // rescale to unit norm after accepted steps
  bool record_identity_gap = true;
  double target_floor = 1e-12;
  std::size_t max_steps = 2'000'000;
};

struct IntegrationResult {
  StateVector final_state;               // post-projection when targets exist
  std::optional<StateVector> at_cutoff;  // pre-projection state (targets only)
  std::vector<TrajectorySample> samples;
  std::size_t n_accepted = 0;
  std::size_t n_rejected = 0;
  // max over accepted steps of |  ||psi|| - 1 | before any renormalization
  double max_norm_drift = 0.0;
  // max over accepted steps of |<psi|i hbar d_t psi> - <H>| (see analysis)
  double max_identity_gap = 0.0;
  // off-target weight at the cutoff, before projection (targets only)
  double residual_at_cutoff = 0.0;
};

// (1 / i hbar) H psi
StateVector schrodinger_rhs(const OperatorMatrix& H, const StateVector& psi,
                            double hbar = 1.0);

// lambda_inv(t) (1 - P_k/p) psi + (1 / i hbar) H psi for a single target;
// P_k projects subsystem s onto basis column k_tilde, p is the target weight.
StateVector collapse_rhs(const OperatorMatrix& H, const StateVector& psi,
                         const CollapseWindow& w, double t,
                         const CollapseTarget& target, double hbar = 1.0,
                         double floor = 1e-12);

// lambda_inv(t) (m - sum_j P_j/p_j) psi + (1 / i hbar) H psi for m targets
// on pairwise disjoint subsystems.
StateVector multi_collapse_rhs(const OperatorMatrix& H, const StateVector& psi,
                               const CollapseWindow& w, double t,
                               const std::vector<CollapseTarget>& targets,
                               double hbar = 1.0, double floor = 1e-12);

// Project onto every target's selected column and renormalize.
StateVector finalize_collapse(const StateVector& psi,
                              const std::vector<CollapseTarget>& targets,
                              double floor = 1e-12);

// Integrate one window [tau, tau+T] (to the cutoff when targets are
// present, then finalize).  Samples are produced by landing exactly on the
// requested grid times (clamped into the integrated range).  Weights in the
// samples are taken against targets[0]'s basis, or the identity basis on
// subsystem 0 when no targets are given.
IntegrationResult integrate_window(const OperatorMatrix& H,
                                   const StateVector& psi0,
                                   const CollapseWindow& w,
                                   const std::vector<CollapseTarget>& targets,
                                   const std::vector<double>& grid,
                                   const IntegratorOptions& opts = {});

// Scalar endpoint model: i hbar dc/dt = i hbar lambda_inv c + source with
// lambda_inv = alpha (tau+T-t)^(-beta).  Integrated on a decreasing grid of
// s = tau+T-t; returns the numeric solution alongside the relevant closed
// form (the beta=1 linear solution, or the beta>1 survival proportionality
// normalized at the first grid point).
struct ScalarOracleResult {
  std::vector<double> s_grid;
  cvec numeric;
  cvec closed_form;
};
ScalarOracleResult scalar_oracle(double alpha, double beta, cdouble source,
                                 double hbar, std::vector<double> s_grid);

}  // namespace clab
