#pragma once

#include <vector>

#include "clab/dynamics.hpp"

namespace clab {

// Gram matrix of conditional states in the given basis:
// M_{k,k'} = <phi_k|phi_k'> with phi_k = partial_inner(U col k, psi).
struct ReducedDensityMatrix {
  int subsystem = 0;
  PreferredBasis basis;
  cvec M;  // row-major d x d, Hermitian by construction

  cdouble at(int k, int kp) const {
    return M[static_cast<std::size_t>(k) * basis.d + kp];
  }
  double trace() const;
  // Checks Hermiticity (1e-10), trace vs ||psi||^2 passed in (1e-9) and
  // positive semidefiniteness (min eigenvalue >= -1e-10).
  void validate(double expected_trace = 1.0) const;
};

ReducedDensityMatrix reduced_density_matrix(const StateVector& psi,
                                            const PreferredBasis& basis);

// l1 off-diagonal mass, zero iff M is diagonal.
double coherence_l1(const ReducedDensityMatrix& M);

// |<psi| i hbar rhs> - <psi|H|psi>| with rhs the active collapse (or
// Schrodinger) right-hand side, evaluated by the direct inner-product route.
double energy_identity_gap(const OperatorMatrix& H, const StateVector& psi,
                           const CollapseWindow& w, double t,
                           const std::vector<CollapseTarget>& targets,
                           double hbar = 1.0);

struct AsymptoticFit {
  double alpha_hat = 0.0;
  double beta_hat = 0.0;
  double r_squared = 0.0;
  double s_lo = 0.0, s_hi = 0.0;  // fit interval in s = tau + T - t
  int n_points = 0;
};

// Fit the endpoint power law of the rate from a decaying weight series
// w(t_i): the weight is a squared magnitude, so the rate is half the log
// derivative; each finite-difference rate is attributed to the geometric
// midpoint of its s pair (exact for the beta = 2 law), and ln|rate| is
// regressed against ln s.  Defaults: s in [max(eta T, 2e-3 T), 0.05 T] -- the
// lower edge keeps exp(2 Lambda) representable, the upper edge keeps the
// asymptotic regime (the law drifts a few percent already by s = 0.1 T).
AsymptoticFit fit_asymptotic_exponent(const std::vector<double>& t,
                                      const std::vector<double>& w,
                                      const CollapseWindow& win,
                                      double s_lo = 0.0, double s_hi = 0.0);

enum class WindowBoundary { start, end };

struct ContinuityReport {
  double mismatch = 0.0;  // relative second-derivative mismatch
  double left_norm = 0.0, right_norm = 0.0;
  double h = 0.0;
};

// One-sided second time-derivatives of psi on each side of the boundary
// (4-point one-sided first derivative of the active RHS), compared
// relatively.  `psi_at_tau` is the state entering the window; for the end
// boundary the window is integrated internally first.  The handoff to
// Schrodinger evolution happens at the cutoff, which is where the end
// boundary is evaluated.
ContinuityReport continuity_check(const OperatorMatrix& H,
                                  const StateVector& psi_at_tau,
                                  const CollapseWindow& w,
                                  const std::vector<CollapseTarget>& targets,
                                  WindowBoundary boundary, double h = 0.0,
                                  double hbar = 1.0);

// Integrate the composite collapse (H = H1 x I + I x Henv [+ H_int]) and the
// two standalone evolutions; return max over the grid of
// ||psi_composite(t) - psi1(t) x chi(t)||.
double factorization_check(const OperatorMatrix& H1, const OperatorMatrix& Henv,
                           const StateVector& psi1, const StateVector& chi,
                           const CollapseWindow& w, int k_tilde,
                           const PreferredBasis& basis1, int n_grid = 33,
                           const OperatorMatrix* H_int = nullptr,
                           const IntegratorOptions& opts = {});

}  // namespace clab
