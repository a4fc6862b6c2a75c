#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "clab/hilbert.hpp"

namespace clab {

// Orthonormal subsystem basis: columns of U are the basis functions
// expressed in the reference (computational) basis.  Stored column-major so
// a column is contiguous.
struct PreferredBasis {
  int subsystem = 0;
  int d = 0;
  cvec U;  // U[k*d + i] = component i of column k

  PreferredBasis() = default;
  PreferredBasis(int subsystem_, int d_, cvec u);
  static PreferredBasis identity(int subsystem_, int d_);

  std::span<const cdouble> col(int k) const;
  double max_unitarity_defect() const;  // ||U^dag U - I||_max
};

// Phase convention: rotate each column so its largest-magnitude component is
// real positive (ties broken toward the lowest index).
void fix_gauge(PreferredBasis& b);

struct BasisSolveOptions {
  int n_random_starts = 8;
  std::uint64_t seed = 1;
  int max_sweeps = 200;
  double converge_residual = 1e-10;
  double stagnation_rel = 1e-12;  // relative improvement per sweep
  int stagnation_sweeps = 3;
  double degeneracy_floor = 1e-12;
};

struct BasisSolution {
  PreferredBasis basis;
  std::vector<cdouble> E;  // diag of g at the minimizer; imaginary parts kept
  double residual = 0.0;
  int iterations = 0;  // sweeps used by the winning start
  bool converged = false;
  std::vector<int> vacuous;  // columns whose conditional state degenerated
  int winning_seed = 0;      // -1 identity, -2 subsystem-eigenbasis, >=0 random
};

// Determination-equation residual machinery.  g_{k'k} = phi_hat_{k'}^dag
// H_{k'k} phi_hat_k with phi_hat_k the normalized conditional state for
// column k and H_{k'k} the partial matrix element between columns.
struct ResidualEval {
  cvec g;  // row-major d x d; entries touching a vacuous column are 0
  std::vector<bool> vacuous_col;
  double R = 0.0;  // sum_{k'>k} |g_{k'k}|^2 over non-vacuous pairs
};

ResidualEval residual_matrix(const PreferredBasis& basis,
                             const OperatorMatrix& H, const StateVector& psi,
                             int s, double floor = 1e-12);

double residual_norm(const PreferredBasis& basis, const OperatorMatrix& H,
                     const StateVector& psi, int s, double floor = 1e-12);

// Minimize R over the unitary group by Jacobi-style sweeps of complex Givens
// rotations with golden-section line scans, multi-started from the identity,
// the averaged-subsystem-Hamiltonian eigenbasis, and seeded random unitaries.
BasisSolution solve_preferred_basis(const OperatorMatrix& H,
                                    const StateVector& psi, int s,
                                    const BasisSolveOptions& opts = {});

// Eigenbasis of an isolated subsystem Hamiltonian, ascending eigenvalues,
// gauge-fixed.  H1 must be Hermitian.
struct IsolatedBasis {
  PreferredBasis basis;
  std::vector<double> eigenvalues;
};
IsolatedBasis isolated_eigenbasis(const OperatorMatrix& H1, int subsystem = 0);

// Degrees-of-freedom audit for the determination equations at subsystem
// dimension d: d(d+1)/2 orthonormalization constraints plus d(d+1)/2
// equation constraints against d^2 basis coefficients plus d energies.
struct DofAudit {
  long long constraints = 0;
  long long unknowns = 0;
  bool equal = false;
};
DofAudit dof_count(int d);

}  // namespace clab
