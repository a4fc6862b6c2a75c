#pragma once

#include <span>
#include <vector>

#include "clab/errors.hpp"
#include "clab/kernels.hpp"

namespace clab {

// Ordered tensor factorization of the total Hilbert space.  Index flattening
// is row-major: the leftmost subsystem index varies slowest.  By convention
// the last entry is the environment, but nothing below depends on that.
struct TensorPartition {
  std::vector<int> dims;
  std::size_t total_dim = 0;

  explicit TensorPartition(std::vector<int> d);

  int n_subsystems() const { return static_cast<int>(dims.size()); }
  int dim(int s) const;

  // Geometry of subsystem slot s: total index decomposes as (o, i, in) with
  // flat = (o * sub + i) * inner + in, o < outer, i < sub, in < inner.
  struct Slab {
    std::size_t outer, sub, inner;
  };
  Slab slab(int s) const;
  std::size_t complement_dim(int s) const;

  bool operator==(const TensorPartition& other) const { return dims == other.dims; }
};

// Partition with slot s removed; a single-subsystem partition collapses to
// the trivial one-dimensional space.
TensorPartition complement_partition(const TensorPartition& p, int s);

std::size_t flatten_index(const TensorPartition& p, std::span<const int> indices);
std::vector<int> unflatten_index(const TensorPartition& p, std::size_t flat);

// Dense state on a partitioned space.
struct StateVector {
  TensorPartition partition;
  cvec amps;

  StateVector(TensorPartition p, cvec a);
  static StateVector zero(TensorPartition p);
  static StateVector basis_state(TensorPartition p, std::size_t flat);

  double norm_sq() const { return kern::norm_sq(amps.data(), amps.size()); }
  double norm() const;
};

// Dense operator on a partitioned space, row-major entries.
struct OperatorMatrix {
  TensorPartition partition;
  cvec entries;
  bool hermitian_flag = false;

  OperatorMatrix(TensorPartition p, cvec e, bool hermitian = false);
  static OperatorMatrix identity(TensorPartition p);

  std::size_t dim() const { return partition.total_dim; }
  cdouble at(std::size_t r, std::size_t c) const { return entries[r * dim() + c]; }

  // max |entries - entries^dagger| over all elements.
  double max_asymmetry() const;
};

// Product state of the given factors, in order.
StateVector tensor_state(std::span<const StateVector> parts);

// phi(j) = sum_i basis_vec*(i) psi(i, j): contraction of subsystem s against
// basis_vec, living on the complement space.
cvec partial_inner(std::span<const cdouble> basis_vec, const StateVector& psi, int s);

// phi / ||phi||; throws DegenerateConditionalState when ||phi|| < floor.
cvec conditional_normalized(std::span<const cdouble> phi, double floor = 1e-12);

// (H_{k'k})_{j'j} = sum_{i',i} bra*(i') H_{(i',j'),(i,j)} ket(i): an operator
// on the complement of subsystem s.
OperatorMatrix partial_matrix_element(const OperatorMatrix& H,
                                      std::span<const cdouble> bra,
                                      std::span<const cdouble> ket, int s);

// Inverse of partial_inner for product data: state with subsystem s in
// `sub` and the complement in `comp`.
StateVector embed_product(const TensorPartition& p, int s,
                          std::span<const cdouble> sub,
                          std::span<const cdouble> comp);

StateVector apply(const OperatorMatrix& H, const StateVector& psi);
cdouble inner(const StateVector& a, const StateVector& b);  // conj-linear in a
double norm(const StateVector& psi);

// Kronecker product; the result's partition is the concatenation of the
// factors' dims.  Hermitian flag survives when both factors carry it.
OperatorMatrix op_tensor(const OperatorMatrix& A, const OperatorMatrix& B);
// Elementwise A + c*B on a shared partition.
OperatorMatrix op_add(const OperatorMatrix& A, const OperatorMatrix& B,
                      cdouble coeff = 1.0);

}  // namespace clab
