#include "clab/hilbert.hpp"

#include <cmath>
#include <string>

namespace clab {

TensorPartition::TensorPartition(std::vector<int> d) : dims(std::move(d)) {
  if (dims.empty()) throw DomainError("TensorPartition: dims must be nonempty");
  total_dim = 1;
  for (int x : dims) {
    if (x < 1) throw DomainError("TensorPartition: every dim must be >= 1");
    total_dim *= static_cast<std::size_t>(x);
  }
}

int TensorPartition::dim(int s) const {
  if (s < 0 || s >= n_subsystems())
    throw DomainError("TensorPartition: subsystem id " + std::to_string(s) +
                      " out of range");
  return dims[s];
}

TensorPartition::Slab TensorPartition::slab(int s) const {
  const int ds = dim(s);
  std::size_t outer = 1, inner = 1;
  for (int k = 0; k < s; ++k) outer *= static_cast<std::size_t>(dims[k]);
  for (int k = s + 1; k < n_subsystems(); ++k)
    inner *= static_cast<std::size_t>(dims[k]);
  return {outer, static_cast<std::size_t>(ds), inner};
}

std::size_t TensorPartition::complement_dim(int s) const {
  const Slab sl = slab(s);
  return sl.outer * sl.inner;
}

TensorPartition complement_partition(const TensorPartition& p, int s) {
  p.dim(s);  // range check
  std::vector<int> rest;
  for (int k = 0; k < p.n_subsystems(); ++k)
    if (k != s) rest.push_back(p.dims[k]);
  if (rest.empty()) rest.push_back(1);
  return TensorPartition(std::move(rest));
}

std::size_t flatten_index(const TensorPartition& p, std::span<const int> indices) {
  if (static_cast<int>(indices.size()) != p.n_subsystems())
    throw DomainError("flatten_index: expected " +
                      std::to_string(p.n_subsystems()) + " indices, got " +
                      std::to_string(indices.size()));
  std::size_t flat = 0;
  for (int k = 0; k < p.n_subsystems(); ++k) {
    if (indices[k] < 0 || indices[k] >= p.dims[k])
      throw DomainError("flatten_index: index " + std::to_string(indices[k]) +
                        " out of range for subsystem " + std::to_string(k));
    flat = flat * static_cast<std::size_t>(p.dims[k]) +
           static_cast<std::size_t>(indices[k]);
  }
  return flat;
}

std::vector<int> unflatten_index(const TensorPartition& p, std::size_t flat) {
  if (flat >= p.total_dim)
    throw DomainError("unflatten_index: composite index out of range");
  std::vector<int> idx(p.n_subsystems());
  for (int k = p.n_subsystems() - 1; k >= 0; --k) {
    const std::size_t d = static_cast<std::size_t>(p.dims[k]);
    idx[k] = static_cast<int>(flat % d);
    flat /= d;
  }
  return idx;
}

StateVector::StateVector(TensorPartition p, cvec a)
    : partition(std::move(p)), amps(std::move(a)) {
  if (amps.size() != partition.total_dim)
    throw DomainError("StateVector: amplitude length " +
                      std::to_string(amps.size()) + " != total_dim " +
                      std::to_string(partition.total_dim));
}

StateVector StateVector::zero(TensorPartition p) {
  cvec a(p.total_dim, cdouble{0.0, 0.0});
  return StateVector(std::move(p), std::move(a));
}

StateVector StateVector::basis_state(TensorPartition p, std::size_t flat) {
  if (flat >= p.total_dim)
    throw DomainError("StateVector::basis_state: index out of range");
  cvec a(p.total_dim, cdouble{0.0, 0.0});
  a[flat] = 1.0;
  return StateVector(std::move(p), std::move(a));
}

double StateVector::norm() const { return std::sqrt(norm_sq()); }

OperatorMatrix::OperatorMatrix(TensorPartition p, cvec e, bool hermitian)
    : partition(std::move(p)), entries(std::move(e)), hermitian_flag(hermitian) {
  const std::size_t d = partition.total_dim;
  if (entries.size() != d * d)
    throw DomainError("OperatorMatrix: entry count " +
                      std::to_string(entries.size()) + " != total_dim^2");
  if (hermitian_flag) {
    const double asym = max_asymmetry();
    if (asym > 1e-12)
      throw DomainError("OperatorMatrix: hermitian_flag set but max asymmetry " +
                        std::to_string(asym) + " > 1e-12");
  }
}

OperatorMatrix OperatorMatrix::identity(TensorPartition p) {
  const std::size_t d = p.total_dim;
  cvec e(d * d, cdouble{0.0, 0.0});
  for (std::size_t i = 0; i < d; ++i) e[i * d + i] = 1.0;
  return OperatorMatrix(std::move(p), std::move(e), true);
}

double OperatorMatrix::max_asymmetry() const {
  const std::size_t d = dim();
  double worst = 0.0;
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = r; c < d; ++c)
      worst = std::max(worst,
                       std::abs(entries[r * d + c] - std::conj(entries[c * d + r])));
  return worst;
}

StateVector tensor_state(std::span<const StateVector> parts) {
  if (parts.empty()) throw DomainError("tensor_state: no factors");
  std::vector<int> dims;
  for (const auto& f : parts)
    dims.insert(dims.end(), f.partition.dims.begin(), f.partition.dims.end());
  TensorPartition joint(std::move(dims));
  cvec out = parts[0].amps;
  for (std::size_t f = 1; f < parts.size(); ++f) {
    const cvec& b = parts[f].amps;
    cvec next(out.size() * b.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j)
        next[i * b.size() + j] = out[i] * b[j];
    out = std::move(next);
  }
  return StateVector(std::move(joint), std::move(out));
}

cvec partial_inner(std::span<const cdouble> basis_vec, const StateVector& psi,
                   int s) {
  const auto sl = psi.partition.slab(s);
  if (basis_vec.size() != sl.sub)
    throw DomainError("partial_inner: basis vector length " +
                      std::to_string(basis_vec.size()) +
                      " != subsystem dimension " + std::to_string(sl.sub));
  cvec out(sl.outer * sl.inner);
  kern::partial_inner(basis_vec.data(), psi.amps.data(), out.data(), sl.outer,
                      sl.sub, sl.inner);
  return out;
}

cvec conditional_normalized(std::span<const cdouble> phi, double floor) {
  const double n = std::sqrt(kern::norm_sq(phi.data(), phi.size()));
  if (!(n >= floor))
    throw DegenerateConditionalState(
        "conditional_normalized: weight " + std::to_string(n * n) +
        " below floor; branch weight numerically vanishes");
  cvec out(phi.begin(), phi.end());
  kern::scale(1.0 / n, out.data(), out.size());
  return out;
}

OperatorMatrix partial_matrix_element(const OperatorMatrix& H,
                                      std::span<const cdouble> bra,
                                      std::span<const cdouble> ket, int s) {
  const auto sl = H.partition.slab(s);
  if (bra.size() != sl.sub || ket.size() != sl.sub)
    throw DomainError("partial_matrix_element: vector length mismatch");
  const std::size_t dc = sl.outer * sl.inner;
  cvec out(dc * dc);
  kern::partial_matrix_element(bra.data(), ket.data(), H.entries.data(),
                               out.data(), sl.outer, sl.sub, sl.inner);
  bool herm = false;
  if (H.hermitian_flag && bra.size() == ket.size()) {
    herm = true;
    for (std::size_t i = 0; i < bra.size(); ++i)
      if (bra[i] != ket[i]) {
        herm = false;
        break;
      }
  }
  return OperatorMatrix(complement_partition(H.partition, s), std::move(out),
                        herm);
}

StateVector embed_product(const TensorPartition& p, int s,
                          std::span<const cdouble> sub,
                          std::span<const cdouble> comp) {
  const auto sl = p.slab(s);
  if (sub.size() != sl.sub || comp.size() != sl.outer * sl.inner)
    throw DomainError("embed_product: factor length mismatch");
  cvec out(p.total_dim);
  kern::embed_product(sub.data(), comp.data(), out.data(), sl.outer, sl.sub,
                      sl.inner);
  return StateVector(p, std::move(out));
}

StateVector apply(const OperatorMatrix& H, const StateVector& psi) {
  if (!(H.partition == psi.partition))
    throw DomainError("apply: operator and state partitions differ");
  cvec out(psi.amps.size());
  kern::matvec(H.entries.data(), psi.amps.data(), out.data(), psi.amps.size());
  return StateVector(psi.partition, std::move(out));
}

cdouble inner(const StateVector& a, const StateVector& b) {
  if (!(a.partition == b.partition))
    throw DomainError("inner: state partitions differ");
  return kern::dot_conj(a.amps.data(), b.amps.data(), a.amps.size());
}

double norm(const StateVector& psi) { return psi.norm(); }

OperatorMatrix op_tensor(const OperatorMatrix& A, const OperatorMatrix& B) {
  std::vector<int> dims = A.partition.dims;
  dims.insert(dims.end(), B.partition.dims.begin(), B.partition.dims.end());
  const std::size_t da = A.dim(), db = B.dim(), d = da * db;
  cvec out(d * d);
  for (std::size_t ra = 0; ra < da; ++ra)
    for (std::size_t rb = 0; rb < db; ++rb)
      for (std::size_t ca = 0; ca < da; ++ca)
        for (std::size_t cb = 0; cb < db; ++cb)
          out[(ra * db + rb) * d + (ca * db + cb)] = A.at(ra, ca) * B.at(rb, cb);
  return OperatorMatrix(TensorPartition(std::move(dims)), std::move(out),
                        A.hermitian_flag && B.hermitian_flag);
}

OperatorMatrix op_add(const OperatorMatrix& A, const OperatorMatrix& B,
                      cdouble coeff) {
  if (!(A.partition == B.partition))
    throw DomainError("op_add: operand partitions differ");
  cvec out(A.entries.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = A.entries[i] + coeff * B.entries[i];
  const bool herm = A.hermitian_flag && B.hermitian_flag &&
                    coeff.imag() == 0.0;
  return OperatorMatrix(A.partition, std::move(out), herm);
}

}  // namespace clab
