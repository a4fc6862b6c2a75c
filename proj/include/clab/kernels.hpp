#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

namespace clab {

using cdouble = std::complex<double>;
using cvec = std::vector<cdouble>;

namespace kern {

// Neumaier compensated accumulator.  Used for every inner product and norm in
// the hot path: the collapse generator multiplies norm defects by factors up
// to ~1e5, so plain summation noise would show up in the diagnostics.
struct CompensatedSum {
  double s = 0.0;
  double c = 0.0;

  void add(double x) {
    const double t = s + x;
    if (std::abs(s) >= std::abs(x))
      c += (s - t) + x;
    else
      c += (x - t) + s;
    s = t;
  }

  double value() const { return s + c; }
};

// Work threshold (in flop-ish units) below which the dispatched kernels stay
// on the serial path.  All parallel variants are chunked so results are
// byte-identical for any thread count; the threshold is purely a performance
// knob.
inline constexpr std::size_t par_grain = 4096;

// Serial reference implementations.  These are the ground truth the
// dispatched kernels are tested against, and the path taken for small sizes.
namespace serial {

// y = A x, row-major n-by-n.
void matvec(const cdouble* A, const cdouble* x, cdouble* y, std::size_t n);

// sum_i conj(x_i) y_i, compensated.
cdouble dot_conj(const cdouble* x, const cdouble* y, std::size_t n);

// sum_i |x_i|^2, compensated.
double norm_sq(const cdouble* x, std::size_t n);

// y += a x
void axpy(cdouble a, const cdouble* x, cdouble* y, std::size_t n);

// x *= a
void scale(cdouble a, cdouble* x, std::size_t n);

// Contraction of subsystem s out of psi against a subsystem vector:
//   out(o, in) = sum_i conj(sub_i) psi(o, i, in)
// where psi is addressed as ((o * ds + i) * inner + in); outer/inner are the
// products of the dimensions before/after slot s.
void partial_inner(const cdouble* sub, const cdouble* psi, cdouble* out,
                   std::size_t outer, std::size_t ds, std::size_t inner);

// out(o, i, in) = sub_i * comp(o, in): product state sub (slot s) x comp.
void embed_product(const cdouble* sub, const cdouble* comp, cdouble* out,
                   std::size_t outer, std::size_t ds, std::size_t inner);

// Partial matrix element <bra|_s H |ket>_s: an operator on the complement.
//   out((o',in'), (o,in)) =
//     sum_{i',i} conj(bra_{i'}) H((o',i',in'), (o,i,in)) ket_i
// H is row-major (outer*ds*inner)^2, out is row-major (outer*inner)^2.
void partial_matrix_element(const cdouble* bra, const cdouble* ket,
                            const cdouble* H, cdouble* out, std::size_t outer,
                            std::size_t ds, std::size_t inner);

}  // namespace serial

// Dispatched variants: same contracts as serial::, OpenMP above par_grain.
void matvec(const cdouble* A, const cdouble* x, cdouble* y, std::size_t n);
cdouble dot_conj(const cdouble* x, const cdouble* y, std::size_t n);
double norm_sq(const cdouble* x, std::size_t n);
void axpy(cdouble a, const cdouble* x, cdouble* y, std::size_t n);
void scale(cdouble a, cdouble* x, std::size_t n);
void partial_inner(const cdouble* sub, const cdouble* psi, cdouble* out,
                   std::size_t outer, std::size_t ds, std::size_t inner);
void embed_product(const cdouble* sub, const cdouble* comp, cdouble* out,
                   std::size_t outer, std::size_t ds, std::size_t inner);
void partial_matrix_element(const cdouble* bra, const cdouble* ket,
                            const cdouble* H, cdouble* out, std::size_t outer,
                            std::size_t ds, std::size_t inner);

// True if any entry is NaN or Inf.
bool has_nonfinite(const cdouble* x, std::size_t n);

}  // namespace kern
}  // namespace clab
