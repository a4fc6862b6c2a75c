#include "clab/kernels.hpp"

#include <array>

namespace clab {
namespace kern {

namespace serial {

void matvec(const cdouble* A, const cdouble* x, cdouble* y, std::size_t n) {
  for (std::size_t r = 0; r < n; ++r) {
    const cdouble* row = A + r * n;
    CompensatedSum re, im;
    for (std::size_t c = 0; c < n; ++c) {
      const cdouble t = row[c] * x[c];
      re.add(t.real());
      im.add(t.imag());
    }
    y[r] = {re.value(), im.value()};
  }
}

cdouble dot_conj(const cdouble* x, const cdouble* y, std::size_t n) {
  CompensatedSum re, im;
  for (std::size_t i = 0; i < n; ++i) {
    const cdouble t = std::conj(x[i]) * y[i];
    re.add(t.real());
    im.add(t.imag());
  }
  return {re.value(), im.value()};
}

double norm_sq(const cdouble* x, std::size_t n) {
  CompensatedSum acc;
  for (std::size_t i = 0; i < n; ++i)
    acc.add(x[i].real() * x[i].real() + x[i].imag() * x[i].imag());
  return acc.value();
}

void axpy(cdouble a, const cdouble* x, cdouble* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale(cdouble a, cdouble* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void partial_inner(const cdouble* sub, const cdouble* psi, cdouble* out,
                   std::size_t outer, std::size_t ds, std::size_t inner) {
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      CompensatedSum re, im;
      for (std::size_t i = 0; i < ds; ++i) {
        const cdouble t = std::conj(sub[i]) * psi[(o * ds + i) * inner + in];
        re.add(t.real());
        im.add(t.imag());
      }
      out[o * inner + in] = {re.value(), im.value()};
    }
  }
}

void embed_product(const cdouble* sub, const cdouble* comp, cdouble* out,
                   std::size_t outer, std::size_t ds, std::size_t inner) {
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < ds; ++i)
      for (std::size_t in = 0; in < inner; ++in)
        out[(o * ds + i) * inner + in] = sub[i] * comp[o * inner + in];
}

void partial_matrix_element(const cdouble* bra, const cdouble* ket,
                            const cdouble* H, cdouble* out, std::size_t outer,
                            std::size_t ds, std::size_t inner) {
  const std::size_t dim = outer * ds * inner;
  for (std::size_t op = 0; op < outer; ++op) {
    for (std::size_t inp = 0; inp < inner; ++inp) {
      const std::size_t rout = op * inner + inp;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          CompensatedSum re, im;
          for (std::size_t ip = 0; ip < ds; ++ip) {
            const std::size_t row = (op * ds + ip) * inner + inp;
            for (std::size_t i = 0; i < ds; ++i) {
              const std::size_t col = (o * ds + i) * inner + in;
              const cdouble t = std::conj(bra[ip]) * H[row * dim + col] * ket[i];
              re.add(t.real());
              im.add(t.imag());
            }
          }
          out[rout * (outer * inner) + (o * inner + in)] = {re.value(),
                                                            im.value()};
        }
      }
    }
  }
}

}  // namespace serial

// The parallel variants below split work along independent output elements
// (or into a fixed number of chunks for reductions), so the result does not
// depend on the number of threads.

void matvec(const cdouble* A, const cdouble* x, cdouble* y, std::size_t n) {
  if (n * n < par_grain) {
    serial::matvec(A, x, y, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < n; ++r) {
    const cdouble* row = A + r * n;
    CompensatedSum re, im;
    for (std::size_t c = 0; c < n; ++c) {
      const cdouble t = row[c] * x[c];
      re.add(t.real());
      im.add(t.imag());
    }
    y[r] = {re.value(), im.value()};
  }
}

cdouble dot_conj(const cdouble* x, const cdouble* y, std::size_t n) {
  if (n < par_grain) return serial::dot_conj(x, y, n);
  constexpr std::size_t nchunk = 64;
  std::array<cdouble, nchunk> part;
#pragma omp parallel for schedule(static)
  for (std::size_t k = 0; k < nchunk; ++k) {
    const std::size_t lo = n * k / nchunk;
    const std::size_t hi = n * (k + 1) / nchunk;
    part[k] = serial::dot_conj(x + lo, y + lo, hi - lo);
  }
  CompensatedSum re, im;
  for (std::size_t k = 0; k < nchunk; ++k) {
    re.add(part[k].real());
    im.add(part[k].imag());
  }
  return {re.value(), im.value()};
}

double norm_sq(const cdouble* x, std::size_t n) {
  if (n < par_grain) return serial::norm_sq(x, n);
  constexpr std::size_t nchunk = 64;
  std::array<double, nchunk> part;
#pragma omp parallel for schedule(static)
  for (std::size_t k = 0; k < nchunk; ++k) {
    const std::size_t lo = n * k / nchunk;
    const std::size_t hi = n * (k + 1) / nchunk;
    part[k] = serial::norm_sq(x + lo, hi - lo);
  }
  CompensatedSum acc;
  for (std::size_t k = 0; k < nchunk; ++k) acc.add(part[k]);
  return acc.value();
}

void axpy(cdouble a, const cdouble* x, cdouble* y, std::size_t n) {
  if (n < par_grain) {
    serial::axpy(a, x, y, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale(cdouble a, cdouble* x, std::size_t n) {
  if (n < par_grain) {
    serial::scale(a, x, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void partial_inner(const cdouble* sub, const cdouble* psi, cdouble* out,
                   std::size_t outer, std::size_t ds, std::size_t inner) {
  if (outer * ds * inner < par_grain) {
    serial::partial_inner(sub, psi, out, outer, ds, inner);
    return;
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      CompensatedSum re, im;
      for (std::size_t i = 0; i < ds; ++i) {
        const cdouble t = std::conj(sub[i]) * psi[(o * ds + i) * inner + in];
        re.add(t.real());
        im.add(t.imag());
      }
      out[o * inner + in] = {re.value(), im.value()};
    }
  }
}

void embed_product(const cdouble* sub, const cdouble* comp, cdouble* out,
                   std::size_t outer, std::size_t ds, std::size_t inner) {
  if (outer * ds * inner < par_grain) {
    serial::embed_product(sub, comp, out, outer, ds, inner);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < ds; ++i)
      for (std::size_t in = 0; in < inner; ++in)
        out[(o * ds + i) * inner + in] = sub[i] * comp[o * inner + in];
}

void partial_matrix_element(const cdouble* bra, const cdouble* ket,
                            const cdouble* H, cdouble* out, std::size_t outer,
                            std::size_t ds, std::size_t inner) {
  const std::size_t dc = outer * inner;
  if (dc * dc * ds * ds < par_grain) {
    serial::partial_matrix_element(bra, ket, H, out, outer, ds, inner);
    return;
  }
  const std::size_t dim = outer * ds * inner;
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t op = 0; op < outer; ++op) {
    for (std::size_t inp = 0; inp < inner; ++inp) {
      const std::size_t rout = op * inner + inp;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          CompensatedSum re, im;
          for (std::size_t ip = 0; ip < ds; ++ip) {
            const std::size_t row = (op * ds + ip) * inner + inp;
            for (std::size_t i = 0; i < ds; ++i) {
              const std::size_t col = (o * ds + i) * inner + in;
              const cdouble t = std::conj(bra[ip]) * H[row * dim + col] * ket[i];
              re.add(t.real());
              im.add(t.imag());
            }
          }
          out[rout * dc + (o * inner + in)] = {re.value(), im.value()};
        }
      }
    }
  }
}

bool has_nonfinite(const cdouble* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i].real()) || !std::isfinite(x[i].imag())) return true;
  return false;
}

}  // namespace kern
}  // namespace clab
