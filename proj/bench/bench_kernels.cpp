// Timing harness for the dispatched (OpenMP) kernels against the serial
// reference implementations, plus a bitwise agreement check: the parallel
// path must reproduce the serial results exactly, not just approximately.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "clab/kernels.hpp"
#include "clab/rng.hpp"

using clab::cdouble;
using clab::cvec;

namespace {

cvec random_vec(std::size_t n, std::uint64_t stream) {
  cvec v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = cdouble(clab::normal01(42, stream, i, 0),
                   clab::normal01(42, stream, i, 1));
  return v;
}

double time_ms(const std::function<void()>& body, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) body();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

bool bits_equal(const cvec& a, const cvec& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(cdouble)) == 0;
}

void report(const char* name, double serial_ms, double par_ms, bool exact) {
  std::printf("%-18s serial %9.4f ms   dispatched %9.4f ms   x%5.2f   %s\n",
              name, serial_ms, par_ms, serial_ms / par_ms,
              exact ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (built without OpenMP)\n");
#endif

  {  // matvec, the integrator's hot operation
    const std::size_t n = 2048;
    const cvec A = random_vec(n * n, 1), x = random_vec(n, 2);
    cvec ys(n), yp(n);
    const double ts =
        time_ms([&] { clab::kern::serial::matvec(A.data(), x.data(),
                                                 ys.data(), n); },
                5);
    const double tp = time_ms(
        [&] { clab::kern::matvec(A.data(), x.data(), yp.data(), n); }, 5);
    report("matvec 2048", ts, tp, bits_equal(ys, yp));
  }

  {  // reductions
    const std::size_t n = 1 << 21;
    const cvec a = random_vec(n, 3), b = random_vec(n, 4);
    cdouble rs, rp;
    const double ts = time_ms(
        [&] { rs = clab::kern::serial::dot_conj(a.data(), b.data(), n); }, 20);
    const double tp =
        time_ms([&] { rp = clab::kern::dot_conj(a.data(), b.data(), n); }, 20);
    report("dot_conj 2^21", ts, tp, rs == rp);

    double ns = 0, np = 0;
    const double ts2 =
        time_ms([&] { ns = clab::kern::serial::norm_sq(a.data(), n); }, 20);
    const double tp2 =
        time_ms([&] { np = clab::kern::norm_sq(a.data(), n); }, 20);
    report("norm_sq 2^21", ts2, tp2, ns == np);
  }

  {  // elementwise update
    const std::size_t n = 1 << 21;
    const cvec x = random_vec(n, 5);
    cvec ys = random_vec(n, 6), yp = ys;
    const cdouble alpha(0.37, -0.11);
    const double ts = time_ms(
        [&] { clab::kern::serial::axpy(alpha, x.data(), ys.data(), n); }, 20);
    const double tp =
        time_ms([&] { clab::kern::axpy(alpha, x.data(), yp.data(), n); }, 20);
    report("axpy 2^21", ts, tp, bits_equal(ys, yp));
  }

  {  // subsystem contraction at a realistic slab geometry
    const std::size_t outer = 1, ds = 16, inner = 1 << 16;
    const cvec psi = random_vec(outer * ds * inner, 7);
    const cvec sub = random_vec(ds, 8);
    cvec os(outer * inner), op(outer * inner);
    const double ts = time_ms(
        [&] {
          clab::kern::serial::partial_inner(sub.data(), psi.data(), os.data(),
                                            outer, ds, inner);
        },
        10);
    const double tp = time_ms(
        [&] {
          clab::kern::partial_inner(sub.data(), psi.data(), op.data(), outer,
                                    ds, inner);
        },
        10);
    report("partial_inner", ts, tp, bits_equal(os, op));
  }

  return 0;
}
