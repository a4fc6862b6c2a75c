#pragma once

#include <functional>

#include "clab/errors.hpp"
#include "clab/kernels.hpp"

namespace clab {

struct Rk45Options {
  double rtol = 1e-9;
  double atol = 1e-12;
  std::size_t max_steps = 2'000'000;
  double h0 = 0.0;  // 0: pick automatically
};

struct Rk45Stats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evals = 0;
};

// Adaptive embedded Dormand-Prince 5(4) pair with FSAL, for complex vector
// ODEs dy/dt = rhs(t, y).  Integration is driven in segments via
// integrate_to, which always lands exactly on the requested time; callers
// sample by stopping at their grid points instead of interpolating.
//
// `step_cap(t)` bounds the next step taken from time t (return +inf for no
// bound); the collapse dynamics uses it to stay clear of the window-end
// singularity.  `on_accept` runs after each accepted step and may adjust the
// state in place (e.g. renormalization); the stored derivative is rescaled by
// the caller if needed via the exposed reference.
class Rk45 {
 public:
  using Rhs = std::function<void(double, const cvec&, cvec&)>;
  using StepCap = std::function<double(double)>;
  // (t_prev, t_now, y mutable, f(t_now, y) mutable)
  using OnAccept = std::function<void(double, double, cvec&, cvec&)>;

  Rk45(Rhs rhs, Rk45Options opts);

  void start(double t0, cvec y0);
  void integrate_to(double t_end, const StepCap& step_cap,
                    const OnAccept& on_accept);

  double time() const { return t_; }
  const cvec& state() const { return y_; }

  Rk45Stats stats;

 private:
  void eval(double t, const cvec& y, cvec& out);

  Rhs rhs_;
  Rk45Options opts_;
  double t_ = 0.0;
  double h_ = 0.0;
  bool have_f0_ = false;
  cvec y_, f0_;
  cvec k2_, k3_, k4_, k5_, k6_, f1_, ytmp_, ynew_;
};

}  // namespace clab
