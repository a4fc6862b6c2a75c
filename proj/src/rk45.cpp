#include "clab/rk45.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace clab {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                 a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b* (5th-order weights minus the embedded 4th-order weights).
constexpr double e1 = b1 - 5179.0 / 57600, e3 = b3 - 7571.0 / 16695,
                 e4 = b4 - 393.0 / 640, e5 = b5 + 92097.0 / 339200,
                 e6 = b6 - 187.0 / 2100, e7 = -1.0 / 40;

constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;

}  // namespace

Rk45::Rk45(Rhs rhs, Rk45Options opts) : rhs_(std::move(rhs)), opts_(opts) {}

void Rk45::eval(double t, const cvec& y, cvec& out) {
  out.resize(y.size());
  rhs_(t, y, out);
  ++stats.rhs_evals;
  if (kern::has_nonfinite(out.data(), out.size()))
    throw NumericError("rk45: nonfinite right-hand side at t = " +
                       std::to_string(t));
}

void Rk45::start(double t0, cvec y0) {
  t_ = t0;
  y_ = std::move(y0);
  h_ = 0.0;
  have_f0_ = false;
  const std::size_t n = y_.size();
  f0_.assign(n, {});
  k2_.assign(n, {});
  k3_.assign(n, {});
  k4_.assign(n, {});
  k5_.assign(n, {});
  k6_.assign(n, {});
  f1_.assign(n, {});
  ytmp_.assign(n, {});
  ynew_.assign(n, {});
}

void Rk45::integrate_to(double t_end, const StepCap& step_cap,
                        const OnAccept& on_accept) {
  if (t_end < t_)
    throw DomainError("rk45: integrate_to target precedes current time");
  if (t_end == t_) return;
  const std::size_t n = y_.size();
  if (!have_f0_) {
    eval(t_, y_, f0_);
    have_f0_ = true;
  }

  while (t_ < t_end) {
    double remaining = t_end - t_;
    if (h_ <= 0.0) {
      // Conservative first step; the controller recovers quickly.
      double fnorm = std::sqrt(kern::norm_sq(f0_.data(), n));
      double ynorm = std::sqrt(kern::norm_sq(y_.data(), n));
      double scale = (fnorm > 0.0) ? 0.01 * std::max(ynorm, 1.0) / fnorm
                                   : remaining;
      h_ = std::min(scale, remaining);
    }
    double h = h_;
    if (step_cap) h = std::min(h, step_cap(t_));
    if (!(h > 0.0) || !std::isfinite(h))
      throw NumericError("rk45: step cap produced nonpositive step at t = " +
                         std::to_string(t_));
    bool last = false;
    if (h >= remaining * (1.0 - 1e-12)) {
      h = remaining;
      last = true;
    }
    if (h <= 64.0 * std::numeric_limits<double>::epsilon() *
                 std::max(std::abs(t_), std::abs(t_end)) &&
        !last)
      throw NumericError("rk45: step size underflow at t = " +
                         std::to_string(t_) + " (h = " + std::to_string(h) +
                         ")");
    if (stats.accepted + stats.rejected > opts_.max_steps)
      throw NumericError("rk45: exceeded max step count");

    // Stage evaluations.
    for (std::size_t i = 0; i < n; ++i) ytmp_[i] = y_[i] + h * a21 * f0_[i];
    eval(t_ + c2 * h, ytmp_, k2_);
    for (std::size_t i = 0; i < n; ++i)
      ytmp_[i] = y_[i] + h * (a31 * f0_[i] + a32 * k2_[i]);
    eval(t_ + c3 * h, ytmp_, k3_);
    for (std::size_t i = 0; i < n; ++i)
      ytmp_[i] = y_[i] + h * (a41 * f0_[i] + a42 * k2_[i] + a43 * k3_[i]);
    eval(t_ + c4 * h, ytmp_, k4_);
    for (std::size_t i = 0; i < n; ++i)
      ytmp_[i] = y_[i] + h * (a51 * f0_[i] + a52 * k2_[i] + a53 * k3_[i] +
                              a54 * k4_[i]);
    eval(t_ + c5 * h, ytmp_, k5_);
    for (std::size_t i = 0; i < n; ++i)
      ytmp_[i] = y_[i] + h * (a61 * f0_[i] + a62 * k2_[i] + a63 * k3_[i] +
                              a64 * k4_[i] + a65 * k5_[i]);
    eval(t_ + h, ytmp_, k6_);
    for (std::size_t i = 0; i < n; ++i)
      ynew_[i] = y_[i] + h * (b1 * f0_[i] + b3 * k3_[i] + b4 * k4_[i] +
                              b5 * k5_[i] + b6 * k6_[i]);
    const double t_new = last ? t_end : t_ + h;
    eval(t_new, ynew_, f1_);  // FSAL stage, doubles as the error stage

    // Scaled RMS error estimate.
    double errsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const cdouble err = h * (e1 * f0_[i] + e3 * k3_[i] + e4 * k4_[i] +
                               e5 * k5_[i] + e6 * k6_[i] + e7 * f1_[i]);
      const double sc =
          opts_.atol +
          opts_.rtol * std::max(std::abs(y_[i]), std::abs(ynew_[i]));
      const double r = std::abs(err) / sc;
      errsum += r * r;
    }
    const double err = std::sqrt(errsum / static_cast<double>(n));

    if (err <= 1.0) {
      const double t_prev = t_;
      t_ = t_new;
      std::swap(y_, ynew_);
      std::swap(f0_, f1_);
      ++stats.accepted;
      if (on_accept) on_accept(t_prev, t_, y_, f0_);
      double fac = (err > 0.0) ? 0.9 * std::pow(err, -0.2) : 5.0;
      fac = std::clamp(fac, 0.2, 5.0);
      h_ = h * fac;
    } else {
      ++stats.rejected;
      double fac = std::clamp(0.9 * std::pow(err, -0.2), 0.2, 0.9);
      h_ = h * fac;
    }
  }
}

}  // namespace clab
