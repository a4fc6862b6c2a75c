#include "clab/window.hpp"

#include <cmath>
#include <limits>

namespace clab {

namespace {
constexpr double kPi = 3.14159265358979323846;

// Allow boundary evaluations to sit a few ulps past the cutoff: integrator
// endpoints land there after roundoff.
double time_slack(const CollapseWindow& w) {
  return 32.0 * std::numeric_limits<double>::epsilon() *
         (std::abs(w.tau) + w.T);
}
}  // namespace

CollapseWindow::CollapseWindow(double tau_, double T_,
                               std::vector<double> coeffs_, double gamma_,
                               double eta_)
    : tau(tau_), T(T_), coeffs(std::move(coeffs_)), gamma(gamma_), eta(eta_) {
  if (!(T > 0.0)) throw DomainError("CollapseWindow: T must be > 0");
  if (!(gamma > 0.0)) throw DomainError("CollapseWindow: gamma must be > 0");
  if (!(eta > 0.0) || eta > 0.1)
    throw DomainError("CollapseWindow: eta must lie in (0, 0.1]");
  if (coeffs.empty()) throw DomainError("CollapseWindow: no coefficients");
  for (double d : coeffs)
    if (!std::isfinite(d))
      throw DomainError("CollapseWindow: nonfinite coefficient");
}

CollapseWindow CollapseWindow::standard(double tau_, double T_, double gamma_,
                                        double eta_) {
  if (gamma_ <= 0.0) gamma_ = 1.0 / T_;
  return CollapseWindow(tau_, T_, {0.5, 0.5}, gamma_, eta_);
}

bool CollapseWindow::is_standard_coeffs() const {
  return coeffs.size() == 2 && coeffs[0] == 0.5 && coeffs[1] == 0.5;
}

double f_eval(const CollapseWindow& w, double t) {
  const double x = kPi * (t - w.tau) / w.T;
  double f = 0.0;
  for (std::size_t n = 0; n < w.coeffs.size(); ++n)
    f += w.coeffs[n] * std::cos(static_cast<double>(n) * x);
  return f;
}

double f_prime(const CollapseWindow& w, double t) {
  const double x = kPi * (t - w.tau) / w.T;
  double fp = 0.0;
  for (std::size_t n = 1; n < w.coeffs.size(); ++n)
    fp -= w.coeffs[n] * (static_cast<double>(n) * kPi / w.T) *
          std::sin(static_cast<double>(n) * x);
  return fp;
}

WindowReport validate_window(const CollapseWindow& w, int grid_points) {
  WindowReport rep;
  double s = 0.0, alt = 0.0;
  for (std::size_t n = 0; n < w.coeffs.size(); ++n) {
    s += w.coeffs[n];
    alt += (n % 2 == 0 ? 1.0 : -1.0) * w.coeffs[n];
  }
  rep.sum_error = std::abs(s - 1.0);
  rep.alt_sum_error = std::abs(alt);
  if (rep.sum_error > 1e-12)
    rep.violations.push_back("f(tau) = 1 violated: sum of coefficients is " +
                             std::to_string(s));
  if (rep.alt_sum_error > 1e-12)
    rep.violations.push_back(
        "f(tau+T) = 0 violated: alternating coefficient sum is " +
        std::to_string(alt));

  // Positivity scan over [tau, tau + T - eta T].  lambda_inv is finite and
  // continuous inside the window exactly when f stays positive there.
  rep.min_interior_f = std::numeric_limits<double>::infinity();
  rep.min_interior_t = w.tau;
  const double span = w.T * (1.0 - w.eta);
  for (int i = 0; i < grid_points; ++i) {
    const double t =
        w.tau + span * static_cast<double>(i) / (grid_points - 1);
    const double f = f_eval(w, t);
    if (f < rep.min_interior_f) {
      rep.min_interior_f = f;
      rep.min_interior_t = t;
    }
  }
  if (!(rep.min_interior_f > 0.0))
    rep.violations.push_back(
        "interior positivity violated: f(" +
        std::to_string(rep.min_interior_t) + ") = " +
        std::to_string(rep.min_interior_f));

  rep.derivative_conditions_analytic = true;  // f' is a pure sine series
  rep.valid = rep.violations.empty();
  return rep;
}

double lambda_inv(const CollapseWindow& w, double t) {
  const double slack = time_slack(w);
  if (t < w.tau - slack || t > w.cutoff() + slack)
    throw DomainError("lambda_inv: t outside [tau, tau + T - eta T]");
  t = std::min(std::max(t, w.tau), w.cutoff());
  const double f = f_eval(w, t);
  if (!(f > 0.0))
    throw NumericError("lambda_inv: f(t) <= 0 inside the window (invalid "
                       "coefficients?)");
  return w.gamma * (f - 1.0) / f;
}

double lambda_target_inv(const CollapseWindow& w, double t, double p) {
  if (!(p > 0.0) || p > 1.0 + 1e-9)
    throw DomainError("lambda_target_inv: weight p must lie in (0, 1]");
  return lambda_inv(w, t) * (1.0 - 1.0 / p);
}

namespace {

// Adaptive Simpson with absolute tolerance; plain recursion with panel
// tolerance splitting.
template <class F>
double simpson(F&& f, double a, double fa, double b, double fb, double fm,
               double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0)
    throw NumericError("log_survival: quadrature failed to converge; "
                       "achieved " +
                       std::to_string(std::abs(delta)));
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson(f, a, fa, m, fm, flm, left, 0.5 * tol, depth - 1) +
         simpson(f, m, fm, b, fb, frm, right, 0.5 * tol, depth - 1);
}

template <class F>
double integrate(F&& f, double a, double b, double tol) {
  if (a == b) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson(f, a, fa, b, fb, fm, whole, tol, 60);
}

}  // namespace

double log_survival(const CollapseWindow& w, double t) {
  const double slack = time_slack(w);
  if (t < w.tau - slack || t > w.cutoff() + slack)
    throw DomainError("log_survival: t outside [tau, tau + T - eta T]");
  t = std::min(std::max(t, w.tau), w.cutoff());
  if (w.is_standard_coeffs()) {
    // f = cos^2(pi (t-tau)/2T) gives
    //   Lambda = gamma [ (t - tau) - (2T/pi) tan(pi (t - tau) / 2T) ].
    const double x = kPi * (t - w.tau) / (2.0 * w.T);
    return w.gamma * ((t - w.tau) - (2.0 * w.T / kPi) * std::tan(x));
  }
  return integrate([&w](double u) { return lambda_inv(w, u); }, w.tau, t,
                   1e-10);
}

}  // namespace clab
