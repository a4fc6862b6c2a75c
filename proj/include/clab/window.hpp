#pragma once

#include <string>
#include <vector>

#include "clab/errors.hpp"

namespace clab {

// Collapse window: the cyclic coefficient family
//   f(t) = sum_n D_n cos(n pi (t - tau) / T)
// together with the rate scale gamma and the endpoint cutoff fraction eta.
// The rate function lambda^-1(t) = gamma (f - 1)/f diverges at t = tau + T,
// so the dynamics only ever evaluates it up to the cutoff tau + T - eta T.
struct CollapseWindow {
  double tau;
  double T;
  std::vector<double> coeffs;  // D_0 .. D_N, real
  double gamma;
  double eta;

  CollapseWindow(double tau_, double T_, std::vector<double> coeffs_,
                 double gamma_, double eta_ = 1e-3);

  // Minimal valid window: D = [1/2, 1/2], i.e. f = cos^2(pi (t-tau) / 2T).
  // gamma defaults to 1/T.
  static CollapseWindow standard(double tau_, double T_, double gamma_ = 0.0,
                                 double eta_ = 1e-3);

  double t_end() const { return tau + T; }
  double cutoff() const { return tau + T - eta * T; }
  bool is_standard_coeffs() const;
};

// Validation outcome; `violations` is empty exactly when `valid`.
// The two derivative boundary conditions hold identically for any cosine
// series, so they are reported as analytic rather than measured.
struct WindowReport {
  bool valid = false;
  double sum_error = 0.0;      // |sum_n D_n - 1|
  double alt_sum_error = 0.0;  // |sum_n (-1)^n D_n|
  double min_interior_f = 0.0;
  double min_interior_t = 0.0;
  bool derivative_conditions_analytic = true;
  std::vector<std::string> violations;
};

double f_eval(const CollapseWindow& w, double t);
double f_prime(const CollapseWindow& w, double t);

WindowReport validate_window(const CollapseWindow& w, int grid_points = 10000);

// gamma (f(t) - 1) / f(t); only defined up to the cutoff.
double lambda_inv(const CollapseWindow& w, double t);

// lambda_inv(t) (1 - 1/p) for a target of weight p in (0, 1].
double lambda_target_inv(const CollapseWindow& w, double t, double p);

// Lambda(t) = int_tau^t lambda_inv dt'.  Closed form for the standard
// coefficients, adaptive quadrature (abs tol 1e-10) otherwise.
double log_survival(const CollapseWindow& w, double t);

}  // namespace clab
