#include "clab/analysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "clab/rk45.hpp"

namespace clab {

double ReducedDensityMatrix::trace() const {
  double tr = 0.0;
  for (int k = 0; k < basis.d; ++k) tr += at(k, k).real();
  return tr;
}

void ReducedDensityMatrix::validate(double expected_trace) const {
  const int d = basis.d;
  double asym = 0.0;
  for (int k = 0; k < d; ++k)
    for (int kp = 0; kp < d; ++kp)
      asym = std::max(asym, std::abs(at(k, kp) - std::conj(at(kp, k))));
  if (asym > 1e-10)
    throw DomainError("reduced density matrix not Hermitian (asymmetry " +
                      std::to_string(asym) + ")");
  if (std::abs(trace() - expected_trace) > 1e-9)
    throw DomainError("reduced density matrix trace " +
                      std::to_string(trace()) + " != expected " +
                      std::to_string(expected_trace));
  Eigen::MatrixXcd m(d, d);
  for (int k = 0; k < d; ++k)
    for (int kp = 0; kp < d; ++kp) m(k, kp) = at(k, kp);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m,
                                                     Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10)
    throw DomainError("reduced density matrix not positive semidefinite");
}

ReducedDensityMatrix reduced_density_matrix(const StateVector& psi,
                                            const PreferredBasis& basis) {
  const int s = basis.subsystem;
  if (s < 0 || s >= psi.partition.n_subsystems() ||
      basis.d != psi.partition.dim(s))
    throw DomainError("reduced_density_matrix: basis does not fit partition");
  const int d = basis.d;
  std::vector<cvec> phi;
  phi.reserve(d);
  for (int k = 0; k < d; ++k) phi.push_back(partial_inner(basis.col(k), psi, s));

  ReducedDensityMatrix out;
  out.subsystem = s;
  out.basis = basis;
  out.M.assign(static_cast<std::size_t>(d) * d, cdouble(0.0));
  // Hermitian by construction: compute the upper triangle, mirror, and keep
  // the diagonal exactly real.
  for (int k = 0; k < d; ++k) {
    out.M[static_cast<std::size_t>(k) * d + k] =
        kern::dot_conj(phi[k].data(), phi[k].data(), phi[k].size()).real();
    for (int kp = k + 1; kp < d; ++kp) {
      const cdouble v =
          kern::dot_conj(phi[k].data(), phi[kp].data(), phi[k].size());
      out.M[static_cast<std::size_t>(k) * d + kp] = v;
      out.M[static_cast<std::size_t>(kp) * d + k] = std::conj(v);
    }
  }
  return out;
}

double coherence_l1(const ReducedDensityMatrix& M) {
  const int d = M.basis.d;
  double sum = 0.0;
  for (int k = 0; k < d; ++k)
    for (int kp = 0; kp < d; ++kp)
      if (k != kp) sum += std::abs(M.at(k, kp));
  return sum;
}

double energy_identity_gap(const OperatorMatrix& H, const StateVector& psi,
                           const CollapseWindow& w, double t,
                           const std::vector<CollapseTarget>& targets,
                           double hbar) {
  const StateVector rhs =
      targets.empty() ? schrodinger_rhs(H, psi, hbar)
                      : multi_collapse_rhs(H, psi, w, t, targets, hbar);
  const cdouble lhs = cdouble(0.0, hbar) * inner(psi, rhs);
  const cdouble he = inner(psi, apply(H, psi));
  return std::abs(lhs - he);
}

AsymptoticFit fit_asymptotic_exponent(const std::vector<double>& t,
                                      const std::vector<double>& w,
                                      const CollapseWindow& win, double s_lo,
                                      double s_hi) {
  if (t.size() != w.size())
    throw FitError("fit_asymptotic_exponent: time/weight size mismatch");
  // Default fit interval: stay inside the asymptotic regime (the true rate
  // -gamma (1-f)/f deviates from the endpoint power law by ~f, i.e. ~2.5% at
  // s = 0.1 T for the standard window, ~0.6% at 0.05 T) and above the region
  // where exp(2 Lambda) leaves the representable range.
  if (s_lo <= 0.0) s_lo = std::max(win.eta * win.T, 2e-3 * win.T);
  if (s_hi <= 0.0) s_hi = 0.05 * win.T;
  if (!(s_lo < s_hi))
    throw FitError("fit_asymptotic_exponent: empty fit interval");

  std::vector<std::size_t> idx(t.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return t[a] < t[b]; });

  std::vector<double> ss, ww;
  for (std::size_t i : idx) {
    const double s = win.t_end() - t[i];
    if (s < s_lo || s > s_hi) continue;
    if (!(w[i] > 0.0) || !std::isfinite(w[i]))
      throw FitError("fit_asymptotic_exponent: nonpositive weight in range");
    ss.push_back(s);
    ww.push_back(w[i]);
  }

  // The weight is a squared magnitude, so the decay rate is half the log
  // derivative; the geometric midpoint is the exact attribution point for an
  // inverse-square rate law.
  std::vector<double> xs, ys;
  double rate_sum = 0.0;
  for (std::size_t i = 0; i + 1 < ss.size(); ++i) {
    const double dt = ss[i] - ss[i + 1];  // ss is decreasing in time order
    if (dt <= 0.0) continue;
    const double rate = 0.5 * (std::log(ww[i + 1]) - std::log(ww[i])) / dt;
    if (!std::isfinite(rate) || rate == 0.0) continue;
    xs.push_back(std::log(std::sqrt(ss[i] * ss[i + 1])));
    ys.push_back(std::log(std::abs(rate)));
    rate_sum += rate;
  }
  if (xs.size() < 8)
    throw FitError("fit_asymptotic_exponent: insufficient usable samples (" +
                   std::to_string(xs.size()) + " rate points, need >= 8)");

  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx <= 0.0)
    throw FitError("fit_asymptotic_exponent: degenerate abscissa");
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;

  AsymptoticFit fit;
  fit.beta_hat = -slope;
  fit.alpha_hat = (rate_sum < 0.0 ? -1.0 : 1.0) * std::exp(intercept);
  double ss_res = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (intercept + slope * xs[i]);
    ss_res += r * r;
  }
  fit.r_squared = syy > 1e-300 ? 1.0 - ss_res / syy : 1.0;
  fit.s_lo = s_lo;
  fit.s_hi = s_hi;
  fit.n_points = static_cast<int>(xs.size());
  return fit;
}

namespace {

// Integrate psi between two times under the active (collapse or Schrodinger)
// RHS, landing exactly on t1.  Drives the integrator directly so that the
// check also works on deliberately invalid windows, which integrate_window
// rejects up front.
StateVector march(const OperatorMatrix& H, const CollapseWindow& w,
                  const std::vector<CollapseTarget>& targets, double hbar,
                  const StateVector& y0, double t0, double t1, bool renorm,
                  double rtol, double atol) {
  const TensorPartition part = y0.partition;
  Rk45::Rhs rhs = [&](double t, const cvec& y, cvec& dy) {
    StateVector st(part, y);
    StateVector d = targets.empty()
                        ? schrodinger_rhs(H, st, hbar)
                        : multi_collapse_rhs(H, st, w, t, targets, hbar);
    dy = std::move(d.amps);
  };
  Rk45::StepCap cap = [&](double t) {
    if (targets.empty()) return std::numeric_limits<double>::infinity();
    double c = 0.1 * std::max(w.t_end() - t, 1e-300);
    const double tc = std::clamp(t, w.tau, w.cutoff());
    const double li = std::abs(lambda_inv(w, tc));
    if (li > 0.0) c = std::min(c, 0.25 / li);
    return c;
  };
  Rk45::OnAccept on_accept = [&](double, double, cvec& y, cvec&) {
    if (!renorm) return;
    const double nrm = std::sqrt(kern::norm_sq(y.data(), y.size()));
    if (nrm > 0.0) kern::scale(1.0 / nrm, y.data(), y.size());
  };
  Rk45Options opts;
  opts.rtol = rtol;
  opts.atol = atol;
  Rk45 integ(rhs, opts);
  integ.start(t0, y0.amps);
  integ.integrate_to(t1, cap, on_accept);
  return StateVector(part, integ.state());
}

StateVector active_rhs(const OperatorMatrix& H, const CollapseWindow& w,
                       const std::vector<CollapseTarget>& targets, double hbar,
                       const StateVector& psi, double t) {
  return targets.empty() ? schrodinger_rhs(H, psi, hbar)
                         : multi_collapse_rhs(H, psi, w, t, targets, hbar);
}

// One-sided 4-point first derivative of the RHS samples; `into` points away
// from the boundary sample f[0] with spacing h.
cvec stencil_derivative(const std::array<cvec, 4>& f, double h, double into) {
  const double c[4] = {-11.0, 18.0, -9.0, 2.0};
  cvec out(f[0].size(), cdouble(0.0));
  for (int k = 0; k < 4; ++k)
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] += (c[k] / (6.0 * h * into)) * f[k][i];
  return out;
}

double vec_norm(const cvec& v) {
  return std::sqrt(kern::norm_sq(v.data(), v.size()));
}

}  // namespace

ContinuityReport continuity_check(const OperatorMatrix& H,
                                  const StateVector& psi_at_tau,
                                  const CollapseWindow& w,
                                  const std::vector<CollapseTarget>& targets,
                                  WindowBoundary boundary, double h,
                                  double hbar) {
  if (h <= 0.0) h = 1e-5 * w.T;
  if (kern::has_nonfinite(psi_at_tau.amps.data(), psi_at_tau.amps.size()))
    throw DomainError("continuity_check: nonfinite state");
  for (const auto& tg : targets) tg.validate(psi_at_tau.partition);

  // The stencil marches run without per-step renormalization: rescaling
  // between sample points injects step-scale jitter that the 1/h stencil
  // amplifies.
  const double rtol = 1e-12, atol = 1e-15;
  const std::vector<CollapseTarget> none;

  std::array<cvec, 4> f_window;  // RHS on the window side, index 0 at boundary
  std::array<cvec, 4> f_outside;
  double t_b = 0.0;
  StateVector at_boundary_outside = psi_at_tau;

  if (boundary == WindowBoundary::start) {
    t_b = w.tau;
    // Window side: forward from tau.
    StateVector y = psi_at_tau;
    f_window[0] = active_rhs(H, w, targets, hbar, y, t_b).amps;
    for (int k = 1; k < 4; ++k) {
      y = march(H, w, targets, hbar, y, t_b + (k - 1) * h, t_b + k * h, false,
                rtol, atol);
      f_window[k] = active_rhs(H, w, targets, hbar, y, t_b + k * h).amps;
    }
    // Outside: Schrodinger, marched backward in time.  The negated
    // Hamiltonian turns the march into a forward integration in the
    // auxiliary variable sigma = tau - t (the RHS is autonomous).
    StateVector z = psi_at_tau;
    f_outside[0] = schrodinger_rhs(H, z, hbar).amps;
    cvec neg(H.entries.size());
    for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -H.entries[i];
    const OperatorMatrix Hneg(H.partition, std::move(neg), H.hermitian_flag);
    for (int k = 1; k < 4; ++k) {
      z = march(Hneg, w, none, hbar, z, (k - 1) * h, k * h, false, rtol, atol);
      f_outside[k] = schrodinger_rhs(H, z, hbar).amps;
    }
  } else {
    t_b = targets.empty() ? w.t_end() : w.cutoff();
    // Long march up to the edge of the stencil region (renormalizing as the
    // production integrator does), then the final three fine segments clean.
    StateVector y = march(H, w, targets, hbar, psi_at_tau, w.tau, t_b - 3 * h,
                          true, 1e-10, 1e-13);
    const double nrm = y.norm();
    if (nrm > 0.0) kern::scale(1.0 / nrm, y.amps.data(), y.amps.size());
    f_window[3] = active_rhs(H, w, targets, hbar, y, t_b - 3 * h).amps;
    for (int k = 2; k >= 0; --k) {
      y = march(H, w, targets, hbar, y, t_b - (k + 1) * h, t_b - k * h, false,
                rtol, atol);
      f_window[k] = active_rhs(H, w, targets, hbar, y, t_b - k * h).amps;
    }
    // Outside: hand off through the projection, then Schrodinger forward.
    StateVector z = targets.empty() ? y : finalize_collapse(y, targets);
    at_boundary_outside = z;
    f_outside[0] = schrodinger_rhs(H, z, hbar).amps;
    for (int k = 1; k < 4; ++k) {
      z = march(H, w, none, hbar, z, t_b + (k - 1) * h, t_b + k * h, false,
                rtol, atol);
      f_outside[k] = schrodinger_rhs(H, z, hbar).amps;
    }
  }

  // Second derivative of psi = first derivative of the RHS on each side.
  const double into_window = (boundary == WindowBoundary::start) ? 1.0 : -1.0;
  const cvec d_window = stencil_derivative(f_window, h, into_window);
  const cvec d_outside = stencil_derivative(f_outside, h, -into_window);

  ContinuityReport rep;
  rep.h = h;
  rep.left_norm = vec_norm(boundary == WindowBoundary::start ? d_outside
                                                             : d_window);
  rep.right_norm = vec_norm(boundary == WindowBoundary::start ? d_window
                                                              : d_outside);
  cvec diff(d_window.size());
  for (std::size_t i = 0; i < diff.size(); ++i)
    diff[i] = d_window[i] - d_outside[i];
  rep.mismatch =
      vec_norm(diff) / std::max({rep.left_norm, rep.right_norm, 1e-30});
  return rep;
}

double factorization_check(const OperatorMatrix& H1, const OperatorMatrix& Henv,
                           const StateVector& psi1, const StateVector& chi,
                           const CollapseWindow& w, int k_tilde,
                           const PreferredBasis& basis1, int n_grid,
                           const OperatorMatrix* H_int,
                           const IntegratorOptions& opts) {
  if (n_grid < 2) throw DomainError("factorization_check: n_grid < 2");
  const OperatorMatrix I1 = OperatorMatrix::identity(H1.partition);
  const OperatorMatrix Ienv = OperatorMatrix::identity(Henv.partition);
  OperatorMatrix Hc = op_add(op_tensor(H1, Ienv), op_tensor(I1, Henv));
  if (H_int) Hc = op_add(Hc, *H_int);

  const StateVector parts[2] = {psi1, chi};
  const StateVector psi0 = tensor_state(parts);

  CollapseTarget target;
  target.subsystem = basis1.subsystem;
  target.basis = basis1;
  target.k_tilde = k_tilde;

  std::vector<double> grid(static_cast<std::size_t>(n_grid));
  const double t1 = w.cutoff();
  for (int i = 0; i < n_grid; ++i)
    grid[static_cast<std::size_t>(i)] =
        w.tau + (t1 - w.tau) * i / (n_grid - 1);

  const auto comp = integrate_window(Hc, psi0, w, {target}, grid, opts);
  const auto sub = integrate_window(H1, psi1, w, {target}, grid, opts);
  const auto env = integrate_window(Henv, chi, w, {}, grid, opts);

  // Match samples by time; the runs may append their own stop points.
  auto find_at = [&](const std::vector<TrajectorySample>& samples,
                     double t) -> const TrajectorySample& {
    for (const auto& s : samples)
      if (std::abs(s.t - t) <= 1e-12 * (1.0 + std::abs(t))) return s;
    throw NumericError("factorization_check: missing grid sample");
  };

  double max_dev = 0.0;
  for (double g : grid) {
    const auto& sc = find_at(comp.samples, g);
    const auto& s1 = find_at(sub.samples, g);
    const auto& se = find_at(env.samples, g);
    const StateVector fac_parts[2] = {s1.psi, se.psi};
    const StateVector prod = tensor_state(fac_parts);
    cvec diff(prod.amps.size());
    for (std::size_t i = 0; i < diff.size(); ++i)
      diff[i] = sc.psi.amps[i] - prod.amps[i];
    max_dev = std::max(max_dev, vec_norm(diff));
  }
  return max_dev;
}

}  // namespace clab
