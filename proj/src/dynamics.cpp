#include "clab/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "clab/rk45.hpp"

namespace clab {

void CollapseTarget::validate(const TensorPartition& p) const {
  const int ds = p.dim(subsystem);
  if (basis.subsystem != subsystem)
    throw DomainError("CollapseTarget: basis tagged for subsystem " +
                      std::to_string(basis.subsystem) + ", target is " +
                      std::to_string(subsystem));
  if (basis.d != ds)
    throw DomainError("CollapseTarget: basis dimension " +
                      std::to_string(basis.d) + " != subsystem dimension " +
                      std::to_string(ds));
  if (k_tilde < 0 || k_tilde >= ds)
    throw DomainError("CollapseTarget: k_tilde out of range");
  const double defect = basis.max_unitarity_defect();
  if (defect > 1e-10)
    throw DomainError("CollapseTarget: basis unitarity defect " +
                      std::to_string(defect) + " > 1e-10");
}

StateVector schrodinger_rhs(const OperatorMatrix& H, const StateVector& psi,
                            double hbar) {
  StateVector out = apply(H, psi);
  kern::scale(cdouble{0.0, -1.0 / hbar}, out.amps.data(), out.amps.size());
  return out;
}

namespace {

// Preprocessed per-target data for the hot path.
struct TargetSlab {
  TensorPartition::Slab sl;
  std::span<const cdouble> u;  // selected basis column
  cvec phi;                    // conditional-state buffer
  cvec proj;                   // embed buffer (full dimension)
};

std::vector<TargetSlab> make_slabs(const TensorPartition& p,
                                   const std::vector<CollapseTarget>& targets) {
  std::set<int> seen;
  std::vector<TargetSlab> out;
  for (const auto& tg : targets) {
    tg.validate(p);
    if (!seen.insert(tg.subsystem).second)
      throw DomainError("collapse targets overlap on subsystem " +
                        std::to_string(tg.subsystem));
    TargetSlab ts;
    ts.sl = p.slab(tg.subsystem);
    ts.u = tg.basis.col(tg.k_tilde);
    ts.phi.resize(ts.sl.outer * ts.sl.inner);
    ts.proj.resize(p.total_dim);
    out.push_back(std::move(ts));
  }
  return out;
}

// out = lam*(m*psi - sum_j proj_j/p_j) + (1/i hbar) H psi.  hpsi receives the
// bare H psi product.  Throws DegenerateTarget when a weight is below floor.
void collapse_rhs_into(const OperatorMatrix& H, const cvec& psi, double lam,
                       std::vector<TargetSlab>& slabs, double hbar,
                       double floor, cvec& hpsi, cvec& out) {
  const std::size_t n = psi.size();
  hpsi.resize(n);
  out.resize(n);
  kern::matvec(H.entries.data(), psi.data(), hpsi.data(), n);
  const cdouble minus_i_over_hbar{0.0, -1.0 / hbar};
  for (std::size_t i = 0; i < n; ++i) out[i] = minus_i_over_hbar * hpsi[i];
  if (slabs.empty()) return;
  const double m = static_cast<double>(slabs.size());
  kern::axpy(lam * m, psi.data(), out.data(), n);
  for (auto& ts : slabs) {
    kern::partial_inner(ts.u.data(), psi.data(), ts.phi.data(), ts.sl.outer,
                        ts.sl.sub, ts.sl.inner);
    const double p = kern::norm_sq(ts.phi.data(), ts.phi.size());
    if (!(p >= floor))
      throw DegenerateTarget("collapse target weight " + std::to_string(p) +
                             " below floor " + std::to_string(floor));
    kern::embed_product(ts.u.data(), ts.phi.data(), ts.proj.data(), ts.sl.outer,
                        ts.sl.sub, ts.sl.inner);
    kern::axpy(-lam / p, ts.proj.data(), out.data(), n);
  }
}

// Rescale to unit norm; one Newton correction pass keeps the compensated
// norm^2 within an ulp of 1, which the per-step identity check needs (its
// residue is amplified by |lambda_inv|).
void renormalize_exact(cvec& y) {
  double s = kern::norm_sq(y.data(), y.size());
  if (!(s > 0.0)) throw NumericError("renormalize: vanished state norm");
  kern::scale(1.0 / std::sqrt(s), y.data(), y.size());
  for (int pass = 0; pass < 2; ++pass) {
    s = kern::norm_sq(y.data(), y.size());
    const double d = s - 1.0;
    if (std::abs(d) <= 2.0 * std::numeric_limits<double>::epsilon()) break;
    kern::scale(1.0 - 0.5 * d, y.data(), y.size());
  }
}

}  // namespace

StateVector collapse_rhs(const OperatorMatrix& H, const StateVector& psi,
                         const CollapseWindow& w, double t,
                         const CollapseTarget& target, double hbar,
                         double floor) {
  return multi_collapse_rhs(H, psi, w, t, {target}, hbar, floor);
}

StateVector multi_collapse_rhs(const OperatorMatrix& H, const StateVector& psi,
                               const CollapseWindow& w, double t,
                               const std::vector<CollapseTarget>& targets,
                               double hbar, double floor) {
  if (!(H.partition == psi.partition))
    throw DomainError("collapse rhs: operator and state partitions differ");
  auto slabs = make_slabs(psi.partition, targets);
  const double lam = targets.empty() ? 0.0 : lambda_inv(w, t);
  cvec hpsi, out;
  collapse_rhs_into(H, psi.amps, lam, slabs, hbar, floor, hpsi, out);
  return StateVector(psi.partition, std::move(out));
}

StateVector finalize_collapse(const StateVector& psi,
                              const std::vector<CollapseTarget>& targets,
                              double floor) {
  auto slabs = make_slabs(psi.partition, targets);
  cvec cur = psi.amps;
  for (auto& ts : slabs) {
    kern::partial_inner(ts.u.data(), cur.data(), ts.phi.data(), ts.sl.outer,
                        ts.sl.sub, ts.sl.inner);
    kern::embed_product(ts.u.data(), ts.phi.data(), cur.data(), ts.sl.outer,
                        ts.sl.sub, ts.sl.inner);
  }
  const double n = std::sqrt(kern::norm_sq(cur.data(), cur.size()));
  if (!(n >= floor))
    throw CollapseFailed("finalize_collapse: projected norm " +
                         std::to_string(n) +
                         " below floor; target weight vanished");
  kern::scale(1.0 / n, cur.data(), cur.size());
  return StateVector(psi.partition, std::move(cur));
}

IntegrationResult integrate_window(const OperatorMatrix& H,
                                   const StateVector& psi0,
                                   const CollapseWindow& w,
                                   const std::vector<CollapseTarget>& targets,
                                   const std::vector<double>& grid,
                                   const IntegratorOptions& opts) {
  if (!(H.partition == psi0.partition))
    throw DomainError("integrate_window: operator/state partition mismatch");
  {
    const double n0 = psi0.norm();
    if (std::abs(n0 - 1.0) > 1e-6)
      throw DomainError("integrate_window: initial state norm " +
                        std::to_string(n0) + " is not 1");
  }
  {
    const WindowReport rep = validate_window(w);
    if (!rep.valid) {
      std::string msg = "integrate_window: invalid window:";
      for (const auto& v : rep.violations) msg += " " + v;
      throw DomainError(msg);
    }
  }
  auto slabs = make_slabs(psi0.partition, targets);
  const bool collapsing = !targets.empty();
  const double t_stop = collapsing ? w.cutoff() : w.t_end();

  // Observation basis for sample weights.
  const PreferredBasis obs_basis =
      collapsing ? targets[0].basis
                 : PreferredBasis::identity(0, psi0.partition.dim(0));
  const auto obs_sl = psi0.partition.slab(obs_basis.subsystem);

  cvec hpsi_buf, gap_rhs, gap_hpsi;
  Rk45Options ro;
  ro.rtol = opts.rtol;
  ro.atol = opts.atol;
  ro.max_steps = opts.max_steps;
  Rk45 rk(
      [&](double t, const cvec& y, cvec& out) {
        const double lam = collapsing ? lambda_inv(w, t) : 0.0;
        collapse_rhs_into(H, y, lam, slabs, opts.hbar, opts.target_floor,
                          hpsi_buf, out);
      },
      ro);
  rk.start(w.tau, psi0.amps);

  IntegrationResult res{StateVector(psi0), std::nullopt, {}, 0, 0, 0.0, 0.0,
                        0.0};

  auto step_cap = [&](double t) {
    if (!collapsing) return std::numeric_limits<double>::infinity();
    double cap = opts.endpoint_frac * (w.t_end() - t);
    const double lam = lambda_inv(w, t);
    if (lam != 0.0) cap = std::min(cap, opts.stiff_limit / std::abs(lam));
    return cap;
  };

  auto on_accept = [&](double, double t, cvec& y, cvec& f) {
    const double s = kern::norm_sq(y.data(), y.size());
    res.max_norm_drift =
        std::max(res.max_norm_drift, std::abs(std::sqrt(s) - 1.0));
    if (opts.renormalize) renormalize_exact(y);
    if (opts.record_identity_gap || opts.renormalize) {
      // Fresh derivative at the (possibly renormalized) accepted state; also
      // replaces the FSAL stage so the next step starts consistent.
      const double lam = collapsing ? lambda_inv(w, t) : 0.0;
      collapse_rhs_into(H, y, lam, slabs, opts.hbar, opts.target_floor,
                        gap_hpsi, f);
      if (opts.record_identity_gap) {
        const cdouble lhs =
            cdouble{0.0, opts.hbar} *
            kern::dot_conj(y.data(), f.data(), y.size());
        const cdouble rhs_e =
            kern::dot_conj(y.data(), gap_hpsi.data(), y.size());
        res.max_identity_gap =
            std::max(res.max_identity_gap, std::abs(lhs - rhs_e));
      }
    }
  };

  // Stop points: sorted grid times clamped into [tau, t_stop], then t_stop.
  std::vector<double> stops(grid);
  for (double& g : stops) g = std::clamp(g, w.tau, t_stop);
  std::sort(stops.begin(), stops.end());

  auto record_sample = [&](double t) {
    TrajectorySample smp{t, StateVector(psi0.partition, rk.state()), {}, 0.0,
                         0.0};
    smp.norm = std::sqrt(kern::norm_sq(rk.state().data(), rk.state().size()));
    cvec phi(obs_sl.outer * obs_sl.inner);
    smp.weights.resize(obs_basis.d);
    for (int k = 0; k < obs_basis.d; ++k) {
      kern::partial_inner(obs_basis.col(k).data(), rk.state().data(),
                          phi.data(), obs_sl.outer, obs_sl.sub, obs_sl.inner);
      smp.weights[k] = kern::norm_sq(phi.data(), phi.size());
    }
    cvec hp(rk.state().size());
    kern::matvec(H.entries.data(), rk.state().data(), hp.data(),
                 rk.state().size());
    smp.energy =
        kern::dot_conj(rk.state().data(), hp.data(), rk.state().size()).real();
    res.samples.push_back(std::move(smp));
  };

  for (double g : stops) {
    rk.integrate_to(g, step_cap, on_accept);
    record_sample(g);
  }
  rk.integrate_to(t_stop, step_cap, on_accept);

  res.n_accepted = rk.stats.accepted;
  res.n_rejected = rk.stats.rejected;

  if (collapsing) {
    StateVector cutoff_state(psi0.partition, rk.state());
    // Off-target weight, summed per target over the non-selected columns;
    // computed directly (no 1 - p cancellation).
    double worst = 0.0;
    for (std::size_t j = 0; j < slabs.size(); ++j) {
      const auto& tg = targets[j];
      const auto& sl = slabs[j].sl;
      cvec phi(sl.outer * sl.inner);
      kern::CompensatedSum off;
      for (int k = 0; k < tg.basis.d; ++k) {
        if (k == tg.k_tilde) continue;
        kern::partial_inner(tg.basis.col(k).data(), cutoff_state.amps.data(),
                            phi.data(), sl.outer, sl.sub, sl.inner);
        off.add(kern::norm_sq(phi.data(), phi.size()));
      }
      worst = std::max(worst, off.value());
    }
    res.residual_at_cutoff = worst;
    res.final_state = finalize_collapse(cutoff_state, targets, opts.target_floor);
    res.at_cutoff = std::move(cutoff_state);
  } else {
    res.final_state = StateVector(psi0.partition, rk.state());
  }
  return res;
}

ScalarOracleResult scalar_oracle(double alpha, double beta, cdouble source,
                                 double hbar, std::vector<double> s_grid) {
  if (!(alpha < 0.0))
    throw DomainError("scalar_oracle: alpha must be negative (decaying mode)");
  if (!(beta >= 1.0)) throw DomainError("scalar_oracle: beta must be >= 1");
  if (s_grid.size() < 2)
    throw DomainError("scalar_oracle: need at least two grid points");
  for (std::size_t i = 0; i < s_grid.size(); ++i) {
    if (!(s_grid[i] > 0.0))
      throw DomainError("scalar_oracle: s grid must be positive");
    if (i > 0 && !(s_grid[i] < s_grid[i - 1]))
      throw DomainError("scalar_oracle: s grid must be strictly decreasing");
  }

  ScalarOracleResult out;
  out.s_grid = s_grid;
  out.numeric.resize(s_grid.size());
  out.closed_form.resize(s_grid.size());

  const cdouble i_over_hbar{0.0, 1.0 / hbar};
  auto closed = [&](double s) -> cdouble {
    if (beta == 1.0) {
      // i hbar c = -source (alpha+1)^-1 s  (the particular linear solution)
      return -source / (alpha + 1.0) * s / cdouble{0.0, hbar};
    }
    // Source-free survival proportionality, normalized at the first point.
    const double s0 = s_grid.front();
    const double expo = alpha / (beta - 1.0) *
                        (std::pow(s, 1.0 - beta) - std::pow(s0, 1.0 - beta));
    return std::exp(expo);
  };

  // Integrate in s (decreasing t -> increasing integration variable sigma =
  // s0 - s is avoided; we integrate dc/ds directly with negative direction
  // mapped to a forward run in x = -s).
  // dc/dt = lambda c + source/(i hbar), lambda = alpha s^-beta, ds = -dt:
  //   dc/ds = -alpha s^-beta c + (i/hbar) source.
  // Forward in x = -s from x0 = -s_grid[0]:
  //   dc/dx = alpha (-x)^-beta c - (i/hbar) source.
  Rk45Options ro;
  ro.rtol = 1e-10;
  ro.atol = 1e-14;
  Rk45 rk(
      [&](double x, const cvec& y, cvec& out_rhs) {
        const double s = -x;
        out_rhs.resize(1);
        out_rhs[0] = alpha * std::pow(s, -beta) * y[0] - i_over_hbar * source;
      },
      ro);

  const cdouble c0 = (beta == 1.0) ? closed(s_grid.front()) : cdouble{1.0, 0.0};
  rk.start(-s_grid.front(), {c0});
  out.numeric.front() = c0;
  out.closed_form.front() = closed(s_grid.front());
  auto cap = [&](double x) { return 0.5 * (-x); };  // stay clear of s = 0
  for (std::size_t i = 1; i < s_grid.size(); ++i) {
    rk.integrate_to(-s_grid[i], cap, nullptr);
    out.numeric[i] = rk.state()[0];
    out.closed_form[i] = closed(s_grid[i]);
  }
  return out;
}

}  // namespace clab
